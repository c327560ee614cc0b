//! Kummer's confluent hypergeometric function `M(1/2, 3/2, κ)`, the Watson
//! normalizer on the 2-sphere, together with the Kummer ratio
//! `q(κ) = M'(κ) / M(κ)` and its derivative.
//!
//! For `κ <= 50` the defining power series is summed with a term-ratio
//! recurrence; above that the large-argument asymptotic expansion
//! `M ~ e^κ / (2κ) · Σ_s (1/2)_s κ^{-s}` is used in log form. Both branches
//! agree to ~1e-15 relative at the crossover.

use crate::scalar::Scalar;

const SERIES_LIMIT: f64 = 50.0;
const MAX_TERMS: usize = 500;
const SERIES_REL_TOL: f64 = 1e-14;

/// Value, first and second derivative sums of the power series, unscaled.
fn series<S: Scalar>(kappa: S) -> (S, S, S) {
    // M   = Σ c_j / (2j+1),  M' = Σ c_j / (2j+3),  M'' = Σ c_j / (2j+5),
    // c_j = κ^j / j!
    let tol = S::lit(SERIES_REL_TOL);
    let mut c = S::one();
    let (mut m0, mut m1, mut m2) = (S::zero(), S::zero(), S::zero());
    for j in 0..MAX_TERMS {
        let jj = S::from_usize_lossy(j);
        let two_j = jj + jj;
        let t0 = c / (two_j + S::one());
        m0 += t0;
        m1 += c / (two_j + S::lit(3.0));
        m2 += c / (two_j + S::lit(5.0));
        if jj > kappa.abs() && t0.abs() <= tol * m0.abs() {
            break;
        }
        c = c * kappa / (jj + S::one());
    }
    (m0, m1, m2)
}

/// Asymptotic tail sums `S0 = Σ a_s κ^{-s}`, `S0'`, `S0''` with `a_s = (1/2)_s`.
fn asymptotic<S: Scalar>(kappa: S) -> (S, S, S) {
    let inv = S::one() / kappa;
    let mut a = S::one(); // (1/2)_s
    let mut pow = S::one(); // κ^{-s}
    let (mut s0, mut s1, mut s2) = (S::zero(), S::zero(), S::zero());
    let mut last = S::infinity();
    for s in 0..MAX_TERMS {
        let ss = S::from_usize_lossy(s);
        let term = a * pow;
        if term > last {
            break;
        }
        s0 += term;
        s1 -= ss * term * inv;
        s2 += ss * (ss + S::one()) * term * inv * inv;
        if term <= S::epsilon() * S::lit(1e-3) * s0 {
            break;
        }
        last = term;
        a = a * (ss + S::lit(0.5));
        pow = pow * inv;
    }
    (s0, s1, s2)
}

/// `ln M(1/2, 3/2, κ)`.
pub fn log_kummer<S: Scalar>(kappa: S) -> S {
    if kappa <= S::lit(SERIES_LIMIT) {
        series(kappa).0.ln()
    } else {
        let (s0, _, _) = asymptotic(kappa);
        kappa - (S::lit(2.0) * kappa).ln() + s0.ln()
    }
}

/// `M(1/2, 3/2, κ)`; overflows to infinity for very large `κ`.
pub fn kummer<S: Scalar>(kappa: S) -> S {
    log_kummer(kappa).exp()
}

/// Kummer ratio `q(κ) = d/dκ ln M(1/2, 3/2, κ)` and its derivative `q'(κ)`.
pub fn kummer_ratio<S: Scalar>(kappa: S) -> (S, S) {
    if kappa <= S::lit(SERIES_LIMIT) {
        let (m0, m1, m2) = series(kappa);
        let q = m1 / m0;
        (q, m2 / m0 - q * q)
    } else {
        let (s0, s1, s2) = asymptotic(kappa);
        let inv = S::one() / kappa;
        let r1 = s1 / s0;
        let q = S::one() - inv + r1;
        let dq = inv * inv + s2 / s0 - r1 * r1;
        (q, dq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_at_zero() {
        assert_eq!(kummer(0.0_f64), 1.0);
        let (q, dq) = kummer_ratio(0.0_f64);
        assert!((q - 1.0 / 3.0).abs() < 1e-15);
        // q'(0) = 1/5 - 1/9
        assert!((dq - (1.0 / 5.0 - 1.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn branches_agree_at_crossover() {
        let k = 50.0_f64;
        let a = series(k).0.ln();
        let (s0, _, _) = asymptotic(k);
        let b = k - (2.0 * k).ln() + s0.ln();
        assert!((a - b).abs() < 1e-13 * a.abs(), "{a} vs {b}");
        let (m0, m1, m2) = series(k);
        let q_series = m1 / m0;
        let dq_series = m2 / m0 - q_series * q_series;
        let (_, s1, s2) = asymptotic(k);
        let q_asym = 1.0 - 1.0 / k + s1 / s0;
        let dq_asym = 1.0 / (k * k) + s2 / s0 - (s1 / s0).powi(2);
        assert!((q_series - q_asym).abs() < 1e-14);
        assert!((dq_series - dq_asym).abs() < 1e-10 * dq_series, "{dq_series} {dq_asym}");
    }

    #[test]
    fn ratio_matches_finite_difference() {
        for &k in &[0.3_f64, 2.0, 17.0, 49.0, 51.0, 300.0, 5000.0] {
            let h = 1e-5 * k.max(1.0);
            let fd = (log_kummer(k + h) - log_kummer(k - h)) / (2.0 * h);
            let (q, dq) = kummer_ratio(k);
            assert!((fd - q).abs() < 1e-8, "q at {k}: {fd} vs {q}");
            let fd2 = (kummer_ratio(k + h).0 - kummer_ratio(k - h).0) / (2.0 * h);
            assert!((fd2 - dq).abs() < 1e-6 * dq.max(1e-8), "q' at {k}: {fd2} vs {dq}");
        }
    }

    #[test]
    fn large_argument_log_is_finite() {
        let v = log_kummer(1e4_f64);
        assert!(v.is_finite());
        assert!((v - (1e4 - (2e4_f64).ln())).abs() < 1e-3);
    }
}
