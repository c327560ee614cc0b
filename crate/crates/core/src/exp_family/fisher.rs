use serde::{Deserialize, Serialize};

use super::solver::solve_increasing;
use super::{ExpectationParams, FISHER_NORM_MAX, KAPPA_MAX, UNIT_NORM_TOL};
use crate::error::{Error, Result};
use crate::linalg::{dot3, norm3, normalize3, scale3, Vec3};
use crate::scalar::Scalar;

/// Below this resultant length the concentration is exactly zero.
const UNIFORM_NORM: f64 = 1e-12;
/// Below this concentration the Taylor expansions are used.
const SERIES_SWITCH: f64 = 0.1;

/// Mean resultant length of a Fisher distribution on S²,
/// `A(κ) = coth κ − 1/κ`, and its derivative `1/κ² − 1/sinh² κ`.
pub fn fisher_mean_resultant<S: Scalar>(kappa: S) -> (S, S) {
    let k = kappa;
    if k < S::lit(SERIES_SWITCH) {
        let k2 = k * k;
        let a = k
            * (S::one() / S::lit(3.0)
                + k2 * (-S::one() / S::lit(45.0)
                    + k2 * (S::lit(2.0) / S::lit(945.0)
                        + k2 * (-S::one() / S::lit(4725.0) + k2 * S::lit(2.0) / S::lit(93555.0)))));
        let da = S::one() / S::lit(3.0)
            + k2 * (-S::one() / S::lit(15.0)
                + k2 * (S::lit(2.0) / S::lit(189.0)
                    + k2 * (-S::one() / S::lit(675.0) + k2 * S::lit(2.0) / S::lit(10395.0))));
        return (a, da);
    }
    let e = (-S::lit(2.0) * k).exp();
    let coth = (S::one() + e) / (S::one() - e);
    let inv = S::one() / k;
    // 1/sinh² κ = 4e^{-2κ} / (1 − e^{-2κ})²
    let csch2 = S::lit(4.0) * e / ((S::one() - e) * (S::one() - e));
    (coth - inv, inv * inv - csch2)
}

/// `ln(sinh κ / κ)`, stable for small and very large `κ`.
pub fn log_sinh_ratio<S: Scalar>(kappa: S) -> S {
    let k = kappa;
    if k < S::lit(SERIES_SWITCH) {
        let k2 = k * k;
        return k2
            * (S::one() / S::lit(6.0)
                + k2 * (-S::one() / S::lit(180.0)
                    + k2 * (S::one() / S::lit(2835.0)
                        + k2 * (-S::one() / S::lit(37800.0) + k2 / S::lit(467775.0)))));
    }
    if k < S::lit(20.0) {
        return (k.sinh() / k).ln();
    }
    // ln sinh κ = κ + ln(1 − e^{-2κ}) − ln 2
    k + (-(-S::lit(2.0) * k).exp_m1()).ln() - S::LN_2() - k.ln()
}

/// Concentration `κ` solving `coth κ − 1/κ = r`, clamped to `[0, KAPPA_MAX]`.
///
/// Newton iteration `κ ← κ − (a − b − r) / (1 − a² + b²)` with
/// `a = coth κ`, `b = 1/κ`, started at `r(3 − r²)/(1 − r²)`; steps leaving
/// the bracket fall back to bisection.
pub fn estimate_kappa_fisher<S: Scalar>(r: S) -> S {
    let r = r.max(S::zero()).min(S::lit(FISHER_NORM_MAX));
    if r < S::lit(UNIFORM_NORM) {
        return S::zero();
    }
    let hi = S::lit(KAPPA_MAX);
    if r >= fisher_mean_resultant(hi).0 {
        return hi;
    }
    let r2 = r * r;
    let init = r * (S::lit(3.0) - r2) / (S::one() - r2);
    solve_increasing(fisher_mean_resultant, r, init, S::zero(), hi)
}

/// Fisher distribution on S² in expectation parameters `η = A(κ) μ`, with
/// statistic `t(x) = x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct FisherExpParams<S> {
    pub eta: Vec3<S>,
}

impl<S: Scalar> FisherExpParams<S> {
    pub fn new(eta: Vec3<S>) -> Result<Self> {
        let n = norm3(&eta);
        if !n.is_finite() || n > S::one() + S::tol(UNIT_NORM_TOL) {
            return Err(Error::InvalidParameter(format!(
                "Fisher expectation parameter norm {} exceeds 1",
                n
            )));
        }
        Ok(Self { eta })
    }

    pub fn from_source(mean_direction: &Vec3<S>, kappa: S) -> Result<Self> {
        let mu = normalize3(mean_direction)
            .ok_or_else(|| Error::InvalidParameter("zero mean direction".into()))?;
        if kappa < S::zero() {
            return Err(Error::InvalidParameter("Fisher kappa must be >= 0".into()));
        }
        Ok(Self {
            eta: scale3(&mu, fisher_mean_resultant(kappa).0),
        })
    }

    pub fn norm(&self) -> S {
        norm3(&self.eta)
    }

    pub fn kappa(&self) -> S {
        estimate_kappa_fisher(self.norm())
    }

    /// Unit mean direction; `None` when `η = 0` (uniform distribution).
    pub fn mean_direction(&self) -> Option<Vec3<S>> {
        normalize3(&self.eta)
    }
}

pub(crate) fn check_unit<S: Scalar>(x: &Vec3<S>) -> Result<()> {
    let n = norm3(x);
    if (n - S::one()).abs() > S::tol(UNIT_NORM_TOL) {
        return Err(Error::NotUnitNorm { norm: n.as_f64() });
    }
    Ok(())
}

impl<S: Scalar> ExpectationParams<S> for FisherExpParams<S> {
    type Observation = Vec3<S>;

    fn sufficient_statistic(x: &Vec3<S>) -> Result<Self> {
        check_unit(x)?;
        Ok(Self { eta: *x })
    }

    /// `κ‖η‖ − ln(sinh κ / κ)`, the Legendre dual of `ln(sinh κ / κ)`.
    fn dual_potential(&self) -> Result<S> {
        let r = self.norm();
        let kappa = estimate_kappa_fisher(r);
        Ok(kappa * r - log_sinh_ratio(kappa))
    }

    /// `κ η / ‖η‖`.
    fn dual_gradient(&self) -> Result<Self> {
        let r = self.norm();
        let kappa = estimate_kappa_fisher(r);
        if kappa == S::zero() {
            return Ok(Self { eta: [S::zero(); 3] });
        }
        Ok(Self {
            eta: scale3(&self.eta, kappa / r),
        })
    }

    fn inner(&self, other: &Self) -> S {
        dot3(&self.eta, &other.eta)
    }

    fn statistic_inner(&self, x: &Vec3<S>) -> S {
        dot3(&self.eta, x)
    }

    fn lincomb(&self, a: S, other: &Self, b: S) -> Self {
        Self {
            eta: [
                a * self.eta[0] + b * other.eta[0],
                a * self.eta[1] + b * other.eta[1],
                a * self.eta[2] + b * other.eta[2],
            ],
        }
    }

    /// The uniform measure on S² has total mass 4π.
    fn log_carrier(&self) -> S {
        -(S::lit(4.0) * S::PI()).ln()
    }
}
