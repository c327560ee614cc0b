use serde::{Deserialize, Serialize};

use super::fisher::check_unit;
use super::kummer::{kummer_ratio, log_kummer};
use super::solver::solve_increasing;
use super::{ExpectationParams, KAPPA_MAX};
use crate::error::Result;
use crate::linalg::{sym_eigen3, Vec3};
use crate::scalar::Scalar;

/// Statistic vector of the Watson family on S²:
/// `[x₁², x₂², x₃², √2x₁x₂, √2x₁x₃, √2x₂x₃]`.
pub fn watson_statistic<S: Scalar>(x: &Vec3<S>) -> [S; 6] {
    let s2 = S::SQRT_2();
    [
        x[0] * x[0],
        x[1] * x[1],
        x[2] * x[2],
        s2 * x[0] * x[1],
        s2 * x[0] * x[2],
        s2 * x[1] * x[2],
    ]
}

/// Kummer ratio `q(1/2, 3/2; κ)` and its derivative.
pub fn watson_mean_resultant<S: Scalar>(kappa: S) -> (S, S) {
    kummer_ratio(kappa)
}

/// Concentration `κ ≥ 0` solving `q(1/2, 3/2; κ) = r`, clamped to
/// `[0, KAPPA_MAX]`.
///
/// `r <= 1/3` (the uniform value) gives `κ = 0`. Newton steps
/// `κ ← κ − (q(κ) − r) / q'(κ)` start from `r(3 − r²)/(1 − r²)` and fall back
/// to bisection when they leave the bracket.
pub fn estimate_kappa_watson<S: Scalar>(r: S) -> S {
    let third = S::one() / S::lit(3.0);
    if !(r > third + S::tol(1e-15)) {
        return S::zero();
    }
    let hi = S::lit(KAPPA_MAX);
    if r >= kummer_ratio(hi).0 {
        return hi;
    }
    let r2 = r * r;
    let init = r * (S::lit(3.0) - r2) / (S::one() - r2);
    solve_increasing(kummer_ratio, r, init, S::zero(), hi)
}

/// Watson distribution on S² in expectation parameters.
///
/// `η` lives in the 6-dimensional statistic space; read as a symmetric
/// scatter matrix `T(η)` (off-diagonals carry the `√2` factor) it has
/// concentration statistic `r = λ_max(T)` and axis `μ` = the matching
/// eigenvector. For parameters of the form `η = r·ν(μ)` this reduces to
/// `r = ‖η‖₂`. The dual potential is `G(η) = κ r − ln M(1/2, 3/2, κ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct WatsonExpParams<S> {
    pub eta: [S; 6],
}

impl<S: Scalar> WatsonExpParams<S> {
    pub fn new(eta: [S; 6]) -> Self {
        Self { eta }
    }

    /// `η = q(κ) ν(μ)`.
    pub fn from_source(axis: &Vec3<S>, kappa: S) -> Result<Self> {
        check_unit(axis)?;
        let nu = watson_statistic(axis);
        let r = kummer_ratio(kappa.max(S::zero())).0;
        Ok(Self {
            eta: nu.map(|v| v * r),
        })
    }

    pub fn scatter(&self) -> [[S; 3]; 3] {
        let h = S::FRAC_1_SQRT_2();
        let e = &self.eta;
        [
            [e[0], e[3] * h, e[4] * h],
            [e[3] * h, e[1], e[5] * h],
            [e[4] * h, e[5] * h, e[2]],
        ]
    }

    /// `(λ_max, axis)` of the scatter matrix.
    pub fn principal(&self) -> (S, Vec3<S>) {
        let (vals, vecs) = sym_eigen3(&self.scatter());
        (vals[2], vecs[2])
    }

    pub fn norm(&self) -> S {
        self.eta.iter().map(|&v| v * v).sum::<S>().sqrt()
    }

    /// Concentration statistic `λ_max` of the scatter.
    pub fn resultant(&self) -> S {
        self.principal().0
    }

    pub fn kappa(&self) -> S {
        estimate_kappa_watson(self.resultant())
    }

    /// Axis `μ`, sign-ambiguous.
    pub fn axis(&self) -> Vec3<S> {
        self.principal().1
    }
}

impl<S: Scalar> ExpectationParams<S> for WatsonExpParams<S> {
    type Observation = Vec3<S>;

    fn sufficient_statistic(x: &Vec3<S>) -> Result<Self> {
        check_unit(x)?;
        Ok(Self {
            eta: watson_statistic(x),
        })
    }

    fn dual_potential(&self) -> Result<S> {
        let r = self.resultant();
        let kappa = estimate_kappa_watson(r);
        Ok(kappa * r - log_kummer(kappa))
    }

    /// `κ ν(μ)`.
    fn dual_gradient(&self) -> Result<Self> {
        let (r, axis) = self.principal();
        let kappa = estimate_kappa_watson(r);
        Ok(Self {
            eta: watson_statistic(&axis).map(|v| v * kappa),
        })
    }

    fn inner(&self, other: &Self) -> S {
        self.eta.iter().zip(&other.eta).map(|(&a, &b)| a * b).sum()
    }

    fn statistic_inner(&self, x: &Vec3<S>) -> S {
        let t = watson_statistic(x);
        self.eta.iter().zip(&t).map(|(&a, &b)| a * b).sum()
    }

    fn lincomb(&self, a: S, other: &Self, b: S) -> Self {
        let mut eta = [S::zero(); 6];
        for (i, v) in eta.iter_mut().enumerate() {
            *v = a * self.eta[i] + b * other.eta[i];
        }
        Self { eta }
    }

    fn log_carrier(&self) -> S {
        -(S::lit(4.0) * S::PI()).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statistic_of_axis_vector() {
        assert_eq!(watson_statistic(&[1.0, 0.0, 0.0]), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn statistic_norm_is_one() {
        let x = [0.48, -0.6, 0.64_f64];
        let n: f64 = watson_statistic(&x).iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_value_gives_zero_kappa() {
        assert_eq!(estimate_kappa_watson(1.0_f64 / 3.0), 0.0);
        assert_eq!(estimate_kappa_watson(0.2_f64), 0.0);
    }

    #[test]
    fn rank_one_parameters_use_euclidean_norm() {
        let axis = [0.0, 0.6, 0.8];
        let p = WatsonExpParams::from_source(&axis, 20.0_f64).unwrap();
        assert!((p.resultant() - p.norm()).abs() < 1e-14);
        assert!((p.kappa() - 20.0).abs() < 1e-8);
        let a = p.axis();
        let c: f64 = a.iter().zip(&axis).map(|(x, y)| x * y).sum();
        assert!((c.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn antipodal_axes_share_parameters() {
        let a = WatsonExpParams::from_source(&[0.0, 0.6, 0.8], 7.0_f64).unwrap();
        let b = WatsonExpParams::from_source(&[0.0, -0.6, -0.8], 7.0_f64).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_scatter_has_zero_potential() {
        let third = 1.0_f64 / 3.0;
        let p = WatsonExpParams::new([third, third, third, 0.0, 0.0, 0.0]);
        assert_eq!(p.kappa(), 0.0);
        assert_eq!(p.dual_potential().unwrap(), 0.0);
    }
}
