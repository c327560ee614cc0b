//! Regular exponential families in expectation-parameter form.
//!
//! Every family exposes its Legendre-dual log-normalizer `G(η)`, the gradient
//! `∇G(η)` (which equals the natural parameter `θ`), and an inner product on
//! the sufficient-statistic space. The Bregman divergence and the density
//! `f(x | η) = exp(G(η) + ⟨t(x) − η, ∇G(η)⟩ + k(x))` follow generically.

mod directional;
mod fisher;
mod gaussian;
pub mod kummer;
pub mod sampling;
pub(crate) mod solver;
mod source;
mod watson;

pub use directional::{DirectionalFamily, DirectionalParams};
pub use fisher::{estimate_kappa_fisher, fisher_mean_resultant, log_sinh_ratio, FisherExpParams};
pub use gaussian::GaussianExpParams;
pub use source::{log_density, SourceParams};
pub use watson::{
    estimate_kappa_watson, watson_mean_resultant, watson_statistic, WatsonExpParams,
};

use crate::error::Result;
use crate::scalar::Scalar;

/// Upper clamp on the concentration of both directional families.
pub const KAPPA_MAX: f64 = 1e4;

/// `‖η‖` ceiling applied to Fisher parameters before concentration estimation.
pub const FISHER_NORM_MAX: f64 = 1.0 - 1e-9;

/// Tolerance on `‖x‖ = 1` for directional observations.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// An expectation parameter `η` of a regular exponential family.
///
/// `dual_gradient` returns `∇G(η)` in the same shape as `η`, so that
/// `inner` pairs the two.
pub trait ExpectationParams<S: Scalar>: Clone {
    type Observation: ?Sized;

    /// The sufficient statistic `t(x)`, viewed as an expectation parameter.
    fn sufficient_statistic(x: &Self::Observation) -> Result<Self>;

    /// `G(η)`.
    fn dual_potential(&self) -> Result<S>;

    /// `∇G(η)`.
    fn dual_gradient(&self) -> Result<Self>;

    fn inner(&self, other: &Self) -> S;

    /// `⟨t(x), self⟩` without materializing `t(x)`.
    fn statistic_inner(&self, x: &Self::Observation) -> S;

    /// `a·self + b·other`.
    fn lincomb(&self, a: S, other: &Self, b: S) -> Self;

    /// Log carrier measure `k(x)`; constant for all families here.
    fn log_carrier(&self) -> S {
        S::zero()
    }
}

/// `D_G(η₁, η₂) = G(η₁) − G(η₂) − ⟨η₁ − η₂, ∇G(η₂)⟩`.
pub fn bregman_divergence<S: Scalar, P: ExpectationParams<S>>(eta1: &P, eta2: &P) -> Result<S> {
    let g1 = eta1.dual_potential()?;
    let g2 = eta2.dual_potential()?;
    let grad = eta2.dual_gradient()?;
    let diff = eta1.lincomb(S::one(), eta2, -S::one());
    Ok(g1 - g2 - diff.inner(&grad))
}

/// `ln f(x | η)` through the dual form, `G(η) + ⟨t(x) − η, ∇G(η)⟩ + k(x)`.
pub fn log_density_dual<S: Scalar, P: ExpectationParams<S>>(
    x: &P::Observation,
    eta: &P,
) -> Result<S> {
    let g = eta.dual_potential()?;
    let grad = eta.dual_gradient()?;
    Ok(g + grad.statistic_inner(x) - grad.inner(eta) + eta.log_carrier())
}

/// The sufficient statistic of a directional observation for `family`.
pub fn directional_statistic<S: Scalar>(
    x: &[S; 3],
    family: DirectionalFamily,
) -> Result<DirectionalParams<S>> {
    DirectionalParams::statistic(x, family)
}

#[cfg(test)]
mod tests;
