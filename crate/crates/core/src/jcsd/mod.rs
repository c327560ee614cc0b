//! Joint color-spatial-directional mixture clustering.
//!
//! Each pixel is a 9-D observation (CIELAB color, camera-frame position,
//! unit surface normal) modeled by a mixture whose components factor into a
//! Gaussian color block, a Gaussian position block and a Fisher or Watson
//! normal block. Parameters live in expectation form so that the E-step is a
//! Bregman-divergence computation and the M-step is a weighted average of
//! sufficient statistics.

mod em;
mod kmeans;

pub use em::{
    e_step, hard_assign, m_step, run_em, ClusterConfig, MixtureState, PRIOR_FLOOR, STARVED_FRACTION,
    VARIANCE_FLOOR,
};
pub use kmeans::{kmeans_init, KmeansResult};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exp_family::{
    DirectionalFamily, DirectionalParams, ExpectationParams, GaussianExpParams, SourceParams,
    UNIT_NORM_TOL,
};
use crate::linalg::{norm3, Matrix, Vec3};
use crate::scalar::Scalar;

/// Per-pixel observation: CIELAB color, 3D position in meters, unit normal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct FeatureVector<S> {
    pub color: Vec3<S>,
    pub pos: Vec3<S>,
    pub normal: Vec3<S>,
}

impl<S: Scalar> FeatureVector<S> {
    pub fn new(color: Vec3<S>, pos: Vec3<S>, normal: Vec3<S>) -> Result<Self> {
        let n = norm3(&normal);
        if (n - S::one()).abs() > S::tol(UNIT_NORM_TOL) {
            return Err(Error::NotUnitNorm { norm: n.as_f64() });
        }
        if color.iter().chain(&pos).any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite feature value".into()));
        }
        Ok(Self { color, pos, normal })
    }
}

/// Expectation parameters of one combined component: two Gaussian blocks and
/// a directional block. `G` and the Bregman divergence are sums over blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct CombinedParams<S> {
    pub color: GaussianExpParams<S>,
    pub pos: GaussianExpParams<S>,
    pub normal: DirectionalParams<S>,
}

impl<S: Scalar> CombinedParams<S> {
    /// `t(x)` of a feature vector for the given normal family.
    pub fn statistic(x: &FeatureVector<S>, family: DirectionalFamily) -> Result<Self> {
        Ok(Self {
            color: GaussianExpParams::sufficient_statistic(&x.color[..])?,
            pos: GaussianExpParams::sufficient_statistic(&x.pos[..])?,
            normal: DirectionalParams::statistic(&x.normal, family)?,
        })
    }

    pub fn from_source(
        color_mean: &Vec3<S>,
        color_cov: &Matrix<S>,
        pos_mean: &Vec3<S>,
        pos_cov: &Matrix<S>,
        direction: &Vec3<S>,
        kappa: S,
        family: DirectionalFamily,
    ) -> Result<Self> {
        Ok(Self {
            color: GaussianExpParams::from_source(color_mean, color_cov)?,
            pos: GaussianExpParams::from_source(pos_mean, pos_cov)?,
            normal: DirectionalParams::from_source(direction, kappa, family)?,
        })
    }

    pub fn family(&self) -> DirectionalFamily {
        self.normal.family()
    }

    /// Source parameters of the three blocks, in order color, position, normal.
    pub fn to_source(&self) -> Result<[SourceParams<S>; 3]> {
        let (cm, cc) = self.color.to_source()?;
        let (pm, pc) = self.pos.to_source()?;
        let kappa = self.normal.kappa();
        let dir = self.normal.direction().unwrap_or([S::zero(), S::zero(), S::one()]);
        let normal = match self.family() {
            DirectionalFamily::Fisher => SourceParams::Fisher { mean: dir, kappa },
            DirectionalFamily::Watson => SourceParams::Watson { axis: dir, kappa },
        };
        Ok([
            SourceParams::Gaussian { mean: cm, cov: cc },
            SourceParams::Gaussian { mean: pm, cov: pc },
            normal,
        ])
    }

    /// Per-block Bregman divergences `(color, position, normal)`.
    pub fn block_divergences(&self, other: &Self) -> Result<[S; 3]> {
        use crate::exp_family::bregman_divergence;
        Ok([
            bregman_divergence(&self.color, &other.color)?,
            bregman_divergence(&self.pos, &other.pos)?,
            bregman_divergence(&self.normal, &other.normal)?,
        ])
    }
}

impl<S: Scalar> ExpectationParams<S> for CombinedParams<S> {
    type Observation = FeatureVector<S>;

    /// Uses a Fisher normal block; see [`CombinedParams::statistic`].
    fn sufficient_statistic(x: &FeatureVector<S>) -> Result<Self> {
        Self::statistic(x, DirectionalFamily::Fisher)
    }

    fn dual_potential(&self) -> Result<S> {
        Ok(self.color.dual_potential()? + self.pos.dual_potential()? + self.normal.dual_potential()?)
    }

    fn dual_gradient(&self) -> Result<Self> {
        Ok(Self {
            color: self.color.dual_gradient()?,
            pos: self.pos.dual_gradient()?,
            normal: self.normal.dual_gradient()?,
        })
    }

    fn inner(&self, other: &Self) -> S {
        self.color.inner(&other.color) + self.pos.inner(&other.pos) + self.normal.inner(&other.normal)
    }

    fn statistic_inner(&self, x: &FeatureVector<S>) -> S {
        self.color.statistic_inner(&x.color[..])
            + self.pos.statistic_inner(&x.pos[..])
            + self.normal.statistic_inner(&x.normal)
    }

    fn lincomb(&self, a: S, other: &Self, b: S) -> Self {
        Self {
            color: self.color.lincomb(a, &other.color, b),
            pos: self.pos.lincomb(a, &other.pos, b),
            normal: self.normal.lincomb(a, &other.normal, b),
        }
    }

    fn log_carrier(&self) -> S {
        self.normal.log_carrier()
    }
}

/// One mixture component: prior weight and combined expectation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ComponentParams<S> {
    pub pi: S,
    pub eta: CombinedParams<S>,
}

/// Log-density evaluator for one component, precomputed from its parameters.
///
/// Gaussian blocks are evaluated in centered form
/// `−½(x−μ)ᵀΣ⁻¹(x−μ) − ½ ln det Σ − (d/2) ln 2π`, which equals the dual form
/// but avoids cancellation between large terms.
#[derive(Clone, Debug)]
pub(crate) struct ComponentKernel<S> {
    color_mean: Vec3<S>,
    color_prec: [[S; 3]; 3],
    pos_mean: Vec3<S>,
    pos_prec: [[S; 3]; 3],
    normal_grad: DirectionalParams<S>,
    /// Sum of all pixel-independent terms.
    constant: S,
}

fn gaussian_parts<S: Scalar>(eta: &GaussianExpParams<S>) -> Result<(Vec3<S>, [[S; 3]; 3], S)> {
    let nat = eta.natural()?;
    let prec = nat.half_precision.scaled(S::lit(2.0)).to_array3();
    let mean = [eta.mean[0], eta.mean[1], eta.mean[2]];
    let c = -S::lit(0.5) * (nat.log_det_cov + S::lit(3.0) * (S::lit(2.0) * S::PI()).ln());
    Ok((mean, prec, c))
}

#[inline]
fn centered_quad<S: Scalar>(x: &Vec3<S>, m: &Vec3<S>, p: &[[S; 3]; 3]) -> S {
    let d = [x[0] - m[0], x[1] - m[1], x[2] - m[2]];
    let mut q = S::zero();
    for i in 0..3 {
        q += d[i] * (p[i][0] * d[0] + p[i][1] * d[1] + p[i][2] * d[2]);
    }
    q
}

impl<S: Scalar> ComponentKernel<S> {
    pub(crate) fn new(eta: &CombinedParams<S>, log_weight: S) -> Result<Self> {
        let (color_mean, color_prec, cc) = gaussian_parts(&eta.color)?;
        let (pos_mean, pos_prec, pc) = gaussian_parts(&eta.pos)?;
        let normal_grad = eta.normal.dual_gradient()?;
        let nc = eta.normal.dual_potential()? - normal_grad.inner(&eta.normal) + eta.normal.log_carrier();
        Ok(Self {
            color_mean,
            color_prec,
            pos_mean,
            pos_prec,
            normal_grad,
            constant: log_weight + cc + pc + nc,
        })
    }

    /// `ln π + ln f(x)` (or `ln f(x)` when built with zero log weight).
    #[inline]
    pub(crate) fn eval(&self, x: &FeatureVector<S>) -> S {
        let half = S::lit(0.5);
        self.constant
            - half * centered_quad(&x.color, &self.color_mean, &self.color_prec)
            - half * centered_quad(&x.pos, &self.pos_mean, &self.pos_prec)
            + self.normal_grad.statistic_inner(&x.normal)
    }
}

/// `ln f(x | η)` of the combined model.
pub fn log_density_combined<S: Scalar>(x: &FeatureVector<S>, eta: &CombinedParams<S>) -> Result<S> {
    Ok(ComponentKernel::new(eta, S::zero())?.eval(x))
}

/// `D_comb(t(x), η)` up to the term `G(t(x))`, which does not depend on `η`:
/// `−G(η) − ⟨t(x) − η, ∇G(η)⟩`. Ranking components by this quantity is
/// ranking them by the combined Bregman divergence.
pub fn relative_divergence<S: Scalar>(x: &FeatureVector<S>, eta: &CombinedParams<S>) -> Result<S> {
    Ok(eta.log_carrier() - log_density_combined(x, eta)?)
}
