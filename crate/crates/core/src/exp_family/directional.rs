use serde::{Deserialize, Serialize};

use super::{ExpectationParams, FisherExpParams, WatsonExpParams, KAPPA_MAX};
use crate::error::Result;
use crate::linalg::Vec3;
use crate::scalar::Scalar;

/// Which distribution models surface normals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionalFamily {
    #[default]
    Fisher,
    Watson,
}

impl std::str::FromStr for DirectionalFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fisher" | "vmf" => Ok(Self::Fisher),
            "watson" => Ok(Self::Watson),
            other => Err(format!("unknown directional family '{other}'")),
        }
    }
}

/// Expectation parameters of either directional family.
///
/// Binary operations between a Fisher and a Watson value are a logic error
/// and panic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar", tag = "family", rename_all = "lowercase")]
pub enum DirectionalParams<S> {
    Fisher(FisherExpParams<S>),
    Watson(WatsonExpParams<S>),
}

impl<S: Scalar> DirectionalParams<S> {
    pub fn family(&self) -> DirectionalFamily {
        match self {
            Self::Fisher(_) => DirectionalFamily::Fisher,
            Self::Watson(_) => DirectionalFamily::Watson,
        }
    }

    pub fn statistic(x: &Vec3<S>, family: DirectionalFamily) -> Result<Self> {
        Ok(match family {
            DirectionalFamily::Fisher => Self::Fisher(FisherExpParams::sufficient_statistic(x)?),
            DirectionalFamily::Watson => Self::Watson(WatsonExpParams::sufficient_statistic(x)?),
        })
    }

    pub fn zero(family: DirectionalFamily) -> Self {
        match family {
            DirectionalFamily::Fisher => Self::Fisher(FisherExpParams { eta: [S::zero(); 3] }),
            DirectionalFamily::Watson => Self::Watson(WatsonExpParams { eta: [S::zero(); 6] }),
        }
    }

    /// Parameters from a mean direction (axis for Watson) and concentration.
    pub fn from_source(direction: &Vec3<S>, kappa: S, family: DirectionalFamily) -> Result<Self> {
        Ok(match family {
            DirectionalFamily::Fisher => Self::Fisher(FisherExpParams::from_source(direction, kappa)?),
            DirectionalFamily::Watson => Self::Watson(WatsonExpParams::from_source(direction, kappa)?),
        })
    }

    pub fn kappa(&self) -> S {
        match self {
            Self::Fisher(p) => p.kappa(),
            Self::Watson(p) => p.kappa(),
        }
    }

    /// The concentration statistic the κ estimator inverts:
    /// `‖η‖` (Fisher) or `λ_max` of the scatter (Watson).
    pub fn resultant(&self) -> S {
        match self {
            Self::Fisher(p) => p.norm(),
            Self::Watson(p) => p.resultant(),
        }
    }

    /// Mean direction (Fisher) or axis (Watson); `None` for a zero Fisher η.
    pub fn direction(&self) -> Option<Vec3<S>> {
        match self {
            Self::Fisher(p) => p.mean_direction(),
            Self::Watson(p) => Some(p.axis()),
        }
    }

    /// The member of the clamped family these statistics fit: when the
    /// concentration saturates at [`KAPPA_MAX`], `η` is replaced by the
    /// expectation parameter of `(direction, KAPPA_MAX)`; otherwise `self`.
    pub fn saturated(&self) -> Result<Self> {
        let kappa = self.kappa();
        match self.direction() {
            Some(d) if kappa >= S::lit(KAPPA_MAX) => Self::from_source(&d, kappa, self.family()),
            _ => Ok(*self),
        }
    }

    /// In-place accumulation `self += w · t(x)`.
    pub fn accumulate_statistic(&mut self, x: &Vec3<S>, w: S) {
        match self {
            Self::Fisher(p) => {
                for i in 0..3 {
                    p.eta[i] += w * x[i];
                }
            }
            Self::Watson(p) => {
                let t = super::watson_statistic(x);
                for i in 0..6 {
                    p.eta[i] += w * t[i];
                }
            }
        }
    }

    pub fn scaled(&self, s: S) -> Self {
        match self {
            Self::Fisher(p) => Self::Fisher(FisherExpParams { eta: p.eta.map(|v| v * s) }),
            Self::Watson(p) => Self::Watson(WatsonExpParams { eta: p.eta.map(|v| v * s) }),
        }
    }
}

impl<S: Scalar> ExpectationParams<S> for DirectionalParams<S> {
    type Observation = Vec3<S>;

    /// Defaults to the Fisher statistic; use [`DirectionalParams::statistic`]
    /// to choose the family.
    fn sufficient_statistic(x: &Vec3<S>) -> Result<Self> {
        Self::statistic(x, DirectionalFamily::Fisher)
    }

    fn dual_potential(&self) -> Result<S> {
        match self {
            Self::Fisher(p) => p.dual_potential(),
            Self::Watson(p) => p.dual_potential(),
        }
    }

    fn dual_gradient(&self) -> Result<Self> {
        Ok(match self {
            Self::Fisher(p) => Self::Fisher(p.dual_gradient()?),
            Self::Watson(p) => Self::Watson(p.dual_gradient()?),
        })
    }

    fn inner(&self, other: &Self) -> S {
        match (self, other) {
            (Self::Fisher(a), Self::Fisher(b)) => a.inner(b),
            (Self::Watson(a), Self::Watson(b)) => a.inner(b),
            _ => panic!("inner product across directional families"),
        }
    }

    fn statistic_inner(&self, x: &Vec3<S>) -> S {
        match self {
            Self::Fisher(p) => p.statistic_inner(x),
            Self::Watson(p) => p.statistic_inner(x),
        }
    }

    fn lincomb(&self, a: S, other: &Self, b: S) -> Self {
        match (self, other) {
            (Self::Fisher(x), Self::Fisher(y)) => Self::Fisher(x.lincomb(a, y, b)),
            (Self::Watson(x), Self::Watson(y)) => Self::Watson(x.lincomb(a, y, b)),
            _ => panic!("linear combination across directional families"),
        }
    }

    fn log_carrier(&self) -> S {
        -(S::lit(4.0) * S::PI()).ln()
    }
}
