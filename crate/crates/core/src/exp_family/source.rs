use serde::{Deserialize, Serialize};

use super::fisher::{check_unit, log_sinh_ratio};
use super::kummer::log_kummer;
use crate::error::{Error, Result};
use crate::linalg::{dot3, Cholesky, Matrix, Vec3};
use crate::scalar::Scalar;

/// Source (moment) parameters of one mixture block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar", tag = "family", rename_all = "lowercase")]
pub enum SourceParams<S> {
    Gaussian { mean: Vec<S>, cov: Matrix<S> },
    Fisher { mean: Vec3<S>, kappa: S },
    Watson { axis: Vec3<S>, kappa: S },
}

/// Log-density of `x` evaluated directly from the source parameters.
///
/// Directional densities are with respect to surface measure on S² and
/// include the `1/(4π)` factor of the uniform measure.
pub fn log_density<S: Scalar>(x: &[S], params: &SourceParams<S>) -> Result<S> {
    match params {
        SourceParams::Gaussian { mean, cov } => {
            let d = mean.len();
            if x.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: x.len() });
            }
            let chol = Cholesky::new(cov).ok_or(Error::SingularCovariance)?;
            let diff: Vec<S> = x.iter().zip(mean).map(|(&a, &b)| a - b).collect();
            let sol = chol.solve(&diff);
            let maha: S = diff.iter().zip(&sol).map(|(&a, &b)| a * b).sum();
            let d = S::from_usize_lossy(d);
            Ok(-S::lit(0.5) * (maha + chol.log_det() + d * (S::lit(2.0) * S::PI()).ln()))
        }
        SourceParams::Fisher { mean, kappa } => {
            let x = as_vec3(x)?;
            check_unit(&x)?;
            check_unit(mean)?;
            Ok(*kappa * dot3(mean, &x) - log_sinh_ratio(*kappa) - (S::lit(4.0) * S::PI()).ln())
        }
        SourceParams::Watson { axis, kappa } => {
            let x = as_vec3(x)?;
            check_unit(&x)?;
            check_unit(axis)?;
            let c = dot3(axis, &x);
            Ok(*kappa * c * c - log_kummer(*kappa) - (S::lit(4.0) * S::PI()).ln())
        }
    }
}

fn as_vec3<S: Scalar>(x: &[S]) -> Result<Vec3<S>> {
    if x.len() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: x.len() });
    }
    Ok([x[0], x[1], x[2]])
}
