use serde::{Deserialize, Serialize};

use super::ExpectationParams;
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, Cholesky, Matrix};
use crate::scalar::Scalar;

/// Condition number above which the recovered covariance is regularized.
const MAX_CONDITION: f64 = 1e10;
/// Ridge added on regularization, relative to `trace(Σ) / d`.
const RIDGE_SCALE: f64 = 1e-6;

/// Multivariate Gaussian in expectation parameters
/// `η = (φ, Φ) = (μ, −(Σ + μμᵀ))`, matching the statistic `t(x) = (x, −xxᵀ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct GaussianExpParams<S> {
    pub mean: Vec<S>,
    pub neg_second_moment: Matrix<S>,
}

impl<S: Scalar> GaussianExpParams<S> {
    pub fn new(mean: Vec<S>, neg_second_moment: Matrix<S>) -> Result<Self> {
        if neg_second_moment.dim() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: neg_second_moment.dim(),
            });
        }
        Ok(Self {
            mean,
            neg_second_moment,
        })
    }

    pub fn from_source(mean: &[S], cov: &Matrix<S>) -> Result<Self> {
        if cov.dim() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: cov.dim(),
            });
        }
        let second = cov.lincomb(S::one(), &Matrix::outer(mean), S::one());
        Ok(Self {
            mean: mean.to_vec(),
            neg_second_moment: second.scaled(-S::one()),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Raw `Σ = −Φ − φφᵀ`, symmetrized, without regularization.
    pub fn raw_covariance(&self) -> Matrix<S> {
        self.neg_second_moment
            .lincomb(-S::one(), &Matrix::outer(&self.mean), -S::one())
            .symmetrized()
    }

    /// Recovered covariance, ridge-regularized when ill-conditioned.
    pub fn covariance(&self) -> Result<Matrix<S>> {
        let mut sigma = self.raw_covariance();
        let d = S::from_usize_lossy(self.dim());
        let (vals, _) = sym_eigen(&sigma);
        let lo = vals[0];
        let hi = vals[vals.len() - 1];
        if !(lo > S::zero()) || hi / lo > S::lit(MAX_CONDITION) {
            let ridge = S::lit(RIDGE_SCALE) * sigma.trace() / d;
            if !(ridge > S::zero()) || !ridge.is_finite() {
                return Err(Error::SingularCovariance);
            }
            sigma.add_diagonal(ridge);
        }
        Ok(sigma)
    }

    /// `(μ, Σ)`.
    pub fn to_source(&self) -> Result<(Vec<S>, Matrix<S>)> {
        Ok((self.mean.clone(), self.covariance()?))
    }

    /// Natural parameters `θ = (Σ⁻¹μ, ½Σ⁻¹)` plus `ln det Σ`.
    pub fn natural(&self) -> Result<GaussianNatural<S>> {
        let sigma = self.covariance()?;
        let chol = Cholesky::new(&sigma).ok_or(Error::SingularCovariance)?;
        let precision = chol.inverse();
        let precision_mean = precision.mul_vec(&self.mean);
        Ok(GaussianNatural {
            precision_mean,
            half_precision: precision.scaled(S::lit(0.5)),
            log_det_cov: chol.log_det(),
        })
    }
}

/// Natural-parameter view of a Gaussian.
#[derive(Clone, Debug)]
pub struct GaussianNatural<S> {
    pub precision_mean: Vec<S>,
    pub half_precision: Matrix<S>,
    pub log_det_cov: S,
}

fn half_log_2pi_e<S: Scalar>() -> S {
    S::lit(0.5) * (S::lit(2.0) * S::PI() * S::E()).ln()
}

impl<S: Scalar> ExpectationParams<S> for GaussianExpParams<S> {
    type Observation = [S];

    fn sufficient_statistic(x: &[S]) -> Result<Self> {
        Ok(Self {
            mean: x.to_vec(),
            neg_second_moment: Matrix::outer(x).scaled(-S::one()),
        })
    }

    /// `−½ ln det Σ − (d/2) ln(2πe)`, algebraically equal to
    /// `−½ ln(1 + φᵀΦ⁻¹φ) − ½ ln det(−Φ) − (d/2) ln(2πe)`.
    fn dual_potential(&self) -> Result<S> {
        let nat = self.natural()?;
        let d = S::from_usize_lossy(self.dim());
        Ok(-S::lit(0.5) * nat.log_det_cov - d * half_log_2pi_e::<S>())
    }

    fn dual_gradient(&self) -> Result<Self> {
        let nat = self.natural()?;
        Ok(Self {
            mean: nat.precision_mean,
            neg_second_moment: nat.half_precision,
        })
    }

    fn inner(&self, other: &Self) -> S {
        let v: S = self.mean.iter().zip(&other.mean).map(|(&a, &b)| a * b).sum();
        v + self.neg_second_moment.frobenius_inner(&other.neg_second_moment)
    }

    fn statistic_inner(&self, x: &[S]) -> S {
        let v: S = self.mean.iter().zip(x).map(|(&a, &b)| a * b).sum();
        v - self.neg_second_moment.quad_form(x)
    }

    fn lincomb(&self, a: S, other: &Self, b: S) -> Self {
        Self {
            mean: self
                .mean
                .iter()
                .zip(&other.mean)
                .map(|(&x, &y)| a * x + b * y)
                .collect(),
            neg_second_moment: self.neg_second_moment.lincomb(a, &other.neg_second_moment, b),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_normal(d: usize) -> GaussianExpParams<f64> {
        GaussianExpParams::from_source(&vec![0.0; d], &Matrix::identity(d)).unwrap()
    }

    #[test]
    fn potential_of_standard_normal() {
        // −(d/2) ln(2πe)
        let g1 = std_normal(1).dual_potential().unwrap();
        assert!((g1 - (-1.418_938_533_204_672_7)).abs() < 1e-12);
        let g2 = std_normal(2).dual_potential().unwrap();
        assert!((g2 - (-2.837_877_066_409_345_5)).abs() < 1e-12);
    }

    #[test]
    fn printed_form_agrees() {
        let mean = vec![0.3, -1.2];
        let cov = Matrix::from_rows(&[vec![2.0, 0.4], vec![0.4, 0.7]]);
        let eta = GaussianExpParams::from_source(&mean, &cov).unwrap();
        // −½ ln(1 + φᵀΦ⁻¹φ) − ½ ln det(−Φ) − ln(2πe)
        let neg_phi = eta.neg_second_moment.scaled(-1.0);
        let ch = Cholesky::new(&neg_phi).unwrap();
        let sol = ch.solve(&mean);
        let quad: f64 = mean.iter().zip(&sol).map(|(a, b)| a * b).sum();
        let printed = -0.5 * (1.0 - quad).ln() - 0.5 * ch.log_det() - (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert!((printed - eta.dual_potential().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn zero_mean_gradient_vanishes_in_first_block() {
        let g = std_normal(1).dual_gradient().unwrap();
        assert_eq!(g.mean, vec![0.0]);
        assert!((g.neg_second_moment.get(0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn statistic_shape() {
        let t = GaussianExpParams::sufficient_statistic(&[1.0, 2.0][..]).unwrap();
        assert_eq!(t.mean, vec![1.0, 2.0]);
        assert_eq!(
            t.neg_second_moment,
            Matrix::from_rows(&[vec![-1.0, -2.0], vec![-2.0, -4.0]])
        );
    }

    #[test]
    fn ill_conditioned_covariance_is_ridged() {
        let cov: Matrix<f64> = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1e-14]]);
        let eta = GaussianExpParams::from_source(&[0.0, 0.0], &cov).unwrap();
        let reg = eta.covariance().unwrap();
        assert!(reg.get(1, 1) > 4e-7);
        assert!(eta.dual_potential().unwrap().is_finite());
    }

    #[test]
    fn zero_covariance_is_an_error() {
        let eta = GaussianExpParams::<f64>::sufficient_statistic(&[1.0, 2.0][..]).unwrap();
        assert!(matches!(eta.dual_potential(), Err(Error::SingularCovariance)));
    }
}
