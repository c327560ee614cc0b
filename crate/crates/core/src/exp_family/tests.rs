use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::linalg::Matrix;

// ---------- independent oracles ----------

/// Bisection on `coth κ − 1/κ = r` using only std functions.
fn fisher_bisect(r: f64) -> f64 {
    let (mut a, mut b) = (1e-8_f64, 1e4_f64);
    for _ in 0..300 {
        let m = 0.5 * (a + b);
        if 1.0 / m.tanh() - 1.0 / m < r {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// `M(1/2, 3/2, κ)` from 200 exact rational terms `(1/2)_j / (3/2)_j / j!`.
fn kummer_rational(kappa: i64) -> f64 {
    let mut sum = BigRational::zero();
    let mut pow_over_fact = BigRational::from_integer(BigInt::from(1));
    let k = BigRational::from_integer(BigInt::from(kappa));
    for j in 0..200_i64 {
        // (1/2)_j / (3/2)_j = 1 / (2j + 1)
        let ratio = BigRational::new(BigInt::from(1), BigInt::from(2 * j + 1));
        sum += &pow_over_fact * ratio;
        pow_over_fact = pow_over_fact * &k / BigRational::from_integer(BigInt::from(j + 1));
    }
    sum.to_f64().unwrap()
}

/// Kummer ratio by bisection over a plain f64 series of `ln M`.
fn watson_bisect(r: f64) -> f64 {
    let series_q = |k: f64| {
        let (mut c, mut m0, mut m1) = (1.0_f64, 0.0_f64, 0.0_f64);
        for j in 0..2000 {
            let jf = j as f64;
            m0 += c / (2.0 * jf + 1.0);
            m1 += c / (2.0 * jf + 3.0);
            c *= k / (jf + 1.0);
            if jf > k && c < 1e-18 * m0 {
                break;
            }
        }
        m1 / m0
    };
    let (mut a, mut b) = (0.0_f64, 600.0_f64);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if series_q(m) < r {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Gaussian log-normalizer in natural parameters `θ = (θ₁, θ₂)` for the
/// statistic `(x, −xxᵀ)`: `F = ¼ θ₁ᵀθ₂⁻¹θ₁ − ½ ln det(2θ₂) + (d/2) ln 2π`.
fn gaussian_log_normalizer(theta: &GaussianExpParams<f64>) -> f64 {
    let d = theta.mean.len();
    let t2 = &theta.neg_second_moment;
    let ch = crate::linalg::Cholesky::new(t2).unwrap();
    let sol = ch.solve(&theta.mean);
    let quad: f64 = theta.mean.iter().zip(&sol).map(|(a, b)| a * b).sum();
    0.25 * quad - 0.5 * (ch.log_det() + d as f64 * 2f64.ln())
        + 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln()
}

// ---------- generators ----------

fn random_gaussian(rng: &mut ChaCha8Rng, d: usize) -> GaussianExpParams<f64> {
    let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let a: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut cov = Matrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            let v: f64 = (0..d).map(|k| a[i][k] * a[j][k]).sum();
            cov.set(i, j, v);
        }
    }
    cov.add_diagonal(0.2);
    GaussianExpParams::from_source(&mean, &cov).unwrap()
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    sampling::sample_uniform_sphere(rng)
}

fn random_kappa(rng: &mut ChaCha8Rng) -> f64 {
    // log-uniform over [0.5, 500]
    (rng.random_range(0.5_f64.ln()..500_f64.ln())).exp()
}

fn random_fisher(rng: &mut ChaCha8Rng) -> FisherExpParams<f64> {
    FisherExpParams::from_source(&random_unit(rng), random_kappa(rng)).unwrap()
}

fn random_watson(rng: &mut ChaCha8Rng) -> WatsonExpParams<f64> {
    WatsonExpParams::from_source(&random_unit(rng), random_kappa(rng)).unwrap()
}

// ---------- Gaussian ----------

#[test]
fn gaussian_kl_between_unit_variance_normals() {
    let a = GaussianExpParams::from_source(&[0.0], &Matrix::identity(1)).unwrap();
    let b = GaussianExpParams::from_source(&[1.0], &Matrix::identity(1)).unwrap();
    let d: f64 = bregman_divergence(&a, &b).unwrap();
    assert!((d - 0.5).abs() < 1e-12, "{d}");
}

#[test]
fn gaussian_legendre_duality() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for d in 1..=3 {
        for _ in 0..30 {
            let eta = random_gaussian(&mut rng, d);
            let theta = eta.dual_gradient().unwrap();
            let g = eta.dual_potential().unwrap();
            let f = gaussian_log_normalizer(&theta);
            assert!((theta.inner(&eta) - g - f).abs() < 1e-8, "d={d}");
        }
    }
}

#[test]
fn gaussian_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let eta = random_gaussian(&mut rng, 3);
        let grad = eta.dual_gradient().unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut p = eta.clone();
            let mut m = eta.clone();
            p.mean[i] += h;
            m.mean[i] -= h;
            let fd = (p.dual_potential().unwrap() - m.dual_potential().unwrap()) / (2.0 * h);
            assert!((fd - grad.mean[i]).abs() < 1e-5 * grad.mean[i].abs().max(1.0));
        }
        for i in 0..3 {
            for j in 0..3 {
                let mut p = eta.clone();
                let mut m = eta.clone();
                p.neg_second_moment.set(i, j, eta.neg_second_moment.get(i, j) + h);
                m.neg_second_moment.set(i, j, eta.neg_second_moment.get(i, j) - h);
                let fd = (p.dual_potential().unwrap() - m.dual_potential().unwrap()) / (2.0 * h);
                let an = grad.neg_second_moment.get(i, j);
                assert!((fd - an).abs() < 1e-5 * an.abs().max(1.0), "{fd} vs {an}");
            }
        }
    }
}

#[test]
fn gaussian_dual_density_matches_direct_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let eta = random_gaussian(&mut rng, 3);
        let (mean, cov) = eta.to_source().unwrap();
        let x = [0.3, -0.2, 1.1];
        let a = log_density_dual(&x[..], &eta).unwrap();
        let b = log_density(&x, &SourceParams::Gaussian { mean, cov }).unwrap();
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn standard_normal_log_density_at_zero() {
    let p = SourceParams::Gaussian { mean: vec![0.0], cov: Matrix::identity(1) };
    let v: f64 = log_density(&[0.0], &p).unwrap();
    assert!((v + 0.918_938_533_204_672_7).abs() < 1e-14);
}

// ---------- Fisher ----------

#[test]
fn fisher_kappa_at_point_nine() {
    let k = estimate_kappa_fisher(0.9_f64);
    let oracle = fisher_bisect(0.9);
    assert!((k - oracle).abs() < 1e-8);
    assert!((k - 10.0).abs() < 1e-3);
    let g = FisherExpParams { eta: [0.0, 0.0, 0.9] }.dual_potential().unwrap();
    assert!((g - (oracle * 0.9 - (oracle.sinh() / oracle).ln())).abs() < 1e-9);
}

#[test]
fn fisher_newton_and_bisection_agree() {
    for &r in &[0.05_f64, 0.3, 0.5, 0.75, 0.95, 0.998] {
        let k = estimate_kappa_fisher(r);
        let (a, _) = fisher_mean_resultant(k);
        assert!((a - r).abs() < 1e-9);
        assert!((k - fisher_bisect(r)).abs() < 1e-8 * k.max(1.0), "r={r}");
    }
}

#[test]
fn fisher_uniform_limit() {
    let p = FisherExpParams { eta: [0.0, 1e-13, 0.0_f64] };
    assert_eq!(p.kappa(), 0.0);
    assert_eq!(p.dual_potential().unwrap(), 0.0);
    let lf: f64 = log_density(&[1.0, 0.0, 0.0], &SourceParams::Fisher { mean: [0.0, 0.0, 1.0], kappa: 0.0 }).unwrap();
    assert!((lf.exp() - 1.0 / (4.0 * std::f64::consts::PI)).abs() < 1e-15);
}

#[test]
fn fisher_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let eta = random_fisher(&mut rng);
        let grad = eta.dual_gradient().unwrap();
        let h = 1e-3 * (1.0 - eta.norm());
        for i in 0..3 {
            let mut p = eta;
            let mut m = eta;
            p.eta[i] += h;
            m.eta[i] -= h;
            let fd = (p.dual_potential().unwrap() - m.dual_potential().unwrap()) / (2.0 * h);
            assert!((fd - grad.eta[i]).abs() < 1e-5 * grad.eta[i].abs().max(1.0), "{fd} vs {}", grad.eta[i]);
        }
    }
}

#[test]
fn fisher_dual_density_matches_direct_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..20 {
        let eta = random_fisher(&mut rng);
        let x = random_unit(&mut rng);
        let a = log_density_dual(&x, &eta).unwrap();
        let b = log_density(
            &x,
            &SourceParams::Fisher { mean: eta.mean_direction().unwrap(), kappa: eta.kappa() },
        )
        .unwrap();
        assert!((a - b).abs() < 1e-8 * b.abs().max(1.0));
    }
}

/// Midpoint rule on a (z, φ) grid; `dz dφ` is the surface measure on S².
fn sphere_integral(f: impl Fn([f64; 3]) -> f64) -> f64 {
    let (nz, nphi) = (4000, 400);
    let dz = 2.0 / nz as f64;
    let dphi = std::f64::consts::TAU / nphi as f64;
    let mut total = 0.0;
    for i in 0..nz {
        let z = -1.0 + (i as f64 + 0.5) * dz;
        let s = (1.0 - z * z).sqrt();
        for j in 0..nphi {
            let phi = (j as f64 + 0.5) * dphi;
            total += f([s * phi.cos(), s * phi.sin(), z]);
        }
    }
    total * dz * dphi
}

#[test]
fn fisher_density_integrates_to_one() {
    let p = SourceParams::Fisher { mean: [0.0, 0.0, 1.0], kappa: 10.0 };
    let total = sphere_integral(|x| log_density(&x, &p).unwrap().exp());
    assert!((total - 1.0).abs() < 1e-3, "{total}");
    let tilted = SourceParams::Fisher { mean: [0.6, 0.0, 0.8], kappa: 3.0 };
    let total = sphere_integral(|x| log_density(&x, &tilted).unwrap().exp());
    assert!((total - 1.0).abs() < 1e-3, "{total}");
}

// ---------- Watson ----------

#[test]
fn kummer_series_matches_rational_oracle() {
    for k in [1_i64, 3, 10, 40] {
        let exact = kummer_rational(k);
        let ours = kummer::kummer(k as f64);
        assert!((ours - exact).abs() < 1e-13 * exact, "κ={k}: {ours} vs {exact}");
    }
}

#[test]
fn watson_kappa_at_point_eight() {
    let k = estimate_kappa_watson(0.8_f64);
    assert!(k > 0.0);
    assert!((k - watson_bisect(0.8)).abs() < 1e-8);
    assert!((kummer::kummer_ratio(k).0 - 0.8).abs() < 1e-8);
}

#[test]
fn watson_kappa_round_trip() {
    for &k in &[1.0_f64, 10.0, 100.0] {
        let r = kummer::kummer_ratio(k).0;
        let back = estimate_kappa_watson(r);
        assert!(((back - k) / k).abs() < 1e-6, "{k} -> {back}");
    }
}

#[test]
fn watson_potential_at_zero_concentration() {
    let p = WatsonExpParams::from_source(&[0.0, 0.0, 1.0], 0.0_f64).unwrap();
    assert!((p.resultant() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(p.dual_potential().unwrap(), 0.0);
}

#[test]
fn watson_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..100 {
        let eta = random_watson(&mut rng);
        let grad = eta.dual_gradient().unwrap();
        let h = 1e-3 * (1.0 - eta.resultant());
        for i in 0..6 {
            let mut p = eta;
            let mut m = eta;
            p.eta[i] += h;
            m.eta[i] -= h;
            let fd = (p.dual_potential().unwrap() - m.dual_potential().unwrap()) / (2.0 * h);
            assert!((fd - grad.eta[i]).abs() < 1e-5 * grad.eta[i].abs().max(1.0), "{fd} vs {}", grad.eta[i]);
        }
    }
}

#[test]
fn watson_density_is_antipodal_and_normalized() {
    let p = SourceParams::Watson { axis: [0.0, 0.6, 0.8], kappa: 12.0 };
    let x = [0.36, 0.48, -0.8];
    let neg = x.map(|v: f64| -v);
    assert_eq!(log_density(&x, &p).unwrap(), log_density(&neg, &p).unwrap());
    let total = sphere_integral(|x| log_density(&x, &p).unwrap().exp());
    assert!((total - 1.0).abs() < 1e-3, "{total}");
}

#[test]
fn watson_dual_density_matches_direct_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..20 {
        let eta = random_watson(&mut rng);
        let x = random_unit(&mut rng);
        let a = log_density_dual(&x, &eta).unwrap();
        let b = log_density(&x, &SourceParams::Watson { axis: eta.axis(), kappa: eta.kappa() }).unwrap();
        assert!((a - b).abs() < 1e-8 * b.abs().max(1.0));
    }
}

// ---------- shared properties ----------

#[test]
fn divergence_vanishes_on_the_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..50 {
        let g = random_gaussian(&mut rng, 3);
        assert!(bregman_divergence(&g, &g).unwrap().abs() < 1e-10);
        let f = random_fisher(&mut rng);
        assert!(bregman_divergence(&f, &f).unwrap().abs() < 1e-10);
        let w = random_watson(&mut rng);
        assert!(bregman_divergence(&w, &w).unwrap().abs() < 1e-10);
    }
}

#[derive(Clone)]
struct Weighted {
    a: GaussianExpParams<f64>,
    b: FisherExpParams<f64>,
    lambda: f64,
}

impl ExpectationParams<f64> for Weighted {
    type Observation = ();
    fn sufficient_statistic(_: &()) -> crate::error::Result<Self> {
        unreachable!()
    }
    fn dual_potential(&self) -> crate::error::Result<f64> {
        Ok(self.a.dual_potential()? + self.lambda * self.b.dual_potential()?)
    }
    fn dual_gradient(&self) -> crate::error::Result<Self> {
        let gb = self.b.dual_gradient()?;
        Ok(Self {
            a: self.a.dual_gradient()?,
            b: FisherExpParams { eta: gb.eta.map(|v| v * self.lambda) },
            lambda: self.lambda,
        })
    }
    fn inner(&self, o: &Self) -> f64 {
        self.a.inner(&o.a) + self.b.inner(&o.b)
    }
    fn statistic_inner(&self, _: &()) -> f64 {
        unreachable!()
    }
    fn lincomb(&self, x: f64, o: &Self, y: f64) -> Self {
        Self { a: self.a.lincomb(x, &o.a, y), b: self.b.lincomb(x, &o.b, y), lambda: self.lambda }
    }
}

#[test]
fn divergence_is_linear_in_the_generator() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..50 {
        let lambda = rng.random_range(0.0..3.0);
        let p = Weighted { a: random_gaussian(&mut rng, 3), b: random_fisher(&mut rng), lambda };
        let q = Weighted { a: random_gaussian(&mut rng, 3), b: random_fisher(&mut rng), lambda };
        let lhs = bregman_divergence(&p, &q).unwrap();
        let rhs = bregman_divergence(&p.a, &q.a).unwrap() + lambda * bregman_divergence(&p.b, &q.b).unwrap();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fisher_divergence_nonnegative_and_convex(seed in any::<u64>(), lambda in 0.0_f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, a2, b) = (random_fisher(&mut rng), random_fisher(&mut rng), random_fisher(&mut rng));
        let dab = bregman_divergence(&a, &b).unwrap();
        prop_assert!(dab >= -1e-9);
        let mix = a.lincomb(lambda, &a2, 1.0 - lambda);
        let lhs = bregman_divergence(&mix, &b).unwrap();
        let rhs = lambda * dab + (1.0 - lambda) * bregman_divergence(&a2, &b).unwrap();
        prop_assert!(lhs <= rhs + 1e-9 * rhs.abs().max(1.0));
    }

    #[test]
    fn watson_divergence_nonnegative_and_convex(seed in any::<u64>(), lambda in 0.0_f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, a2, b) = (random_watson(&mut rng), random_watson(&mut rng), random_watson(&mut rng));
        let dab = bregman_divergence(&a, &b).unwrap();
        prop_assert!(dab >= -1e-9);
        let mix = a.lincomb(lambda, &a2, 1.0 - lambda);
        let lhs = bregman_divergence(&mix, &b).unwrap();
        let rhs = lambda * dab + (1.0 - lambda) * bregman_divergence(&a2, &b).unwrap();
        prop_assert!(lhs <= rhs + 1e-9 * rhs.abs().max(1.0));
    }

    #[test]
    fn gaussian_divergence_nonnegative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_gaussian(&mut rng, 3);
        let b = random_gaussian(&mut rng, 3);
        prop_assert!(bregman_divergence(&a, &b).unwrap() >= -1e-10);
    }

    #[test]
    fn fisher_kappa_round_trip(kappa in 0.1_f64..500.0) {
        let r = fisher_mean_resultant(kappa).0;
        let back = estimate_kappa_fisher(r);
        prop_assert!(((back - kappa) / kappa).abs() < 1e-6);
    }

    #[test]
    fn watson_kappa_round_trip_prop(kappa in 0.1_f64..500.0) {
        let r = kummer::kummer_ratio(kappa).0;
        let back = estimate_kappa_watson(r);
        prop_assert!(((back - kappa) / kappa).abs() < 1e-6);
    }
}

#[test]
fn directional_statistic_rejects_non_unit() {
    assert!(directional_statistic(&[1.0, 1.0, 0.0_f64], DirectionalFamily::Watson).is_err());
    let t = directional_statistic(&[1.0, 0.0, 0.0_f64], DirectionalFamily::Watson).unwrap();
    assert_eq!(t, DirectionalParams::Watson(WatsonExpParams { eta: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0] }));
}

#[test]
fn single_precision_families() {
    let w = WatsonExpParams::from_source(&[0.0_f32, 0.0, 1.0], 10.0).unwrap();
    assert!((w.kappa() - 10.0).abs() < 1e-2);
    let f = FisherExpParams::from_source(&[1.0_f32, 0.0, 0.0], 5.0).unwrap();
    assert!(bregman_divergence(&f, &f).unwrap().abs() < 1e-4);
}
