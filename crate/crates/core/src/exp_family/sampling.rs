//! Random draws from the directional families, used for synthetic data.

use rand::Rng;

use crate::linalg::{cross3, normalize3, Vec3};
use crate::scalar::Scalar;

/// Uniform direction on S².
pub fn sample_uniform_sphere<S: Scalar, R: Rng + ?Sized>(rng: &mut R) -> Vec3<S> {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).max(0.0).sqrt();
    [S::lit(s * phi.cos()), S::lit(s * phi.sin()), S::lit(z)]
}

/// Orthonormal pair spanning the plane perpendicular to unit `mu`.
fn tangent_basis(mu: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let helper = if mu[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let u = normalize3(&cross3(mu, &helper)).expect("non-parallel helper");
    let v = cross3(mu, &u);
    (u, v)
}

fn along<S: Scalar, R: Rng + ?Sized>(mu: &Vec3<S>, w: f64, rng: &mut R) -> Vec3<S> {
    let m = [mu[0].as_f64(), mu[1].as_f64(), mu[2].as_f64()];
    let m = normalize3(&m).expect("unit mean direction");
    let (u, v) = tangent_basis(&m);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - w * w).max(0.0).sqrt();
    let (c, sn) = (phi.cos(), phi.sin());
    let out = [
        w * m[0] + s * (c * u[0] + sn * v[0]),
        w * m[1] + s * (c * u[1] + sn * v[1]),
        w * m[2] + s * (c * u[2] + sn * v[2]),
    ];
    let out = normalize3(&out).expect("unit sample");
    [S::lit(out[0]), S::lit(out[1]), S::lit(out[2])]
}

/// Fisher draw by inverting the CDF of `w = μᵀx`, whose density on `[-1, 1]`
/// is proportional to `exp(κw)`.
pub fn sample_fisher<S: Scalar, R: Rng + ?Sized>(mu: &Vec3<S>, kappa: S, rng: &mut R) -> Vec3<S> {
    let k = kappa.as_f64();
    let u: f64 = rng.random();
    let w = if k < 1e-8 {
        2.0 * u - 1.0
    } else {
        // w = 1 + ln(u + (1 − u) e^{−2κ}) / κ
        1.0 + (u + (1.0 - u) * (-2.0 * k).exp()).ln() / k
    };
    along(mu, w.clamp(-1.0, 1.0), rng)
}

/// Watson draw (κ ≥ 0) by rejection on `s = |μᵀx|` with envelope `exp(κ(s − 1))`,
/// followed by a random sign.
pub fn sample_watson<S: Scalar, R: Rng + ?Sized>(axis: &Vec3<S>, kappa: S, rng: &mut R) -> Vec3<S> {
    let k = kappa.as_f64();
    let s = loop {
        let u: f64 = rng.random();
        let s = if k < 1e-8 {
            u
        } else {
            // inverse CDF of exp(κ(s−1)) on [0, 1]
            1.0 + (u + (1.0 - u) * (-k).exp()).ln() / k
        };
        let accept = (-k * s * (1.0 - s)).exp();
        if rng.random::<f64>() <= accept {
            break s.clamp(0.0, 1.0);
        }
    };
    let w = if rng.random::<bool>() { s } else { -s };
    along(axis, w, rng)
}
