use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{dot3, sym_eigen3, Vec3};
use crate::scalar::Scalar;

/// Pinhole camera intrinsics in pixels, plus the depth-image unit scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Depth-image units per meter (1000 for millimeter PNGs).
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
}

fn default_depth_scale() -> f64 {
    1000.0
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            depth_scale: default_depth_scale(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidParameter("focal lengths must be positive".into()));
        }
        if !(self.depth_scale > 0.0) {
            return Err(Error::InvalidParameter("depth scale must be positive".into()));
        }
        Ok(())
    }

    /// Intrinsics of the image downsampled by `factor` with top-left sampling.
    pub fn downsampled(&self, factor: usize) -> Self {
        let f = factor.max(1) as f64;
        Self {
            fx: self.fx / f,
            fy: self.fy / f,
            cx: self.cx / f,
            cy: self.cy / f,
            depth_scale: self.depth_scale,
        }
    }

    /// Pixel coordinates of a camera-frame point.
    pub fn project<S: Scalar>(&self, p: &Vec3<S>) -> (f64, f64) {
        let (x, y, z) = (p[0].as_f64(), p[1].as_f64(), p[2].as_f64());
        (self.fx * x / z + self.cx, self.fy * y / z + self.cy)
    }
}

/// Whether a depth sample is usable.
#[inline]
pub fn depth_valid<S: Scalar>(z: S) -> bool {
    z.is_finite() && z > S::zero()
}

/// Camera-frame 3D point of every pixel with valid depth (meters):
/// `X = (u − cx) z / fx`, `Y = (v − cy) z / fy`, `Z = z`.
pub fn backproject<S: Scalar>(depth: &Grid<S>, intr: &Intrinsics) -> Grid<Option<Vec3<S>>> {
    let (fx, fy, cx, cy) = (S::lit(intr.fx), S::lit(intr.fy), S::lit(intr.cx), S::lit(intr.cy));
    Grid::from_fn(depth.width(), depth.height(), |u, v| {
        let z = *depth.get(u, v);
        depth_valid(z).then(|| {
            [
                (S::from_usize_lossy(u) - cx) * z / fx,
                (S::from_usize_lossy(v) - cy) * z / fy,
                z,
            ]
        })
    })
}

/// Neighbors whose depth differs from the center by more than this fraction
/// of the center depth are left out of the plane fit.
pub const DEPTH_JUMP_FRACTION: f64 = 0.03;
/// Default side length of the normal-estimation window.
pub const NORMAL_WINDOW: usize = 11;

/// Surface normals by total-least-squares plane fits over a `window × window`
/// neighborhood, oriented toward the camera (`n · p ≤ 0`).
///
/// Pixels with fewer than three usable neighbors, or whose neighbors are
/// collinear, get no normal.
pub fn estimate_normals<S: Scalar>(points: &Grid<Option<Vec3<S>>>, window: usize) -> Result<Grid<Option<Vec3<S>>>> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "normal window must be odd and at least 3, got {window}"
        )));
    }
    let (w, h) = (points.width(), points.height());
    let r = window / 2;
    let rows: Vec<Vec<Option<Vec3<S>>>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let p0 = (*points.get(x, y))?;
                    fit_normal(points, x, y, r, &p0)
                })
                .collect()
        })
        .collect();
    Grid::from_vec(w, h, rows.into_iter().flatten().collect())
}

/// Fits the full window, the four half-windows and the four quadrants that
/// contain the center, and keeps the best fit that also passes near the
/// center, so pixels next to a crease take the normal of their own side.
fn fit_normal<S: Scalar>(points: &Grid<Option<Vec3<S>>>, x: usize, y: usize, r: usize, p0: &Vec3<S>) -> Option<Vec3<S>> {
    let (x0, x1) = (x.saturating_sub(r), (x + r).min(points.width() - 1));
    let (y0, y1) = (y.saturating_sub(r), (y + r).min(points.height() - 1));
    let windows = [
        (x0, x1, y0, y1),
        (x0, x, y0, y1),
        (x, x1, y0, y1),
        (x0, x1, y0, y),
        (x0, x1, y, y1),
        (x0, x, y0, y),
        (x, x1, y0, y),
        (x0, x, y, y1),
        (x, x1, y, y1),
    ];
    let mut best: Option<(S, Vec3<S>)> = None;
    for (k, (wx0, wx1, wy0, wy1)) in windows.into_iter().enumerate() {
        // A partial window needs valid points over at least three rows and
        // columns; a single image column back-projects onto one plane
        // through the camera.
        let min_support = if k == 0 { 1 } else { 3 };
        if let Some((var, n)) = fit_window(points, (wx0, wx1), (wy0, wy1), p0, min_support) {
            if best.as_ref().is_none_or(|b| var < b.0) {
                best = Some((var, n));
            }
        }
    }
    let mut nrm = best?.1;
    if dot3(&nrm, p0) > S::zero() {
        nrm = nrm.map(|v| -v);
    }
    crate::linalg::normalize3(&nrm)
}

/// TLS plane normal over a rectangle and its fit score
/// `(λ_min + d²) / Σλ`, where `d` is the distance of the center pixel from
/// the fitted plane.
fn fit_window<S: Scalar>(
    points: &Grid<Option<Vec3<S>>>,
    (x0, x1): (usize, usize),
    (y0, y1): (usize, usize),
    p0: &Vec3<S>,
    min_support: usize,
) -> Option<(S, Vec3<S>)> {
    let jump = S::lit(DEPTH_JUMP_FRACTION) * p0[2];
    let mut n = 0usize;
    let mut cols = vec![false; x1 - x0 + 1];
    let mut rows = 0usize;
    let mut s1 = [S::zero(); 3];
    let mut s2 = [[S::zero(); 3]; 3];
    for yy in y0..=y1 {
        let before = n;
        for xx in x0..=x1 {
            let Some(p) = points.get(xx, yy) else { continue };
            if (p[2] - p0[2]).abs() > jump {
                continue;
            }
            let d = [p[0] - p0[0], p[1] - p0[1], p[2] - p0[2]];
            n += 1;
            cols[xx - x0] = true;
            for a in 0..3 {
                s1[a] += d[a];
                for b in a..3 {
                    s2[a][b] += d[a] * d[b];
                }
            }
        }
        rows += usize::from(n > before);
    }
    if n < 3 || rows < min_support || cols.iter().filter(|&&c| c).count() < min_support {
        return None;
    }
    let nn = S::from_usize_lossy(n);
    let mut cov = [[S::zero(); 3]; 3];
    for a in 0..3 {
        for b in a..3 {
            let v = s2[a][b] / nn - s1[a] * s1[b] / (nn * nn);
            cov[a][b] = v;
            cov[b][a] = v;
        }
    }
    let (vals, vecs) = sym_eigen3(&cov);
    // Collinear neighborhoods have a two-dimensional null space.
    if !(vals[1] > S::tol(1e-12) * vals[2]) {
        return None;
    }
    // Offset of the center from the fitted plane through the centroid.
    let offset = dot3(&vecs[0], &s1) / nn;
    let total = vals[0].max(S::zero()) + vals[1] + vals[2];
    Some(((vals[0].max(S::zero()) + offset * offset) / total, vecs[0]))
}
