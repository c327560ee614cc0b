use rayon::prelude::*;

use super::geometry::depth_valid;
use crate::error::Result;
use crate::grid::Grid;
use crate::scalar::Scalar;

/// Normalized RGB-D gradient magnitude, values in `[0, 1]`.
pub type GradientMap<S> = Grid<S>;

/// Sobel gradient magnitude of one channel with replicated borders.
///
/// `valid` marks usable samples; an unusable neighbor is replaced by the
/// center value and an unusable center has zero gradient.
pub fn sobel_magnitude<S: Scalar>(chan: &Grid<S>, valid: Option<&Grid<bool>>) -> Grid<S> {
    let (w, h) = (chan.width(), chan.height());
    let ok = |x: usize, y: usize| valid.is_none_or(|v| *v.get(x, y));
    let rows: Vec<Vec<S>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    if !ok(x, y) {
                        return S::zero();
                    }
                    let c = *chan.get(x, y);
                    let at = |dx: isize, dy: isize| {
                        let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                        let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                        if ok(xx, yy) { *chan.get(xx, yy) } else { c }
                    };
                    let two = S::lit(2.0);
                    let gx = (at(1, -1) + two * at(1, 0) + at(1, 1)) - (at(-1, -1) + two * at(-1, 0) + at(-1, 1));
                    let gy = (at(-1, 1) + two * at(0, 1) + at(1, 1)) - (at(-1, -1) + two * at(0, -1) + at(1, -1));
                    (gx * gx + gy * gy).sqrt()
                })
                .collect()
        })
        .collect();
    Grid::from_vec(w, h, rows.into_iter().flatten().collect()).expect("shape preserved")
}

/// Min-max normalization to `[0, 1]`; a constant channel maps to zero.
pub fn normalize_min_max<S: Scalar>(g: &Grid<S>) -> Grid<S> {
    let lo = g.as_slice().iter().copied().fold(S::infinity(), S::min);
    let hi = g.as_slice().iter().copied().fold(S::neg_infinity(), S::max);
    let range = hi - lo;
    if !(range > S::zero()) {
        return g.map(|_| S::zero());
    }
    g.map(|&v| ((v - lo) / range).max(S::zero()).min(S::one()))
}

/// Pixel-wise maximum of the normalized Sobel magnitudes of the red, green,
/// blue and depth channels.
pub fn rgbd_gradient<S: Scalar>(color: &Grid<[u8; 3]>, depth: &Grid<S>) -> Result<GradientMap<S>> {
    color.check_shape(depth)?;
    let valid = depth.map(|&z| depth_valid(z));
    let mut out = normalize_min_max(&sobel_magnitude(depth, Some(&valid)));
    for c in 0..3 {
        let chan = color.map(|px| S::lit(px[c] as f64));
        let g = normalize_min_max(&sobel_magnitude(&chan, None));
        for (o, &v) in out.as_mut_slice().iter_mut().zip(g.as_slice()) {
            if v > *o {
                *o = v;
            }
        }
    }
    Ok(out)
}
