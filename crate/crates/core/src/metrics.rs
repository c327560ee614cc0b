//! Segmentation evaluation against a ground-truth label map: variation of
//! information, probabilistic Rand index, ground-truth region covering,
//! boundary displacement error and boundary F-measure.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::rag::LabelMap;

/// Boundary tolerance of the F-measure as a fraction of the image diagonal.
pub const BFM_TOLERANCE_FRACTION: f64 = 0.0075;

/// Joint label histogram of two equally sized maps.
#[derive(Clone, Debug)]
pub struct Contingency {
    pub joint: HashMap<(u32, u32), usize>,
    pub rows: HashMap<u32, usize>,
    pub cols: HashMap<u32, usize>,
    pub total: usize,
}

impl Contingency {
    pub fn new(a: &LabelMap, b: &LabelMap) -> Result<Self> {
        a.check_shape(b)?;
        let mut joint = HashMap::new();
        let mut rows = HashMap::new();
        let mut cols = HashMap::new();
        for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
            *joint.entry((x, y)).or_insert(0) += 1;
            *rows.entry(x).or_insert(0) += 1;
            *cols.entry(y).or_insert(0) += 1;
        }
        Ok(Self {
            joint,
            rows,
            cols,
            total: a.len(),
        })
    }
}

fn entropy<'a>(counts: impl Iterator<Item = &'a usize>, total: f64) -> f64 {
    counts
        .map(|&c| {
            let p = c as f64 / total;
            if p > 0.0 { -p * p.ln() } else { 0.0 }
        })
        .sum()
}

/// `H(test | gt) + H(gt | test)` in nats.
pub fn voi(test: &LabelMap, gt: &LabelMap) -> Result<f64> {
    let c = Contingency::new(test, gt)?;
    if c.total == 0 {
        return Ok(0.0);
    }
    let m = c.total as f64;
    let hj = entropy(c.joint.values(), m);
    let v = 2.0 * hj - entropy(c.rows.values(), m) - entropy(c.cols.values(), m);
    Ok(v.max(0.0))
}

fn pairs(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Fraction of unordered pixel pairs on which both maps agree about being in
/// the same region or not.
pub fn pri(test: &LabelMap, gt: &LabelMap) -> Result<f64> {
    let c = Contingency::new(test, gt)?;
    if c.total < 2 {
        return Ok(1.0);
    }
    let total = pairs(c.total);
    let same_a: f64 = c.rows.values().map(|&n| pairs(n)).sum();
    let same_b: f64 = c.cols.values().map(|&n| pairs(n)).sum();
    let same_ab: f64 = c.joint.values().map(|&n| pairs(n)).sum();
    let disagree = same_a + same_b - 2.0 * same_ab;
    Ok(((total - disagree) / total).clamp(0.0, 1.0))
}

/// Ground-truth region covering: size-weighted best IoU of every
/// ground-truth region with any test region.
pub fn gtrc(test: &LabelMap, gt: &LabelMap) -> Result<f64> {
    let c = Contingency::new(test, gt)?;
    if c.total == 0 {
        return Ok(1.0);
    }
    let mut best: HashMap<u32, f64> = HashMap::new();
    for (&(t, g), &n) in &c.joint {
        let iou = n as f64 / (c.rows[&t] + c.cols[&g] - n) as f64;
        let e = best.entry(g).or_insert(0.0);
        if iou > *e {
            *e = iou;
        }
    }
    let m = c.total as f64;
    let s: f64 = best.iter().map(|(g, &iou)| c.cols[g] as f64 / m * iou).sum();
    Ok(s.clamp(0.0, 1.0))
}

/// Pixels with a 4-neighbor of a different label.
pub fn boundary_map(labels: &LabelMap) -> Grid<bool> {
    let data = (0..labels.len())
        .map(|i| {
            let l = labels.as_slice()[i];
            labels.neighbors4(i).any(|j| labels.as_slice()[j] != l)
        })
        .collect();
    Grid::from_vec(labels.width(), labels.height(), data).expect("shape preserved")
}

/// Squared distance transform of one row by the lower envelope of
/// parabolas rooted at the finite samples.
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let mut v: Vec<usize> = Vec::new();
    let mut z: Vec<f64> = Vec::new();
    for q in (0..f.len()).filter(|&q| f[q].is_finite()) {
        let mut s = f64::NEG_INFINITY;
        while let Some(&p) = v.last() {
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= *z.last().expect("paired with v") {
                v.pop();
                z.pop();
                s = f64::NEG_INFINITY;
            } else {
                break;
            }
        }
        v.push(q);
        z.push(s);
    }
    if v.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance from every pixel to the nearest set pixel;
/// infinite everywhere when no pixel is set.
pub fn distance_transform(mask: &Grid<bool>) -> Grid<f64> {
    let (w, h) = (mask.width(), mask.height());
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut d: Vec<f64> = mask.as_slice().iter().map(|&b| if b { 0.0 } else { f64::INFINITY }).collect();
    for x in 0..w {
        for y in 0..h {
            f[y] = d[y * w + x];
        }
        edt_1d(&f[..h], &mut out[..h]);
        for y in 0..h {
            d[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&d[y * w..(y + 1) * w]);
        edt_1d(&f[..w], &mut out[..w]);
        d[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    Grid::from_vec(w, h, d.into_iter().map(f64::sqrt).collect()).expect("shape preserved")
}

fn mean_distance(from: &Grid<bool>, to_dt: &Grid<f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for (&b, &d) in from.as_slice().iter().zip(to_dt.as_slice()) {
        if b {
            s += d;
            n += 1;
        }
    }
    if n == 0 { 0.0 } else { s / n as f64 }
}

/// Pixels on the image frame.
fn frame_mask(w: usize, h: usize) -> Grid<bool> {
    Grid::from_fn(w, h, |x, y| x == 0 || y == 0 || x + 1 == w || y + 1 == h)
}

/// Boundary displacement error: mean of the two directed mean distances
/// between boundary pixel sets. When only one map has boundaries, the other
/// map's single region is bounded by the image frame and only the distance
/// from the non-empty side is used. Two boundary-free maps score 0.
pub fn bde(test: &LabelMap, gt: &LabelMap) -> Result<f64> {
    test.check_shape(gt)?;
    let bt = boundary_map(test);
    let bg = boundary_map(gt);
    let et = !bt.as_slice().iter().any(|&b| b);
    let eg = !bg.as_slice().iter().any(|&b| b);
    Ok(match (et, eg) {
        (true, true) => 0.0,
        (true, false) => mean_distance(&bg, &distance_transform(&frame_mask(test.width(), test.height()))),
        (false, true) => mean_distance(&bt, &distance_transform(&frame_mask(gt.width(), gt.height()))),
        (false, false) => {
            0.5 * (mean_distance(&bt, &distance_transform(&bg)) + mean_distance(&bg, &distance_transform(&bt)))
        }
    })
}

/// Default boundary tolerance in pixels for an image size.
pub fn default_bfm_tolerance(width: usize, height: usize) -> f64 {
    BFM_TOLERANCE_FRACTION * ((width * width + height * height) as f64).sqrt()
}

/// Boundary precision, recall and F-measure. A test boundary pixel counts
/// as matched when a ground-truth boundary pixel lies within `tol_px`
/// (inclusive), and conversely for recall. An empty boundary set has
/// precision (or recall) 1.
pub fn boundary_prf(test: &LabelMap, gt: &LabelMap, tol_px: f64) -> Result<(f64, f64, f64)> {
    test.check_shape(gt)?;
    if !(tol_px >= 0.0) {
        return Err(Error::InvalidParameter("boundary tolerance must be non-negative".into()));
    }
    let bt = boundary_map(test);
    let bg = boundary_map(gt);
    let share = |from: &Grid<bool>, to: &Grid<bool>| {
        let dt = distance_transform(to);
        let (mut hit, mut n) = (0usize, 0usize);
        for (&b, &d) in from.as_slice().iter().zip(dt.as_slice()) {
            if b {
                n += 1;
                if d <= tol_px + 1e-9 {
                    hit += 1;
                }
            }
        }
        if n == 0 { 1.0 } else { hit as f64 / n as f64 }
    };
    let p = share(&bt, &bg);
    let r = share(&bg, &bt);
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    Ok((p, r, f))
}

/// Boundary F-measure.
pub fn bfm(test: &LabelMap, gt: &LabelMap, tol_px: f64) -> Result<f64> {
    boundary_prf(test, gt, tol_px).map(|(_, _, f)| f)
}

/// All five scores of one test map against its ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub voi: f64,
    pub bde: f64,
    pub pri: f64,
    pub gtrc: f64,
    pub bfm: f64,
}

impl MetricReport {
    pub const PERFECT: Self = Self {
        voi: 0.0,
        bde: 0.0,
        pri: 1.0,
        gtrc: 1.0,
        bfm: 1.0,
    };

    pub fn as_array(&self) -> [f64; 5] {
        [self.voi, self.bde, self.pri, self.gtrc, self.bfm]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            voi: a[0],
            bde: a[1],
            pri: a[2],
            gtrc: a[3],
            bfm: a[4],
        }
    }
}

pub const METRIC_NAMES: [&str; 5] = ["voi", "bde", "pri", "gtrc", "bfm"];

/// Scores `test` against `gt`; `tol_px` defaults to 0.75% of the diagonal.
pub fn evaluate(test: &LabelMap, gt: &LabelMap, tol_px: Option<f64>) -> Result<MetricReport> {
    let tol = tol_px.unwrap_or_else(|| default_bfm_tolerance(gt.width(), gt.height()));
    Ok(MetricReport {
        voi: voi(test, gt)?,
        bde: bde(test, gt)?,
        pri: pri(test, gt)?,
        gtrc: gtrc(test, gt)?,
        bfm: bfm(test, gt, tol)?,
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean and median of a batch of reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub count: usize,
    pub mean: MetricReport,
    pub median: MetricReport,
}

impl BatchSummary {
    pub fn new(reports: &[MetricReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::Input("no reports to aggregate".into()));
        }
        let n = reports.len() as f64;
        let mut mean = [0.0; 5];
        let mut med = [0.0; 5];
        for k in 0..5 {
            mean[k] = reports.iter().map(|r| r.as_array()[k]).sum::<f64>() / n;
            med[k] = median(reports.iter().map(|r| r.as_array()[k]).collect());
        }
        Ok(Self {
            count: reports.len(),
            mean: MetricReport::from_array(mean),
            median: MetricReport::from_array(med),
        })
    }
}

/// Counts of GTRC values in `bins` equal-width bins over `[0, 1]`; the last
/// bin includes 1.
pub fn gtrc_histogram(reports: &[MetricReport], bins: usize) -> Vec<(f64, f64, usize)> {
    let bins = bins.max(1);
    let mut counts = vec![0usize; bins];
    for r in reports {
        let b = ((r.gtrc * bins as f64).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (i as f64 / bins as f64, (i + 1) as f64 / bins as f64, c))
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Input(format!("writing CSV: {e}"))
}

/// Per-image report table with a leading name column.
pub fn write_reports_csv<W: Write>(out: W, rows: &[(String, MetricReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(std::iter::once("image").chain(METRIC_NAMES)).map_err(csv_err)?;
    for (name, r) in rows {
        let vals = r.as_array().map(|v| v.to_string());
        w.write_record(std::iter::once(name.as_str()).chain(vals.iter().map(String::as_str)))
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

/// GTRC histogram as `bin_lo,bin_hi,count`.
pub fn write_histogram_csv<W: Write>(out: W, hist: &[(f64, f64, usize)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_lo", "bin_hi", "count"]).map_err(csv_err)?;
    for (lo, hi, c) in hist {
        w.serialize((lo, hi, c)).map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_transform_single_seed() {
        let mut m = Grid::filled(7, 5, false);
        m.set(2, 1, true);
        let d = distance_transform(&m);
        for y in 0..5 {
            for x in 0..7 {
                let want = (((x as f64) - 2.0).powi(2) + ((y as f64) - 1.0).powi(2)).sqrt();
                assert!((d.get(x, y) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn distance_transform_empty_is_infinite() {
        let d = distance_transform(&Grid::filled(3, 3, false));
        assert!(d.as_slice().iter().all(|v| v.is_infinite()));
    }
}
