//! Statistical region merging over the region adjacency graph.
//!
//! A node is a merge candidate when its normals are concentrated; two
//! adjacent candidates merge when their shared boundary is weak, their
//! normal distributions are close, and their pooled 3D points fit one plane.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exp_family::ExpectationParams;
use crate::grid::Grid;
use crate::linalg::{cross3, dot3, norm3, sub3, sym_eigen3, Vec3};
use crate::rag::{edge_weight_wb, edge_weight_wd, relabel_by_size, LabelMap, RegionGraph};
use crate::rgbd_features::GradientMap;
use crate::scalar::Scalar;

/// RANSAC plane-fit settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub iters: usize,
    /// Inlier distance in meters.
    pub inlier_dist_m: f64,
    pub seed: u64,
    /// Larger point sets are uniformly subsampled to this size.
    pub max_points: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iters: 500,
            inlier_dist_m: 0.02,
            seed: 0,
            max_points: 20_000,
        }
    }
}

/// Merging thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeConfig {
    pub kappa_p: f64,
    pub th_b: f64,
    pub th_d: f64,
    pub th_r: f64,
    pub ransac: RansacConfig,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            kappa_p: 5.0,
            th_b: 0.2,
            th_d: 3.0,
            th_r: 0.9,
            ransac: RansacConfig::default(),
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.kappa_p > 0.0 && self.th_d > 0.0) {
            return bad("kappa_p and th_d must be positive");
        }
        if !(self.th_b > 0.0 && self.th_b < 1.0 && self.th_r > 0.0 && self.th_r < 1.0) {
            return bad("th_b and th_r must lie in (0, 1)");
        }
        if self.ransac.iters == 0 || !(self.ransac.inlier_dist_m > 0.0) || self.ransac.max_points < 3 {
            return bad("RANSAC needs iters > 0, a positive inlier distance and max_points >= 3");
        }
        Ok(())
    }
}

/// A fitted plane `normal · p = offset` and its inlier share.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneFit<S> {
    pub normal: Vec3<S>,
    pub offset: S,
    pub inlier_ratio: S,
}

fn count_inliers<S: Scalar>(points: &[Vec3<S>], normal: &Vec3<S>, offset: S, dist: S) -> usize {
    points.iter().filter(|p| (dot3(normal, p) - offset).abs() < dist).count()
}

fn tls_plane<S: Scalar>(points: &[Vec3<S>]) -> Option<(Vec3<S>, S)> {
    if points.len() < 3 {
        return None;
    }
    let n = S::from_usize_lossy(points.len());
    let mut c = [S::zero(); 3];
    for p in points {
        for a in 0..3 {
            c[a] += p[a];
        }
    }
    let c = c.map(|v| v / n);
    let mut m = [[S::zero(); 3]; 3];
    for p in points {
        let d = sub3(p, &c);
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] += d[a] * d[b];
            }
        }
    }
    let (_, vecs) = sym_eigen3(&m);
    let normal = vecs[0];
    Some((normal, dot3(&normal, &c)))
}

/// RANSAC plane fit: the best of `iters` three-point hypotheses, refined by a
/// total-least-squares fit to its inliers when that does not lose inliers.
pub fn fit_plane_ransac<S: Scalar>(points: &[Vec3<S>], cfg: &RansacConfig) -> Result<PlaneFit<S>> {
    if points.len() < 3 {
        return Err(Error::TooFewObservations {
            needed: 3,
            got: points.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let subset: Vec<Vec3<S>>;
    let pts = if points.len() > cfg.max_points {
        subset = sample(&mut rng, points.len(), cfg.max_points).into_iter().map(|i| points[i]).collect();
        &subset[..]
    } else {
        points
    };
    let dist = S::lit(cfg.inlier_dist_m);
    let eps = S::lit(1e-12);
    let hypotheses: Vec<(Vec3<S>, S)> = (0..cfg.iters)
        .filter_map(|_| {
            let idx = sample(&mut rng, pts.len(), 3);
            let (a, b, c) = (pts[idx.index(0)], pts[idx.index(1)], pts[idx.index(2)]);
            let (u, v) = (sub3(&b, &a), sub3(&c, &a));
            let n = cross3(&u, &v);
            let len = norm3(&n);
            if len <= eps * norm3(&u) * norm3(&v) || len == S::zero() {
                return None;
            }
            let n = n.map(|x| x / len);
            Some((n, dot3(&n, &a)))
        })
        .collect();
    if hypotheses.is_empty() {
        // Sampling may miss the rare non-collinear triple; check exhaustively
        // against the first point and the farthest one from it.
        let far = pts
            .iter()
            .max_by(|p, q| norm3(&sub3(p, &pts[0])).partial_cmp(&norm3(&sub3(q, &pts[0]))).unwrap())
            .copied()
            .unwrap();
        let u = sub3(&far, &pts[0]);
        let off_line = pts.iter().any(|p| {
            let v = sub3(p, &pts[0]);
            norm3(&cross3(&u, &v)) > eps.sqrt() * norm3(&u) * norm3(&v)
        });
        if !off_line {
            return Err(Error::Degenerate("points are collinear".into()));
        }
    }
    let counts: Vec<usize> = hypotheses
        .par_iter()
        .map(|(n, d)| count_inliers(pts, n, *d, dist))
        .collect();
    let (mut normal, mut offset, mut best) = match counts.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))) {
        Some((i, &c)) => (hypotheses[i].0, hypotheses[i].1, c),
        None => {
            let (n, d) = tls_plane(pts).ok_or_else(|| Error::Degenerate("no plane hypothesis".into()))?;
            (n, d, count_inliers(pts, &n, d, dist))
        }
    };
    let inliers: Vec<Vec3<S>> = pts.iter().filter(|p| (dot3(&normal, p) - offset).abs() < dist).copied().collect();
    if let Some((n, d)) = tls_plane(&inliers) {
        let c = count_inliers(pts, &n, d, dist);
        if c >= best {
            normal = n;
            offset = d;
            best = c;
        }
    }
    Ok(PlaneFit {
        normal,
        offset,
        inlier_ratio: S::from_usize_lossy(best) / S::from_usize_lossy(pts.len()),
    })
}

/// `κ > κ_p`.
pub fn candidacy<S: Scalar>(kappa: S, cfg: &MergeConfig) -> bool {
    kappa > S::lit(cfg.kappa_p)
}

/// `w_b < th_b` and `w_d < th_d`.
pub fn eligibility<S: Scalar>(w_b: S, w_d: S, cfg: &MergeConfig) -> bool {
    w_b < S::lit(cfg.th_b) && w_d < S::lit(cfg.th_d)
}

/// Plane inlier ratio of the pooled points exceeds `th_r`. Returns the ratio,
/// or `None` when the fit failed (treated as inconsistent).
pub fn consistency<S: Scalar>(points: &[Vec3<S>], cfg: &MergeConfig) -> (bool, Option<S>) {
    match fit_plane_ransac(points, &cfg.ransac) {
        Ok(fit) => (fit.inlier_ratio > S::lit(cfg.th_r), Some(fit.inlier_ratio)),
        Err(_) => (false, None),
    }
}

/// One evaluation of the merge predicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct MergeRecord<S> {
    pub survivor: u32,
    pub absorbed: u32,
    pub merged: bool,
    pub kappa_survivor: S,
    pub kappa_absorbed: S,
    pub w_d: S,
    pub w_b: S,
    /// `None` when the plane fit was not reached or failed.
    pub pl_i_r: Option<S>,
}

/// Every predicate evaluation of a merging run in order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct MergeTrace<S> {
    pub records: Vec<MergeRecord<S>>,
}

impl<S: Scalar> MergeTrace<S> {
    pub fn merges(&self) -> impl Iterator<Item = &MergeRecord<S>> {
        self.records.iter().filter(|r| r.merged)
    }

    pub fn merge_count(&self) -> usize {
        self.merges().count()
    }

    /// Applies the recorded merges to the initial region map and relabels it
    /// the same way [`run_region_merging`] does.
    pub fn replay(&self, initial: &LabelMap) -> LabelMap {
        let mut map: HashMap<u32, u32> = HashMap::new();
        for r in self.merges() {
            map.insert(r.absorbed, r.survivor);
        }
        let resolve = |mut l: u32| {
            while let Some(&t) = map.get(&l) {
                l = t;
            }
            l
        };
        relabel_by_size(&initial.map(|&l| resolve(l)))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            context: "serializing merge trace".into(),
            source,
        })
    }
}

/// Valid 3D points of a region.
fn region_points<S: Scalar>(graph: &RegionGraph<S>, id: u32, points: &Grid<Option<Vec3<S>>>) -> Vec<Vec3<S>> {
    graph.nodes[&id].pixels.iter().filter_map(|&p| points.as_slice()[p]).collect()
}

/// Evaluates the merge predicate of `i` with neighbor `j`, short-circuiting
/// candidacy of `j`, then eligibility, then plane consistency.
pub fn merge_predicate<S: Scalar>(
    graph: &RegionGraph<S>,
    i: u32,
    j: u32,
    points: &Grid<Option<Vec3<S>>>,
    cfg: &MergeConfig,
) -> Result<MergeRecord<S>> {
    let edge = graph
        .edge(i, j)
        .ok_or_else(|| Error::InvalidParameter(format!("regions {i} and {j} are not adjacent")))?;
    let (ni, nj) = (&graph.nodes[&i], &graph.nodes[&j]);
    let mut rec = MergeRecord {
        survivor: i,
        absorbed: j,
        merged: false,
        kappa_survivor: ni.kappa,
        kappa_absorbed: nj.kappa,
        w_d: edge.w_d,
        w_b: edge.w_b,
        pl_i_r: None,
    };
    if !candidacy(nj.kappa, cfg) || !eligibility(edge.w_b, edge.w_d, cfg) {
        return Ok(rec);
    }
    let mut pts = region_points(graph, i, points);
    pts.extend(region_points(graph, j, points));
    let (ok, ratio) = consistency(&pts, cfg);
    rec.merged = ok;
    rec.pl_i_r = ratio;
    Ok(rec)
}

/// Merges `j` into `i`: pooled prior and expectation parameters, rerouted
/// edges with boundary bands united and both weights recomputed.
pub fn merge_nodes<S: Scalar>(graph: &mut RegionGraph<S>, i: u32, j: u32, gradient: &GradientMap<S>) -> Result<()> {
    if i == j || graph.edge(i, j).is_none() {
        return Err(Error::InvalidParameter(format!("regions {i} and {j} are not adjacent")));
    }
    let nj = graph.nodes.remove(&j).expect("absorbed node exists");
    {
        let ni = graph.nodes.get_mut(&i).expect("surviving node exists");
        let pi = ni.pi + nj.pi;
        if pi > S::zero() {
            ni.eta = ni.eta.lincomb(ni.pi / pi, &nj.eta, nj.pi / pi);
        }
        ni.pi = pi;
        ni.pixel_count += nj.pixel_count;
        ni.valid_count += nj.valid_count;
        ni.pixels.extend_from_slice(&nj.pixels);
        ni.pixels.sort_unstable();
        ni.refresh();
    }
    for &p in &nj.pixels {
        graph.labels.as_mut_slice()[p] = i;
    }
    graph.edges.remove(&(i.min(j), i.max(j)));
    let moved: Vec<(u32, u32)> = graph.edges.keys().filter(|&&(a, b)| a == j || b == j).copied().collect();
    for key in moved {
        let e = graph.edges.remove(&key).expect("edge exists");
        let k = if key.0 == j { key.1 } else { key.0 };
        let nk = (i.min(k), i.max(k));
        match graph.edges.get_mut(&nk) {
            Some(existing) => {
                let mut band = std::mem::take(&mut existing.boundary);
                band.extend_from_slice(&e.boundary);
                band.sort_unstable();
                band.dedup();
                existing.boundary = band;
            }
            None => {
                let mut e = e;
                e.i = nk.0;
                e.j = nk.1;
                graph.edges.insert(nk, e);
            }
        }
    }
    for k in graph.neighbors(i) {
        let key = (i.min(k), i.max(k));
        let w_d = edge_weight_wd(&graph.nodes[&i], &graph.nodes[&k])?;
        let e = graph.edges.get_mut(&key).expect("edge exists");
        e.w_d = w_d;
        e.boundary_pixels = e.boundary.len();
        e.w_b = edge_weight_wb(&e.boundary, gradient);
    }
    Ok(())
}

/// Region merging to a fixpoint. Candidate nodes are scanned in ascending id;
/// each scans its neighbors by ascending `w_d` and restarts after a merge.
/// Full passes repeat until one makes no merge. Returns the densely relabeled
/// region map and the evaluation trace.
pub fn run_region_merging<S: Scalar>(
    graph: &mut RegionGraph<S>,
    points: &Grid<Option<Vec3<S>>>,
    gradient: &GradientMap<S>,
    cfg: &MergeConfig,
) -> Result<(LabelMap, MergeTrace<S>)> {
    cfg.validate()?;
    graph.labels.check_shape(points)?;
    graph.labels.check_shape(gradient)?;
    let mut trace = MergeTrace { records: Vec::new() };
    // Predicate outcomes stay valid while neither node changes.
    let mut version: HashMap<u32, u64> = graph.nodes.keys().map(|&k| (k, 0)).collect();
    let mut cache: HashMap<(u32, u32), (u64, u64)> = HashMap::new();
    loop {
        let mut merged_any = false;
        let ids: Vec<u32> = graph.nodes.keys().copied().collect();
        for i in ids {
            loop {
                let Some(ni) = graph.nodes.get(&i) else { break };
                if !candidacy(ni.kappa, cfg) {
                    break;
                }
                let mut nbrs: Vec<(S, u32)> = graph
                    .neighbors(i)
                    .into_iter()
                    .map(|k| (graph.edge(i, k).expect("neighbor edge").w_d, k))
                    .collect();
                nbrs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
                let mut merged = None;
                for (_, k) in nbrs {
                    let stamp = (version[&i], version[&k]);
                    if cache.get(&(i, k)) == Some(&stamp) {
                        continue;
                    }
                    let rec = merge_predicate(graph, i, k, points, cfg)?;
                    let ok = rec.merged;
                    trace.records.push(rec);
                    if ok {
                        merged = Some(k);
                        break;
                    }
                    cache.insert((i, k), stamp);
                }
                let Some(k) = merged else { break };
                merge_nodes(graph, i, k, gradient)?;
                *version.get_mut(&i).expect("versioned") += 1;
                version.remove(&k);
                merged_any = true;
            }
        }
        if !merged_any {
            break;
        }
    }
    Ok((relabel_by_size(&graph.labels), trace))
}
