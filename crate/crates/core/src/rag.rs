//! Region adjacency graph over a hard label map.
//!
//! Nodes are 4-connected regions carrying the directional statistics of their
//! surface normals; edges join 4-adjacent regions and carry a divergence
//! weight `w_d` and a boundary-strength weight `w_b`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exp_family::{bregman_divergence, DirectionalFamily, DirectionalParams};
use crate::grid::Grid;
use crate::linalg::Vec3;
use crate::rgbd_features::GradientMap;
use crate::scalar::Scalar;

/// Integer region or cluster label of every pixel.
pub type LabelMap = Grid<u32>;

/// Regions smaller than this are absorbed into a neighbor by default.
pub const MIN_REGION_PX: usize = 50;

/// 3×3 label mode filter; ties go to the smallest label. Border pixels use
/// the part of the window inside the image.
pub fn median_filter_labels(labels: &LabelMap) -> LabelMap {
    let (w, h) = (labels.width(), labels.height());
    let rows: Vec<Vec<u32>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut win = Vec::with_capacity(9);
            (0..w)
                .map(|x| {
                    win.clear();
                    for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                        for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                            win.push(*labels.get(xx, yy));
                        }
                    }
                    mode(&mut win)
                })
                .collect()
        })
        .collect();
    Grid::from_vec(w, h, rows.into_iter().flatten().collect()).expect("shape preserved")
}

fn mode(win: &mut [u32]) -> u32 {
    win.sort_unstable();
    let (mut best, mut best_n) = (win[0], 0);
    let mut i = 0;
    while i < win.len() {
        let mut j = i;
        while j < win.len() && win[j] == win[i] {
            j += 1;
        }
        if j - i > best_n {
            best = win[i];
            best_n = j - i;
        }
        i = j;
    }
    best
}

/// Labels 4-connected components `0..n` in raster order of first pixel.
pub fn connected_components(labels: &LabelMap) -> (LabelMap, usize) {
    let n = labels.len();
    let mut out = vec![u32::MAX; n];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for s in 0..n {
        if out[s] != u32::MAX {
            continue;
        }
        let l = labels.as_slice()[s];
        out[s] = next;
        queue.push_back(s);
        while let Some(i) = queue.pop_front() {
            for j in labels.neighbors4(i) {
                if out[j] == u32::MAX && labels.as_slice()[j] == l {
                    out[j] = next;
                    queue.push_back(j);
                }
            }
        }
        next += 1;
    }
    let grid = Grid::from_vec(labels.width(), labels.height(), out).expect("shape preserved");
    (grid, next as usize)
}

/// Number of 4-adjacent pixel pairs between every pair of distinct labels.
fn shared_boundaries(labels: &LabelMap) -> BTreeMap<(u32, u32), usize> {
    let mut out = BTreeMap::new();
    let (w, h) = (labels.width(), labels.height());
    for y in 0..h {
        for x in 0..w {
            let a = *labels.get(x, y);
            let mut visit = |b: u32| {
                if a != b {
                    *out.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                }
            };
            if x + 1 < w {
                visit(*labels.get(x + 1, y));
            }
            if y + 1 < h {
                visit(*labels.get(x, y + 1));
            }
        }
    }
    out
}

/// Absorbs regions below `min_px` pixels into the neighbor sharing the
/// longest boundary, smallest regions first, then relabels densely by
/// decreasing size (ties by first pixel in raster order).
pub fn absorb_small_regions(regions: &LabelMap, min_px: usize) -> LabelMap {
    let mut labels = regions.clone();
    loop {
        let mut sizes: BTreeMap<u32, usize> = BTreeMap::new();
        for &l in labels.as_slice() {
            *sizes.entry(l).or_insert(0) += 1;
        }
        if sizes.len() <= 1 {
            break;
        }
        let adj = shared_boundaries(&labels);
        let mut small: Vec<(usize, u32)> = sizes.iter().filter(|(_, &s)| s < min_px).map(|(&l, &s)| (s, l)).collect();
        small.sort();
        let mut remap: BTreeMap<u32, u32> = BTreeMap::new();
        for &(_, l) in &small {
            if remap.values().any(|&t| t == l) {
                continue;
            }
            let target = adj
                .iter()
                .filter_map(|(&(a, b), &n)| {
                    if a == l {
                        Some((n, b))
                    } else if b == l {
                        Some((n, a))
                    } else {
                        None
                    }
                })
                .filter(|(_, o)| !remap.contains_key(o))
                .max_by(|x, y| x.0.cmp(&y.0).then(y.1.cmp(&x.1)))
                .map(|(_, o)| o);
            if let Some(t) = target {
                remap.insert(l, t);
            }
        }
        if remap.is_empty() {
            break;
        }
        for l in labels.as_mut_slice() {
            if let Some(&t) = remap.get(l) {
                *l = t;
            }
        }
    }
    relabel_by_size(&labels)
}

/// Dense relabeling `0..n` by decreasing region size, ties by first pixel.
pub fn relabel_by_size(labels: &LabelMap) -> LabelMap {
    let mut info: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (i, &l) in labels.as_slice().iter().enumerate() {
        let e = info.entry(l).or_insert((0, i));
        e.0 += 1;
    }
    let mut order: Vec<(u32, usize, usize)> = info.iter().map(|(&l, &(n, f))| (l, n, f)).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let map: BTreeMap<u32, u32> = order.iter().enumerate().map(|(i, e)| (e.0, i as u32)).collect();
    labels.map(|l| map[l])
}

/// A region of the adjacency graph.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct RegionNode<S> {
    pub id: u32,
    /// All pixels of the region.
    pub pixel_count: usize,
    /// Pixels with a valid normal; these define the statistics.
    pub valid_count: usize,
    /// Share of the image's valid pixels.
    pub pi: S,
    pub eta: DirectionalParams<S>,
    /// Mean direction (axis for Watson).
    pub mu: Vec3<S>,
    pub kappa: S,
    #[serde(skip)]
    pub pixels: Vec<usize>,
}

impl<S: Scalar> RegionNode<S> {
    /// Rebuilds `mu` and `kappa` from `eta`.
    pub fn refresh(&mut self) {
        self.kappa = self.eta.kappa();
        self.mu = self.eta.direction().unwrap_or([S::zero(), S::zero(), S::one()]);
    }
}

/// An undirected edge between 4-adjacent regions `i < j`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct RegionEdge<S> {
    pub i: u32,
    pub j: u32,
    pub w_d: S,
    pub w_b: S,
    pub boundary_pixels: usize,
    /// Pixels of either region 4-adjacent to the other, sorted.
    #[serde(skip)]
    pub boundary: Vec<usize>,
}

/// Regions, their adjacency and the label map they index into.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct RegionGraph<S> {
    pub family: DirectionalFamily,
    pub nodes: BTreeMap<u32, RegionNode<S>>,
    #[serde(with = "edge_list")]
    pub edges: BTreeMap<(u32, u32), RegionEdge<S>>,
    #[serde(skip)]
    pub labels: LabelMap,
    /// Number of pixels with a valid normal in the whole image.
    pub total_valid: usize,
}

mod edge_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Scalar, Z: Serializer>(
        edges: &BTreeMap<(u32, u32), RegionEdge<S>>,
        ser: Z,
    ) -> std::result::Result<Z::Ok, Z::Error> {
        ser.collect_seq(edges.values())
    }

    pub fn deserialize<'de, S: Scalar, D: Deserializer<'de>>(
        de: D,
    ) -> std::result::Result<BTreeMap<(u32, u32), RegionEdge<S>>, D::Error> {
        let v: Vec<RegionEdge<S>> = Vec::deserialize(de)?;
        Ok(v.into_iter().map(|e| ((e.i, e.j), e)).collect())
    }
}

impl<S: Scalar> RegionGraph<S> {
    pub fn neighbors(&self, id: u32) -> Vec<u32> {
        self.edges
            .keys()
            .filter_map(|&(a, b)| {
                if a == id {
                    Some(b)
                } else if b == id {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn edge(&self, a: u32, b: u32) -> Option<&RegionEdge<S>> {
        self.edges.get(&(a.min(b), a.max(b)))
    }

    pub fn total_pi(&self) -> S {
        self.nodes.values().map(|n| n.pi).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            context: "serializing region graph".into(),
            source,
        })
    }
}

/// Settings of graph construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RagConfig {
    pub family: DirectionalFamily,
    pub min_region_px: usize,
    /// Apply the 3×3 label mode filter before extracting regions.
    pub filter: bool,
}

impl Default for RagConfig {
    fn default() -> Self {
        Self {
            family: DirectionalFamily::Fisher,
            min_region_px: MIN_REGION_PX,
            filter: true,
        }
    }
}

/// Directional statistics of one pixel set.
pub fn region_statistics<S: Scalar>(
    pixels: &[usize],
    normals: &Grid<Option<Vec3<S>>>,
    family: DirectionalFamily,
) -> (DirectionalParams<S>, usize) {
    let mut eta = DirectionalParams::zero(family);
    let mut n = 0usize;
    for &p in pixels {
        if let Some(v) = &normals.as_slice()[p] {
            eta.accumulate_statistic(v, S::one());
            n += 1;
        }
    }
    if n > 0 {
        eta = eta.scaled(S::one() / S::from_usize_lossy(n));
    }
    (eta, n)
}

/// Splits a filtered cluster map into 4-connected regions, absorbs regions
/// below `min_region_px`, and computes the node statistics from the member
/// normals. Region ids decrease with size.
pub fn extract_regions<S: Scalar>(
    labels: &LabelMap,
    normals: &Grid<Option<Vec3<S>>>,
    family: DirectionalFamily,
    min_region_px: usize,
) -> Result<(LabelMap, Vec<RegionNode<S>>)> {
    labels.check_shape(normals)?;
    let (cc, _) = connected_components(labels);
    let regions = absorb_small_regions(&cc, min_region_px);
    let n = regions.as_slice().iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, &l) in regions.as_slice().iter().enumerate() {
        members[l as usize].push(i);
    }
    let total_valid = normals.as_slice().iter().filter(|v| v.is_some()).count().max(1);
    let nodes = members
        .into_par_iter()
        .enumerate()
        .map(|(id, pixels)| {
            let (eta, valid_count) = region_statistics(&pixels, normals, family);
            let mut node = RegionNode {
                id: id as u32,
                pixel_count: pixels.len(),
                valid_count,
                pi: S::from_usize_lossy(valid_count) / S::from_usize_lossy(total_valid),
                eta,
                mu: [S::zero(); 3],
                kappa: S::zero(),
                pixels,
            };
            node.refresh();
            node
        })
        .collect();
    Ok((regions, nodes))
}

/// `min(D(η_i, η_j), D(η_j, η_i))` for the nodes' directional parameters,
/// with saturated concentrations held at the clamp.
pub fn edge_weight_wd<S: Scalar>(a: &RegionNode<S>, b: &RegionNode<S>) -> Result<S> {
    let (ea, eb) = (a.eta.saturated()?, b.eta.saturated()?);
    let d1 = bregman_divergence(&ea, &eb)?;
    let d2 = bregman_divergence(&eb, &ea)?;
    Ok(d1.min(d2).max(S::zero()))
}

/// Mean gradient over a boundary band.
pub fn edge_weight_wb<S: Scalar>(boundary: &[usize], gradient: &GradientMap<S>) -> S {
    assert!(!boundary.is_empty(), "edge without boundary pixels");
    let g = gradient.as_slice();
    let s: S = boundary.iter().map(|&p| g[p]).sum();
    s / S::from_usize_lossy(boundary.len())
}

/// Boundary bands of every adjacent region pair of a label map.
pub fn boundary_bands(labels: &LabelMap) -> BTreeMap<(u32, u32), Vec<usize>> {
    let mut sets: BTreeMap<(u32, u32), BTreeSet<usize>> = BTreeMap::new();
    for i in 0..labels.len() {
        let a = labels.as_slice()[i];
        for j in labels.neighbors4(i) {
            let b = labels.as_slice()[j];
            if a != b {
                sets.entry((a.min(b), a.max(b))).or_default().insert(i);
            }
        }
    }
    sets.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect()
}

/// Builds the graph of a dense region label map and its nodes.
pub fn graph_from_regions<S: Scalar>(
    regions: LabelMap,
    nodes: Vec<RegionNode<S>>,
    gradient: &GradientMap<S>,
    family: DirectionalFamily,
) -> Result<RegionGraph<S>> {
    regions.check_shape(gradient)?;
    let total_valid = nodes.iter().map(|n| n.valid_count).sum();
    let nodes: BTreeMap<u32, RegionNode<S>> = nodes.into_iter().map(|n| (n.id, n)).collect();
    let bands: Vec<((u32, u32), Vec<usize>)> = boundary_bands(&regions).into_iter().collect();
    let edges = bands
        .into_par_iter()
        .map(|((i, j), boundary)| {
            let w_d = edge_weight_wd(&nodes[&i], &nodes[&j])?;
            let w_b = edge_weight_wb(&boundary, gradient);
            Ok((
                (i, j),
                RegionEdge {
                    i,
                    j,
                    w_d,
                    w_b,
                    boundary_pixels: boundary.len(),
                    boundary,
                },
            ))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(RegionGraph {
        family,
        nodes,
        edges,
        labels: regions,
        total_valid,
    })
}

/// Filters the cluster map, extracts regions and builds their adjacency graph.
pub fn build_rag<S: Scalar>(
    labels: &LabelMap,
    normals: &Grid<Option<Vec3<S>>>,
    gradient: &GradientMap<S>,
    cfg: &RagConfig,
) -> Result<RegionGraph<S>> {
    let filtered = if cfg.filter { median_filter_labels(labels) } else { labels.clone() };
    let (regions, nodes) = extract_regions(&filtered, normals, cfg.family, cfg.min_region_px)?;
    graph_from_regions(regions, nodes, gradient, cfg.family)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_prefers_smallest_on_tie() {
        assert_eq!(mode(&mut [3, 1, 3, 1]), 1);
        assert_eq!(mode(&mut [5, 2, 5]), 5);
    }

    #[test]
    fn components_split_disjoint_blobs() {
        let l = Grid::from_vec(5, 1, vec![1, 1, 0, 1, 1]).unwrap();
        let (cc, n) = connected_components(&l);
        assert_eq!(n, 3);
        assert_eq!(cc.as_slice(), &[0, 0, 1, 2, 2]);
    }
}
