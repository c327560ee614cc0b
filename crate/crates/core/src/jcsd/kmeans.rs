use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::em::{ClusterConfig, CHUNK};
use super::{ComponentParams, FeatureVector};
use crate::error::{Error, Result};
use crate::exp_family::DirectionalFamily;
use crate::linalg::{dot3, normalize3, sym_eigen3, Vec3};
use crate::scalar::Scalar;

/// Hard labels of the k-means pass and the mixture parameters estimated from
/// them.
#[derive(Clone, Debug)]
pub struct KmeansResult<S> {
    pub labels: Vec<usize>,
    pub components: Vec<ComponentParams<S>>,
}

#[derive(Clone, Copy)]
struct Point<S> {
    /// Min-max normalized color followed by position.
    cp: [S; 6],
    normal: Vec3<S>,
}

fn normalize<S: Scalar>(data: &[FeatureVector<S>]) -> Vec<Point<S>> {
    let mut lo = [S::infinity(); 6];
    let mut hi = [S::neg_infinity(); 6];
    for x in data {
        for a in 0..3 {
            lo[a] = lo[a].min(x.color[a]);
            hi[a] = hi[a].max(x.color[a]);
            lo[a + 3] = lo[a + 3].min(x.pos[a]);
            hi[a + 3] = hi[a + 3].max(x.pos[a]);
        }
    }
    let scale: Vec<S> = (0..6)
        .map(|a| {
            let r = hi[a] - lo[a];
            if r > S::zero() { S::one() / r } else { S::zero() }
        })
        .collect();
    data.iter()
        .map(|x| {
            let mut cp = [S::zero(); 6];
            for a in 0..3 {
                cp[a] = (x.color[a] - lo[a]) * scale[a];
                cp[a + 3] = (x.pos[a] - lo[a + 3]) * scale[a + 3];
            }
            Point { cp, normal: x.normal }
        })
        .collect()
}

/// Euclidean distance on normalized color plus Euclidean distance on
/// normalized position plus cosine distance on normals.
fn distance<S: Scalar>(p: &Point<S>, c: &Point<S>, family: DirectionalFamily) -> S {
    let mut dc = S::zero();
    let mut dp = S::zero();
    for a in 0..3 {
        let u = p.cp[a] - c.cp[a];
        let v = p.cp[a + 3] - c.cp[a + 3];
        dc += u * u;
        dp += v * v;
    }
    let cos = dot3(&p.normal, &c.normal);
    let dn = match family {
        DirectionalFamily::Fisher => S::one() - cos,
        DirectionalFamily::Watson => S::one() - cos.abs(),
    };
    dc.sqrt() + dp.sqrt() + dn
}

fn nearest<S: Scalar>(p: &Point<S>, centers: &[Point<S>], family: DirectionalFamily) -> (usize, S) {
    let mut best = (0, distance(p, &centers[0], family));
    for (j, c) in centers.iter().enumerate().skip(1) {
        let d = distance(p, c, family);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means++ seeding with squared mixed distances as sampling weights.
fn seed_centers<S: Scalar>(points: &[Point<S>], k: usize, family: DirectionalFamily, rng: &mut ChaCha8Rng) -> Vec<Point<S>> {
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points
        .par_iter()
        .map(|p| distance(p, &centers[0], family).as_f64().powi(2))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[idx];
        centers.push(c);
        d2.par_iter_mut().zip(points).for_each(|(d, p)| {
            let v = distance(p, &c, family).as_f64().powi(2);
            if v < *d {
                *d = v;
            }
        });
    }
    centers
}

fn update_center<S: Scalar>(members: &[&Point<S>], old: &Point<S>, family: DirectionalFamily) -> Point<S> {
    let n = S::from_usize_lossy(members.len());
    let mut cp = [S::zero(); 6];
    for p in members {
        for a in 0..6 {
            cp[a] += p.cp[a];
        }
    }
    let cp = cp.map(|v| v / n);
    let normal = match family {
        DirectionalFamily::Fisher => {
            let mut s = [S::zero(); 3];
            for p in members {
                for a in 0..3 {
                    s[a] += p.normal[a];
                }
            }
            normalize3(&s).unwrap_or(old.normal)
        }
        DirectionalFamily::Watson => {
            let mut t = [[S::zero(); 3]; 3];
            for p in members {
                for a in 0..3 {
                    for b in 0..3 {
                        t[a][b] += p.normal[a] * p.normal[b];
                    }
                }
            }
            sym_eigen3(&t).1[2]
        }
    };
    Point { cp, normal }
}

/// Combined k-means initialization: hard labels, then per-cluster priors and
/// expectation parameters from the un-normalized features. Empty clusters
/// are re-seeded at the points farthest from their centers.
pub fn kmeans_init<S: Scalar>(data: &[FeatureVector<S>], cfg: &ClusterConfig) -> Result<KmeansResult<S>> {
    cfg.validate()?;
    let k = cfg.k;
    if data.len() < k {
        return Err(Error::TooFewObservations {
            needed: k,
            got: data.len(),
        });
    }
    let family = cfg.family;
    let points = normalize(data);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centers = seed_centers(&points, k, family, &mut rng);
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..cfg.kmeans_iters.max(1) {
        let assign: Vec<(usize, S)> = points
            .par_chunks(CHUNK)
            .flat_map_iter(|ps| ps.iter().map(|p| nearest(p, &centers, family)).collect::<Vec<_>>())
            .collect();
        let changed = assign.iter().zip(&labels).any(|((j, _), &l)| *j != l);
        for (l, (j, _)) in labels.iter_mut().zip(&assign) {
            *l = *j;
        }
        if !changed {
            break;
        }
        let mut members: Vec<Vec<&Point<S>>> = vec![Vec::new(); k];
        for (p, &l) in points.iter().zip(&labels) {
            members[l].push(p);
        }
        let empty = members.iter().filter(|m| m.is_empty()).count();
        let far = if empty > 0 { farthest(&assign, empty) } else { Vec::new() };
        let mut next_far = 0;
        for j in 0..k {
            if members[j].is_empty() {
                centers[j] = points[far[next_far % far.len()]];
                next_far += 1;
            } else {
                centers[j] = update_center(&members[j], &centers[j], family);
            }
        }
    }
    let components = components_from_labels(data, &labels, k, family)?;
    Ok(KmeansResult { labels, components })
}

/// Indices of the `n` points farthest from their centers, farthest first,
/// ties by index.
fn farthest<S: Scalar>(assign: &[(usize, S)], n: usize) -> Vec<usize> {
    let order = |a: &(S, usize), b: &(S, usize)| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1));
    let mut far: Vec<(S, usize)> = assign.iter().enumerate().map(|(i, (_, d))| (*d, i)).collect();
    let n = n.min(far.len());
    if n < far.len() {
        far.select_nth_unstable_by(n, order);
        far.truncate(n);
    }
    far.sort_by(order);
    far.into_iter().map(|f| f.1).collect()
}

/// Priors and expectation parameters of hard clusters.
pub(crate) fn components_from_labels<S: Scalar>(
    data: &[FeatureVector<S>],
    labels: &[usize],
    k: usize,
    family: DirectionalFamily,
) -> Result<Vec<ComponentParams<S>>> {
    let mut post = vec![S::zero(); data.len() * k];
    for (i, &l) in labels.iter().enumerate() {
        post[i * k + l] = S::one();
    }
    super::m_step(data, &post, k, family)
}
