#![allow(dead_code)]

use jcsdrm::exp_family::sampling::{sample_fisher, sample_watson};
use jcsdrm::exp_family::DirectionalFamily;
use jcsdrm::jcsd::FeatureVector;
use jcsdrm::grid::Grid;
use jcsdrm::linalg::normalize3;
use jcsdrm::rag::LabelMap;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Generator of one synthetic cluster.
#[derive(Clone, Debug)]
pub struct ClusterSpec {
    pub color: [f64; 3],
    pub color_sd: f64,
    pub pos: [f64; 3],
    pub pos_sd: f64,
    pub normal: [f64; 3],
    pub kappa: f64,
    pub count: usize,
}

pub fn gauss3<R: Rng>(rng: &mut R, mean: &[f64; 3], sd: f64) -> [f64; 3] {
    let mut out = *mean;
    for v in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v += sd * z;
    }
    out
}

/// Samples clusters in order; returns features and generating labels.
pub fn sample_clusters<R: Rng>(
    rng: &mut R,
    specs: &[ClusterSpec],
    family: DirectionalFamily,
) -> (Vec<FeatureVector<f64>>, Vec<usize>) {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (j, s) in specs.iter().enumerate() {
        let mu = normalize3(&s.normal).unwrap();
        for _ in 0..s.count {
            let n = match family {
                DirectionalFamily::Fisher => sample_fisher(&mu, s.kappa, rng),
                DirectionalFamily::Watson => sample_watson(&mu, s.kappa, rng),
            };
            let x = FeatureVector::new(gauss3(rng, &s.color, s.color_sd), gauss3(rng, &s.pos, s.pos_sd), n)
                .unwrap();
            data.push(x);
            labels.push(j);
        }
    }
    (data, labels)
}

pub fn random_unit<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let v = gauss3(rng, &[0.0; 3], 1.0);
        if let Some(u) = normalize3(&v) {
            return u;
        }
    }
}

/// A random mixture dataset with `clusters` generators and `m` points.
pub fn random_dataset<R: Rng>(rng: &mut R, m: usize, clusters: usize, family: DirectionalFamily) -> Vec<FeatureVector<f64>> {
    let specs: Vec<ClusterSpec> = (0..clusters)
        .map(|j| ClusterSpec {
            color: [rng.random_range(20.0..80.0), rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0)],
            color_sd: rng.random_range(1.0..8.0),
            pos: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(1.0..4.0)],
            pos_sd: rng.random_range(0.05..0.3),
            normal: random_unit(rng),
            kappa: rng.random_range(2.0..80.0),
            count: m / clusters + usize::from(j < m % clusters),
        })
        .collect();
    sample_clusters(rng, &specs, family).0
}

/// True when two labelings induce the same partition.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    use std::collections::HashMap;
    if a.len() != b.len() {
        return false;
    }
    let mut ab = HashMap::new();
    let mut ba = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if *ab.entry(x).or_insert(y) != y || *ba.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

/// Random pair of small label maps with unrelated label values.
pub fn random_map<R: Rng>(rng: &mut R) -> (LabelMap, LabelMap) {
    let (w, h) = (rng.random_range(1..=10), rng.random_range(1..=10));
    let ka = rng.random_range(1..6);
    let kb = rng.random_range(1..6);
    let a = Grid::from_fn(w, h, |_, _| rng.random_range(0..ka));
    let b = Grid::from_fn(w, h, |_, _| rng.random_range(0..kb) * 7 + 3);
    (a, b)
}

pub fn brute_voi(a: &LabelMap, b: &LabelMap) -> f64 {
    // H(A|B) = −Σ p(a,b) log p(a|b), summed pixel by pixel.
    let m = a.len() as f64;
    let (sa, sb) = (a.as_slice(), b.as_slice());
    let mut h = 0.0;
    for i in 0..a.len() {
        let nb = sb.iter().filter(|&&y| y == sb[i]).count() as f64;
        let na = sa.iter().filter(|&&x| x == sa[i]).count() as f64;
        let nab = (0..a.len()).filter(|&j| sa[j] == sa[i] && sb[j] == sb[i]).count() as f64;
        h -= ((nab / nb).ln() + (nab / na).ln()) / m;
    }
    h
}

pub fn brute_pri(a: &LabelMap, b: &LabelMap) -> f64 {
    let (sa, sb) = (a.as_slice(), b.as_slice());
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let (mut agree, mut total) = (0usize, 0usize);
    for i in 0..n {
        for j in i + 1..n {
            total += 1;
            if (sa[i] == sa[j]) == (sb[i] == sb[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / total as f64
}

pub fn brute_gtrc(test: &LabelMap, gt: &LabelMap) -> f64 {
    let pix = |m: &LabelMap, l: u32| -> std::collections::BTreeSet<usize> { (0..m.len()).filter(|&i| m.as_slice()[i] == l).collect() };
    let tl: std::collections::BTreeSet<u32> = test.as_slice().iter().copied().collect();
    let gl: std::collections::BTreeSet<u32> = gt.as_slice().iter().copied().collect();
    let mut s = 0.0;
    for &g in &gl {
        let r = pix(gt, g);
        let best = tl
            .iter()
            .map(|&t| {
                let q = pix(test, t);
                r.intersection(&q).count() as f64 / r.union(&q).count() as f64
            })
            .fold(0.0, f64::max);
        s += r.len() as f64 / gt.len() as f64 * best;
    }
    s
}
