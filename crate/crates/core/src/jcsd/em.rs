use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kmeans::kmeans_init;
use super::{CombinedParams, ComponentKernel, ComponentParams, FeatureVector};
use crate::error::{Error, Result};
use crate::exp_family::{DirectionalFamily, DirectionalParams, ExpectationParams, GaussianExpParams};
use crate::linalg::{Matrix, Vec3};
use crate::scalar::Scalar;

/// Rows per parallel work unit; fixed so reductions are reproducible.
pub(crate) const CHUNK: usize = 2048;
/// Floor on mixing weights, enforced by renormalization.
pub const PRIOR_FLOOR: f64 = 1e-8;
/// A component whose total responsibility falls below this fraction of the
/// data is re-seeded.
pub const STARVED_FRACTION: f64 = 1e-8;
/// Isotropic variance added to a block whose covariance has collapsed.
pub const VARIANCE_FLOOR: f64 = 1e-9;

/// Settings of the mixture clustering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    /// Number of mixture components.
    pub k: usize,
    /// Maximum number of E+M passes.
    pub max_iters: usize,
    /// Convergence threshold on the change of the mean per-observation
    /// negative log-likelihood between consecutive passes.
    pub nllh_tol: f64,
    pub family: DirectionalFamily,
    pub seed: u64,
    /// Fit parameters on every `subsample`-th observation only.
    pub subsample: usize,
    /// Iteration cap of the k-means initialization.
    pub kmeans_iters: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k: 20,
            max_iters: 200,
            nllh_tol: 1e-3,
            family: DirectionalFamily::Fisher,
            seed: 0,
            subsample: 1,
            kmeans_iters: 50,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be positive".into()));
        }
        if !(self.nllh_tol > 0.0) {
            return Err(Error::InvalidParameter("nllh_tol must be positive".into()));
        }
        if self.subsample == 0 {
            return Err(Error::InvalidParameter("subsample stride must be positive".into()));
        }
        Ok(())
    }
}

/// Fitted mixture with the posteriors of the observations it was fitted on.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct MixtureState<S> {
    pub components: Vec<ComponentParams<S>>,
    /// Row-major `M × k` responsibilities.
    pub posteriors: Vec<S>,
    /// Negative log-likelihood after initialization and after each pass.
    pub nllh_trace: Vec<S>,
    /// Number of completed E+M passes.
    pub iterations: usize,
    pub converged: bool,
}

impl<S: Scalar> MixtureState<S> {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn posterior_row(&self, i: usize) -> &[S] {
        let k = self.k();
        &self.posteriors[i * k..(i + 1) * k]
    }

    pub fn priors(&self) -> Vec<S> {
        self.components.iter().map(|c| c.pi).collect()
    }
}

fn kernels<S: Scalar>(components: &[ComponentParams<S>], weighted: bool) -> Result<Vec<ComponentKernel<S>>> {
    components
        .iter()
        .map(|c| ComponentKernel::new(&c.eta, if weighted { c.pi.ln() } else { S::zero() }))
        .collect()
}

/// Posterior responsibilities (row-major `M × k`) and the negative
/// log-likelihood `−Σᵢ ln Σⱼ πⱼ f(xᵢ | ηⱼ)`, via log-sum-exp.
///
/// Rows whose every component log-density is non-finite get a uniform row
/// and do not contribute to the likelihood.
pub fn e_step<S: Scalar>(
    data: &[FeatureVector<S>],
    components: &[ComponentParams<S>],
) -> Result<(Vec<S>, S)> {
    let k = components.len();
    let ks = kernels(components, true)?;
    let mut post = vec![S::zero(); data.len() * k];
    let parts: Vec<(S, usize)> = post
        .par_chunks_mut(CHUNK * k)
        .zip(data.par_chunks(CHUNK))
        .map(|(rows, xs)| {
            let mut nllh = S::zero();
            let mut bad = 0;
            let mut vals = vec![S::zero(); k];
            for (row, x) in rows.chunks_mut(k).zip(xs) {
                let mut m = S::neg_infinity();
                for (v, kern) in vals.iter_mut().zip(&ks) {
                    *v = kern.eval(x);
                    if *v > m {
                        m = *v;
                    }
                }
                if !m.is_finite() {
                    row.fill(S::one() / S::from_usize_lossy(k));
                    bad += 1;
                    continue;
                }
                let mut s = S::zero();
                for (r, &v) in row.iter_mut().zip(&vals) {
                    *r = (v - m).exp();
                    s += *r;
                }
                for r in row.iter_mut() {
                    *r /= s;
                }
                nllh -= m + s.ln();
            }
            (nllh, bad)
        })
        .collect();
    let mut nllh = S::zero();
    let mut bad = 0;
    for (v, b) in parts {
        nllh += v;
        bad += b;
    }
    if bad > 0 {
        warn!("{bad} observations underflowed in every component; given uniform posteriors");
    }
    Ok((post, nllh))
}

/// Responsibility-weighted sums of shifted statistics for one component.
#[derive(Clone)]
struct Accumulator<S> {
    w: S,
    c1: Vec3<S>,
    c2: [[S; 3]; 3],
    p1: Vec3<S>,
    p2: [[S; 3]; 3],
    n: DirectionalParams<S>,
}

impl<S: Scalar> Accumulator<S> {
    fn new(family: DirectionalFamily) -> Self {
        Self {
            w: S::zero(),
            c1: [S::zero(); 3],
            c2: [[S::zero(); 3]; 3],
            p1: [S::zero(); 3],
            p2: [[S::zero(); 3]; 3],
            n: DirectionalParams::zero(family),
        }
    }

    fn add(&mut self, x: &FeatureVector<S>, shift: &(Vec3<S>, Vec3<S>), w: S) {
        self.w += w;
        let c = [x.color[0] - shift.0[0], x.color[1] - shift.0[1], x.color[2] - shift.0[2]];
        let p = [x.pos[0] - shift.1[0], x.pos[1] - shift.1[1], x.pos[2] - shift.1[2]];
        for a in 0..3 {
            self.c1[a] += w * c[a];
            self.p1[a] += w * p[a];
            for b in a..3 {
                self.c2[a][b] += w * c[a] * c[b];
                self.p2[a][b] += w * p[a] * p[b];
            }
        }
        self.n.accumulate_statistic(&x.normal, w);
    }

    fn merge(&mut self, other: &Self) {
        self.w += other.w;
        for a in 0..3 {
            self.c1[a] += other.c1[a];
            self.p1[a] += other.p1[a];
            for b in a..3 {
                self.c2[a][b] += other.c2[a][b];
                self.p2[a][b] += other.p2[a][b];
            }
        }
        self.n = self.n.lincomb(S::one(), &other.n, S::one());
    }
}

fn gaussian_block<S: Scalar>(s1: &Vec3<S>, s2: &[[S; 3]; 3], w: S, shift: &Vec3<S>) -> Result<GaussianExpParams<S>> {
    let m = s1.map(|v| v / w);
    let mut cov = Matrix::zeros(3);
    for a in 0..3 {
        for b in a..3 {
            let v = s2[a][b] / w - m[a] * m[b];
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }
    if cov.trace() / S::lit(3.0) < S::lit(VARIANCE_FLOOR) {
        cov.add_diagonal(S::lit(VARIANCE_FLOOR));
    }
    let mean = [m[0] + shift[0], m[1] + shift[1], m[2] + shift[2]];
    GaussianExpParams::from_source(&mean, &cov)
}

fn data_shift<S: Scalar>(data: &[FeatureVector<S>]) -> (Vec3<S>, Vec3<S>) {
    let n = S::from_usize_lossy(data.len().max(1));
    let mut c = [S::zero(); 3];
    let mut p = [S::zero(); 3];
    for x in data {
        for a in 0..3 {
            c[a] += x.color[a];
            p[a] += x.pos[a];
        }
    }
    (c.map(|v| v / n), p.map(|v| v / n))
}

/// Maximization step: priors are mean responsibilities, expectation
/// parameters are responsibility-weighted means of `t(x)`.
///
/// Starved components are re-seeded at the observation worst explained by
/// its own component; the new component copies that component's spread and
/// takes half of its prior.
pub fn m_step<S: Scalar>(
    data: &[FeatureVector<S>],
    posteriors: &[S],
    k: usize,
    family: DirectionalFamily,
) -> Result<Vec<ComponentParams<S>>> {
    if posteriors.len() != data.len() * k {
        return Err(Error::DimensionMismatch {
            expected: data.len() * k,
            got: posteriors.len(),
        });
    }
    if data.is_empty() {
        return Err(Error::TooFewObservations { needed: 1, got: 0 });
    }
    let shift = data_shift(data);
    let parts: Vec<Vec<Accumulator<S>>> = data
        .par_chunks(CHUNK)
        .zip(posteriors.par_chunks(CHUNK * k))
        .map(|(xs, rows)| {
            let mut acc = vec![Accumulator::new(family); k];
            for (x, row) in xs.iter().zip(rows.chunks(k)) {
                for (a, &w) in acc.iter_mut().zip(row) {
                    if w > S::zero() {
                        a.add(x, &shift, w);
                    }
                }
            }
            acc
        })
        .collect();
    let mut acc = vec![Accumulator::new(family); k];
    for part in &parts {
        for (a, p) in acc.iter_mut().zip(part) {
            a.merge(p);
        }
    }

    let m = S::from_usize_lossy(data.len());
    let starved_w = S::lit(STARVED_FRACTION) * m;
    let mut comps: Vec<Option<ComponentParams<S>>> = Vec::with_capacity(k);
    for a in &acc {
        if a.w < starved_w || a.w <= S::zero() {
            comps.push(None);
            continue;
        }
        let eta = CombinedParams {
            color: gaussian_block(&a.c1, &a.c2, a.w, &shift.0)?,
            pos: gaussian_block(&a.p1, &a.p2, a.w, &shift.1)?,
            normal: a.n.scaled(S::one() / a.w),
        };
        comps.push(Some(ComponentParams { pi: a.w / m, eta }));
    }
    let assigned = assigned_labels(posteriors, k);
    let comps = reseed_starved(data, &assigned, comps)?;
    Ok(floor_priors(comps))
}

fn assigned_labels<S: Scalar>(posteriors: &[S], k: usize) -> Vec<usize> {
    posteriors
        .par_chunks(k)
        .map(|row| argmax(row.iter().copied()))
        .collect()
}

/// Index of the largest value, lowest index on ties.
pub(crate) fn argmax<S: Scalar>(vals: impl Iterator<Item = S>) -> usize {
    let mut best = 0;
    let mut bv = S::neg_infinity();
    for (j, v) in vals.enumerate() {
        if v > bv {
            bv = v;
            best = j;
        }
    }
    best
}

/// Fills `None` entries by splitting the component that explains its
/// worst-fit observation least well.
pub(crate) fn reseed_starved<S: Scalar>(
    data: &[FeatureVector<S>],
    assigned: &[usize],
    mut comps: Vec<Option<ComponentParams<S>>>,
) -> Result<Vec<ComponentParams<S>>> {
    let starved: Vec<usize> = (0..comps.len()).filter(|&j| comps[j].is_none()).collect();
    if starved.is_empty() {
        return Ok(comps.into_iter().map(|c| c.expect("present")).collect());
    }
    if starved.len() == comps.len() {
        return Err(Error::Degenerate("every mixture component is empty".into()));
    }
    debug!("re-seeding {} starved components", starved.len());
    let ks: Vec<Option<ComponentKernel<S>>> = comps
        .iter()
        .map(|c| c.as_ref().map(|c| ComponentKernel::new(&c.eta, S::zero())).transpose())
        .collect::<Result<_>>()?;
    // Fit of each observation under its own component; worst first.
    let mut fit: Vec<(S, usize)> = data
        .par_iter()
        .zip(assigned)
        .enumerate()
        .map(|(i, (x, &j))| {
            let f = match &ks[j] {
                Some(kern) => kern.eval(x),
                None => S::neg_infinity(),
            };
            (f, i)
        })
        .collect();
    fit.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    let mut cursor = 0;
    for j in starved {
        // Skip observations whose own component is itself starved.
        let (idx, donor) = loop {
            let (_, i) = fit[cursor % fit.len()];
            cursor += 1;
            let d = assigned[i];
            if comps[d].is_some() {
                break (i, d);
            }
            if cursor > 2 * fit.len() {
                let d = (0..comps.len()).find(|&d| comps[d].is_some()).expect("one component");
                break (i, d);
            }
        };
        let x = &data[idx];
        let donor_params = comps[donor].as_mut().expect("donor present");
        donor_params.pi /= S::lit(2.0);
        let kappa = donor_params.eta.normal.kappa();
        let color_cov = donor_params.eta.color.covariance()?;
        let pos_cov = donor_params.eta.pos.covariance()?;
        let eta = CombinedParams::from_source(
            &x.color,
            &color_cov,
            &x.pos,
            &pos_cov,
            &x.normal,
            kappa,
            donor_params.eta.family(),
        )?;
        let pi = donor_params.pi;
        comps[j] = Some(ComponentParams { pi, eta });
    }
    Ok(comps.into_iter().map(|c| c.expect("re-seeded")).collect())
}

/// Raises every prior to at least the floor and renormalizes.
pub(crate) fn floor_priors<S: Scalar>(mut comps: Vec<ComponentParams<S>>) -> Vec<ComponentParams<S>> {
    let floor = S::lit(PRIOR_FLOOR);
    for c in comps.iter_mut() {
        if !(c.pi >= floor) {
            c.pi = floor;
        }
    }
    let total: S = comps.iter().map(|c| c.pi).sum();
    for c in comps.iter_mut() {
        c.pi /= total;
    }
    comps
}

/// Fits the mixture by k-means initialization followed by EM.
///
/// Each pass runs an E-step, checks convergence against the previous pass,
/// then runs an M-step. A final E-step refreshes the posteriors so they match
/// the returned components.
pub fn run_em<S: Scalar>(data: &[FeatureVector<S>], cfg: &ClusterConfig) -> Result<MixtureState<S>> {
    cfg.validate()?;
    let owned;
    let em_data: &[FeatureVector<S>] = if cfg.subsample > 1 {
        owned = data.iter().step_by(cfg.subsample).copied().collect::<Vec<_>>();
        &owned
    } else {
        data
    };
    if em_data.len() < cfg.k {
        return Err(Error::TooFewObservations {
            needed: cfg.k,
            got: em_data.len(),
        });
    }
    let m = S::from_usize_lossy(em_data.len());
    let tol = S::lit(cfg.nllh_tol);
    let mut components = kmeans_init(em_data, cfg)?.components;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut fresh = None;
    for _ in 0..cfg.max_iters {
        let (post, nllh) = e_step(em_data, &components)?;
        if let Some(&prev) = trace.last() {
            let prev: S = prev;
            if ((prev - nllh) / m).abs() < tol {
                trace.push(nllh);
                converged = true;
                fresh = Some(post);
                break;
            }
        }
        trace.push(nllh);
        components = m_step(em_data, &post, cfg.k, cfg.family)?;
        iterations += 1;
    }
    let posteriors = match fresh {
        Some(p) => p,
        None => {
            let (post, nllh) = e_step(em_data, &components)?;
            if let Some(&prev) = trace.last() {
                let prev: S = prev;
                converged = ((prev - nllh) / m).abs() < tol;
            }
            trace.push(nllh);
            post
        }
    };
    debug!(
        "EM finished after {iterations} passes, nLLH {:?}",
        trace.last().map(|v| v.as_f64())
    );
    Ok(MixtureState {
        components,
        posteriors,
        nllh_trace: trace,
        iterations,
        converged,
    })
}

/// Hard labels: the component minimizing the combined Bregman divergence
/// between `t(x)` and its expectation parameters, lowest index on ties.
pub fn hard_assign<S: Scalar>(data: &[FeatureVector<S>], components: &[ComponentParams<S>]) -> Result<Vec<usize>> {
    let ks = kernels(components, false)?;
    Ok(data
        .par_iter()
        .map(|x| argmax(ks.iter().map(|kern| kern.eval(x))))
        .collect())
}
