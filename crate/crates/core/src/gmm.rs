//! Diagonal-covariance Gaussian mixtures: the per-state emission density of
//! the HMM and, on its own, the GMM comparison classifier.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::hmm::TrainReport;
use crate::kmeans::kmeans;
use crate::math::{ln_or_neg_inf, log_sum_exp, LN_2PI};

/// Variance floor relative to the global per-dimension variance of the training data.
pub const RELATIVE_VARIANCE_FLOOR: f64 = 1e-3;
/// Absolute lower bound on any variance, for data with a constant dimension.
pub const ABSOLUTE_VARIANCE_FLOOR: f64 = 1e-8;
/// Components (and HMM states) with less occupancy than this keep their parameters.
pub(crate) const MIN_OCCUPANCY: f64 = 1e-8;

/// Per-dimension variance floor for a training set: `1e-3 ×` its global variance.
pub fn variance_floor<'a>(frames: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let (mut n, mut mean, mut m2) = (0.0, vec![0.0; dim], vec![0.0; dim]);
    for x in frames {
        n += 1.0;
        for d in 0..dim {
            let delta = x[d] - mean[d];
            mean[d] += delta / n;
            m2[d] += delta * (x[d] - mean[d]);
        }
    }
    m2.into_iter()
        .map(|s| {
            let var = if n > 0.0 { s / n } else { 0.0 };
            (RELATIVE_VARIANCE_FLOOR * var).max(ABSOLUTE_VARIANCE_FLOOR)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

/// A weighted sum of diagonal Gaussians over `dim`-dimensional vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GmmParams", into = "GmmParams")]
pub struct Gmm {
    dim: usize,
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    // ln w_m - ½ Σ_d ln(2π σ²_md)
    log_norms: Vec<f64>,
    inv_variances: Vec<f64>,
}

impl Gmm {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let m = weights.len();
        if m == 0 {
            return Err(contract!("a mixture needs at least one component"));
        }
        if means.len() != m || variances.len() != m {
            return Err(contract!("{m} weights but {} means and {} variance rows", means.len(), variances.len()));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().chain(&variances).any(|row| row.len() != dim) {
            return Err(contract!("ragged or empty mixture parameters"));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(alloc::format!("mixture weights must lie on the simplex (sum {total})")));
        }
        if means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite mixture mean".into()));
        }
        if variances.iter().flatten().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Validation("mixture variances must be positive and finite".into()));
        }
        Ok(Self::from_flat(dim, weights, means.concat(), variances.concat()))
    }

    fn from_flat(dim: usize, weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Self {
        let log_norms = weights
            .iter()
            .zip(variances.chunks_exact(dim))
            .map(|(&w, var)| ln_or_neg_inf(w) - 0.5 * var.iter().map(|v| LN_2PI + libm::log(*v)).sum::<f64>())
            .collect();
        let inv_variances = variances.iter().map(|v| 1.0 / v).collect();
        Self { dim, weights, means, variances, log_norms, inv_variances }
    }

    /// One component with the given mean and variance.
    pub fn single(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![variance])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mixture_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, m: usize) -> &[f64] {
        &self.means[m * self.dim..(m + 1) * self.dim]
    }

    pub fn variance(&self, m: usize) -> &[f64] {
        &self.variances[m * self.dim..(m + 1) * self.dim]
    }

    pub fn params(&self) -> GmmParams {
        GmmParams {
            weights: self.weights.clone(),
            means: self.means.chunks_exact(self.dim).map(<[f64]>::to_vec).collect(),
            variances: self.variances.chunks_exact(self.dim).map(<[f64]>::to_vec).collect(),
        }
    }

    /// Fills `out[m] = ln(w_m · N(x; μ_m, σ²_m))` and returns their log-sum.
    pub fn component_log_joint(&self, x: &[f64], out: &mut [f64]) -> f64 {
        for (m, slot) in out.iter_mut().enumerate().take(self.mixture_count()) {
            let base = m * self.dim;
            let mut quad = 0.0;
            let means = &self.means[base..base + self.dim];
            let inv = &self.inv_variances[base..base + self.dim];
            for ((xd, md), id) in x.iter().zip(means).zip(inv) {
                let diff = xd - md;
                quad += diff * diff * id;
            }
            *slot = self.log_norms[m] - 0.5 * quad;
        }
        log_sum_exp(&out[..self.mixture_count()])
    }

    /// `ln Σ_m w_m N(x; μ_m, σ²_m)`.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut scratch = [0.0; 32];
        if self.mixture_count() <= scratch.len() {
            self.component_log_joint(x, &mut scratch)
        } else {
            let mut buf = vec![0.0; self.mixture_count()];
            self.component_log_joint(x, &mut buf)
        }
    }

    /// Total log-likelihood of independent frames.
    pub fn log_likelihood<'a>(&self, frames: impl IntoIterator<Item = &'a [f64]>) -> f64 {
        frames.into_iter().map(|x| self.log_density(x)).sum()
    }

    /// Clamps every variance from below.
    pub fn with_floor(mut self, floor: &[f64]) -> Self {
        for var in self.variances.chunks_exact_mut(self.dim) {
            var.iter_mut().zip(floor).for_each(|(v, f)| *v = v.max(*f));
        }
        Self::from_flat(self.dim, self.weights, self.means, self.variances)
    }

    /// Seeded k-means initialization: one component per cluster, weights from
    /// cluster sizes, variances from cluster spread (floored).
    pub fn from_kmeans(frames: &[&[f64]], mixture_count: usize, seed: u64, floor: &[f64]) -> Result<Self> {
        if mixture_count == 0 {
            return Err(contract!("mixture count must be positive"));
        }
        if frames.len() < mixture_count {
            return Err(Error::Training(alloc::format!(
                "{} frames cannot seed {mixture_count} mixture components",
                frames.len()
            )));
        }
        let dim = frames[0].len();
        let clustering = kmeans(frames, mixture_count, seed, 50);
        let mut counts = vec![0usize; mixture_count];
        let mut sq = vec![vec![0.0; dim]; mixture_count];
        for (&a, x) in clustering.assignments.iter().zip(frames) {
            counts[a] += 1;
            let c = &clustering.centroids[a];
            sq[a].iter_mut().zip(x.iter().zip(c)).for_each(|(s, (v, m))| *s += (v - m) * (v - m));
        }
        let n = frames.len() as f64;
        let weights = counts.iter().map(|&c| c as f64 / n).collect();
        let variances = sq
            .into_iter()
            .zip(&counts)
            .map(|(s, &c)| {
                s.into_iter().zip(floor).map(|(v, f)| if c > 0 { (v / c as f64).max(*f) } else { *f }).collect()
            })
            .collect();
        Self::new(weights, clustering.centroids, variances)
    }
}

impl TryFrom<GmmParams> for Gmm {
    type Error = Error;

    fn try_from(p: GmmParams) -> Result<Self> {
        Gmm::new(p.weights, p.means, p.variances)
    }
}

impl From<Gmm> for GmmParams {
    fn from(g: Gmm) -> Self {
        g.params()
    }
}

/// Sufficient statistics for re-estimating one mixture, accumulated around
/// the current means to limit cancellation.
#[derive(Debug, Clone)]
pub(crate) struct GmmStats {
    dim: usize,
    occupancy: Vec<f64>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl GmmStats {
    pub(crate) fn new(mixtures: usize, dim: usize) -> Self {
        Self { dim, occupancy: vec![0.0; mixtures], sum: vec![0.0; mixtures * dim], sum_sq: vec![0.0; mixtures * dim] }
    }

    /// Adds frame `x` with total weight `weight`, split across components
    /// according to the log-joint values in `log_joint` (normalized by `log_total`).
    pub(crate) fn add(&mut self, gmm: &Gmm, x: &[f64], weight: f64, log_joint: &[f64], log_total: f64) {
        if weight <= 0.0 {
            return;
        }
        for (m, &lj) in log_joint.iter().enumerate() {
            let r = weight * libm::exp(lj - log_total);
            if r == 0.0 {
                continue;
            }
            self.occupancy[m] += r;
            let mean = gmm.mean(m);
            let base = m * self.dim;
            for d in 0..self.dim {
                let c = x[d] - mean[d];
                self.sum[base + d] += r * c;
                self.sum_sq[base + d] += r * c * c;
            }
        }
    }

    pub(crate) fn total(&self) -> f64 {
        self.occupancy.iter().sum()
    }

    /// M-step. Returns `gmm` unchanged when the whole mixture saw no data;
    /// individual starved components keep their mean and variance.
    pub(crate) fn reestimate(&self, gmm: &Gmm, floor: &[f64]) -> Gmm {
        let total = self.total();
        if total < MIN_OCCUPANCY {
            return gmm.clone();
        }
        let dim = self.dim;
        let weights: Vec<f64> = self.occupancy.iter().map(|o| o / total).collect();
        let mut means = gmm.means.clone();
        let mut variances = gmm.variances.clone();
        for (m, &occ) in self.occupancy.iter().enumerate() {
            if occ < MIN_OCCUPANCY {
                continue;
            }
            let base = m * dim;
            for d in 0..dim {
                let shift = self.sum[base + d] / occ;
                means[base + d] += shift;
                let var = self.sum_sq[base + d] / occ - shift * shift;
                variances[base + d] = var.max(floor[d]);
            }
        }
        let wsum: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / wsum).collect();
        Gmm::from_flat(dim, weights, means, variances)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmTrainConfig {
    pub mixture_count: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for GmmTrainConfig {
    fn default() -> Self {
        Self { mixture_count: 16, max_iters: 100, rel_tol: 1e-5 }
    }
}

/// k-means initialization followed by EM on pooled frames.
pub fn train_gmm(frames: &[&[f64]], config: &GmmTrainConfig, seed: u64) -> Result<(Gmm, TrainReport)> {
    if frames.len() < config.mixture_count.max(1) {
        return Err(Error::Training(alloc::format!(
            "{} frames for {} mixture components",
            frames.len(),
            config.mixture_count
        )));
    }
    let dim = frames[0].len();
    if frames.iter().any(|f| f.len() != dim) {
        return Err(contract!("frames of differing dimension"));
    }
    let floor = variance_floor(frames.iter().copied(), dim);
    let mut gmm = Gmm::from_kmeans(frames, config.mixture_count, seed, &floor)?;
    let mut history = Vec::new();
    let mut converged = false;
    if config.max_iters == 0 {
        return Ok((gmm, TrainReport { history, iterations: 0, converged }));
    }
    let mut scratch = vec![0.0; config.mixture_count];
    let e_step = |g: &Gmm, scratch: &mut [f64]| {
        let mut stats = GmmStats::new(g.mixture_count(), dim);
        let mut ll = 0.0;
        for x in frames {
            let lse = g.component_log_joint(x, scratch);
            ll += lse;
            stats.add(g, x, 1.0, scratch, lse);
        }
        (ll, stats)
    };
    let (mut ll, mut stats) = e_step(&gmm, &mut scratch);
    history.push(ll);
    let mut iterations = 0;
    while iterations < config.max_iters {
        gmm = stats.reestimate(&gmm, &floor);
        iterations += 1;
        let (next_ll, next_stats) = e_step(&gmm, &mut scratch);
        history.push(next_ll);
        let improvement = (next_ll - ll) / ll.abs().max(f64::MIN_POSITIVE);
        ll = next_ll;
        stats = next_stats;
        if improvement < config.rel_tol {
            converged = true;
            break;
        }
    }
    Ok((gmm, TrainReport { history, iterations, converged }))
}

/// Σ over frames of `ln Σ_m w_m N(x_t; μ_m, σ²_m)`.
pub fn gmm_log_likelihood(model: &Gmm, obs: &crate::FeatureSequence) -> Result<f64> {
    if obs.dim() != model.dim() {
        return Err(contract!("observation width {} but model width {}", obs.dim(), model.dim()));
    }
    Ok(model.log_likelihood(obs.frames()))
}
