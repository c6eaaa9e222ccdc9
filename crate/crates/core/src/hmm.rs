//! Continuous-density HMMs with diagonal Gaussian-mixture emissions.
//!
//! Scoring uses the forward recursion entirely in the log domain; zero
//! transition probabilities are carried as `-∞` and never enter a sum.
//! Training is multi-sequence Baum-Welch. Models produced by [`init_hmm`]
//! are left-to-right with self-loops and an absorbing final state, and
//! re-estimation preserves those structural zeros.

use alloc::vec;
use alloc::vec::Vec;
use core::borrow::Borrow;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::frontend::FeatureSequence;
use crate::gmm::{variance_floor, Gmm, GmmStats, MIN_OCCUPANCY};
use crate::math::{ln_or_neg_inf, log_add, log_sum_exp, mix_seed};

/// Self-loop probability of every non-final state in a fresh model.
pub const INITIAL_SELF_LOOP: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmmConfig {
    pub state_count: usize,
    pub mixture_count: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for HmmConfig {
    fn default() -> Self {
        Self { state_count: 6, mixture_count: 3, max_iters: 20, rel_tol: 1e-4 }
    }
}

/// Per-iteration log-likelihood trace of an EM run.
///
/// `history[0]` is the total log-likelihood of the starting model and
/// `history[i]` the total after the `i`-th re-estimation, so a run of `k`
/// iterations has `k + 1` entries (none when no iteration was requested).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl TrainReport {
    /// True when no step lowers the log-likelihood by more than `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.history.windows(2).all(|w| w[1] >= w[0] - slack)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmParams {
    pub pi: Vec<f64>,
    #[serde(rename = "A")]
    pub transitions: Vec<Vec<f64>>,
    pub states: Vec<Gmm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HmmParams", into = "HmmParams")]
pub struct HmmModel {
    initial: Vec<f64>,
    transitions: Vec<Vec<f64>>,
    states: Vec<Gmm>,
    log_initial: Vec<f64>,
    log_transitions: Vec<Vec<f64>>,
}

fn on_simplex(p: &[f64]) -> bool {
    p.iter().all(|v| v.is_finite() && *v >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

impl HmmModel {
    pub fn new(initial: Vec<f64>, transitions: Vec<Vec<f64>>, states: Vec<Gmm>) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(contract!("an HMM needs at least one state"));
        }
        if initial.len() != n || transitions.len() != n || transitions.iter().any(|r| r.len() != n) {
            return Err(contract!("initial/transition shapes do not match {n} states"));
        }
        if !on_simplex(&initial) {
            return Err(Error::Validation("initial probabilities must lie on the simplex".into()));
        }
        if let Some(i) = transitions.iter().position(|r| !on_simplex(r)) {
            return Err(Error::Validation(alloc::format!("transition row {i} is not stochastic")));
        }
        let (dim, mix) = (states[0].dim(), states[0].mixture_count());
        if states.iter().any(|s| s.dim() != dim || s.mixture_count() != mix) {
            return Err(contract!("all states must share dimension and mixture count"));
        }
        Ok(Self::from_parts(initial, transitions, states))
    }

    fn from_parts(initial: Vec<f64>, transitions: Vec<Vec<f64>>, states: Vec<Gmm>) -> Self {
        let log_initial = initial.iter().map(|&p| ln_or_neg_inf(p)).collect();
        let log_transitions = transitions.iter().map(|row| row.iter().map(|&p| ln_or_neg_inf(p)).collect()).collect();
        Self { initial, transitions, states, log_initial, log_transitions }
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn mixture_count(&self) -> usize {
        self.states[0].mixture_count()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transitions(&self) -> &[Vec<f64>] {
        &self.transitions
    }

    pub fn states(&self) -> &[Gmm] {
        &self.states
    }

    /// True when only self-loops and single-step advances have mass.
    pub fn is_left_to_right(&self) -> bool {
        self.transitions
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().enumerate().all(|(j, &p)| p == 0.0 || j == i || j == i + 1))
    }

    fn check_obs(&self, obs: &FeatureSequence) -> Result<()> {
        if obs.dim() != self.dim() {
            return Err(contract!("observation width {} but model width {}", obs.dim(), self.dim()));
        }
        if obs.is_empty() {
            return Err(contract!("empty observation sequence"));
        }
        Ok(())
    }

    /// `log b_j(o_t)` as a T×N row-major table, plus per-component log-joints (T×N×M).
    fn emission_tables(&self, obs: &FeatureSequence, keep_components: bool) -> (Vec<f64>, Vec<f64>) {
        let (n, m) = (self.state_count(), self.mixture_count());
        let mut log_b = Vec::with_capacity(obs.frame_count() * n);
        let mut comps = if keep_components { vec![0.0; obs.frame_count() * n * m] } else { Vec::new() };
        let mut scratch = vec![0.0; m];
        for (t, x) in obs.frames().enumerate() {
            for (j, state) in self.states.iter().enumerate() {
                let slot = if keep_components {
                    let base = (t * n + j) * m;
                    &mut comps[base..base + m]
                } else {
                    &mut scratch[..]
                };
                log_b.push(state.component_log_joint(x, slot));
            }
        }
        (log_b, comps)
    }

    fn forward_table(&self, log_b: &[f64], frames: usize) -> Vec<f64> {
        let n = self.state_count();
        let mut alpha = vec![f64::NEG_INFINITY; frames * n];
        for j in 0..n {
            alpha[j] = self.log_initial[j] + log_b[j];
        }
        for t in 1..frames {
            for j in 0..n {
                let mut acc = f64::NEG_INFINITY;
                for i in 0..n {
                    let a = self.log_transitions[i][j];
                    if a != f64::NEG_INFINITY {
                        acc = log_add(acc, alpha[(t - 1) * n + i] + a);
                    }
                }
                alpha[t * n + j] = acc + log_b[t * n + j];
            }
        }
        alpha
    }

    fn backward_table(&self, log_b: &[f64], frames: usize) -> Vec<f64> {
        let n = self.state_count();
        let mut beta = vec![f64::NEG_INFINITY; frames * n];
        beta[(frames - 1) * n..].fill(0.0);
        for t in (0..frames - 1).rev() {
            for i in 0..n {
                let mut acc = f64::NEG_INFINITY;
                for j in 0..n {
                    let a = self.log_transitions[i][j];
                    if a != f64::NEG_INFINITY {
                        acc = log_add(acc, a + log_b[(t + 1) * n + j] + beta[(t + 1) * n + j]);
                    }
                }
                beta[t * n + i] = acc;
            }
        }
        beta
    }
}

impl TryFrom<HmmParams> for HmmModel {
    type Error = Error;

    fn try_from(p: HmmParams) -> Result<Self> {
        HmmModel::new(p.pi, p.transitions, p.states)
    }
}

impl From<HmmModel> for HmmParams {
    fn from(m: HmmModel) -> Self {
        HmmParams { pi: m.initial, transitions: m.transitions, states: m.states }
    }
}

/// `ln P(O | λ)` by the forward recursion.
pub fn forward_log_likelihood(model: &HmmModel, obs: &FeatureSequence) -> Result<f64> {
    model.check_obs(obs)?;
    let (log_b, _) = model.emission_tables(obs, false);
    let t = obs.frame_count();
    let alpha = model.forward_table(&log_b, t);
    Ok(log_sum_exp(&alpha[(t - 1) * model.state_count()..]))
}

/// Sum of per-sequence forward log-likelihoods.
pub fn dataset_log_likelihood<S: Borrow<FeatureSequence>>(model: &HmmModel, dataset: &[S]) -> Result<f64> {
    dataset.iter().map(|obs| forward_log_likelihood(model, obs.borrow())).sum()
}

fn check_dataset<S: Borrow<FeatureSequence>>(
    dataset: &[S],
    min_frames: usize,
    err: fn(alloc::string::String) -> Error,
) -> Result<usize> {
    let first = dataset.first().ok_or_else(|| err("empty training set".into()))?;
    let dim = first.borrow().dim();
    for (i, seq) in dataset.iter().map(Borrow::borrow).enumerate() {
        if seq.dim() != dim {
            return Err(contract!("sequence {i} has width {}, expected {dim}", seq.dim()));
        }
        if seq.frame_count() < min_frames {
            return Err(err(alloc::format!(
                "sequence {i} has {} frames, the {min_frames}-state topology needs at least {min_frames}",
                seq.frame_count()
            )));
        }
    }
    Ok(dim)
}

/// Left-to-right model from uniform segmentation plus per-state seeded k-means.
pub fn init_hmm<S: Borrow<FeatureSequence>>(dataset: &[S], config: &HmmConfig, seed: u64) -> Result<HmmModel> {
    let n = config.state_count;
    if n == 0 || config.mixture_count == 0 {
        return Err(Error::Initialization("state and mixture counts must be positive".into()));
    }
    let dim = check_dataset(dataset, n, Error::Initialization)?;
    let floor = variance_floor(dataset.iter().flat_map(|s| s.borrow().frames()), dim);
    let mut pools: Vec<Vec<&[f64]>> = vec![Vec::new(); n];
    for seq in dataset.iter().map(Borrow::borrow) {
        let t_count = seq.frame_count();
        for (t, x) in seq.frames().enumerate() {
            pools[t * n / t_count].push(x);
        }
    }
    let states = pools
        .iter()
        .enumerate()
        .map(|(j, pool)| {
            Gmm::from_kmeans(pool, config.mixture_count, mix_seed(seed, j as u64), &floor)
                .map_err(|e| Error::Initialization(alloc::format!("state {j}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;
    let transitions = (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            if i + 1 < n {
                row[i] = INITIAL_SELF_LOOP;
                row[i + 1] = 1.0 - INITIAL_SELF_LOOP;
            } else {
                row[i] = 1.0;
            }
            row
        })
        .collect();
    HmmModel::new(initial, transitions, states)
}

struct Accumulators {
    initial: Vec<f64>,
    transitions: Vec<Vec<f64>>,
    states: Vec<GmmStats>,
    sequences: usize,
}

impl Accumulators {
    fn new(model: &HmmModel) -> Self {
        let n = model.state_count();
        Self {
            initial: vec![0.0; n],
            transitions: vec![vec![0.0; n]; n],
            states: (0..n).map(|_| GmmStats::new(model.mixture_count(), model.dim())).collect(),
            sequences: 0,
        }
    }

    /// Forward-backward over one sequence; returns its log-likelihood.
    fn add_sequence(&mut self, model: &HmmModel, obs: &FeatureSequence) -> f64 {
        let (n, m) = (model.state_count(), model.mixture_count());
        let t_count = obs.frame_count();
        let (log_b, comps) = model.emission_tables(obs, true);
        let alpha = model.forward_table(&log_b, t_count);
        let beta = model.backward_table(&log_b, t_count);
        let ll = log_sum_exp(&alpha[(t_count - 1) * n..]);
        self.sequences += 1;
        for (t, x) in obs.frames().enumerate() {
            for j in 0..n {
                let gamma = libm::exp(alpha[t * n + j] + beta[t * n + j] - ll);
                if t == 0 {
                    self.initial[j] += gamma;
                }
                let base = (t * n + j) * m;
                self.states[j].add(&model.states[j], x, gamma, &comps[base..base + m], log_b[t * n + j]);
            }
            if t + 1 < t_count {
                for i in 0..n {
                    for j in 0..n {
                        let a = model.log_transitions[i][j];
                        if a == f64::NEG_INFINITY {
                            continue;
                        }
                        let xi = alpha[t * n + i] + a + log_b[(t + 1) * n + j] + beta[(t + 1) * n + j] - ll;
                        self.transitions[i][j] += libm::exp(xi);
                    }
                }
            }
        }
        ll
    }

    fn reestimate(&self, model: &HmmModel, floor: &[f64]) -> HmmModel {
        let n = model.state_count();
        let mut initial: Vec<f64> = self.initial.iter().map(|g| g / self.sequences as f64).collect();
        let total: f64 = initial.iter().sum();
        initial.iter_mut().for_each(|p| *p /= total);
        let transitions = (0..n)
            .map(|i| {
                let row = &self.transitions[i];
                let occ: f64 = row.iter().sum();
                if occ < MIN_OCCUPANCY {
                    model.transitions[i].clone()
                } else {
                    row.iter().map(|x| x / occ).collect()
                }
            })
            .collect();
        let states = self.states.iter().zip(&model.states).map(|(stats, prev)| stats.reestimate(prev, floor)).collect();
        HmmModel::from_parts(initial, transitions, states)
    }
}

fn e_step<S: Borrow<FeatureSequence>>(model: &HmmModel, dataset: &[S]) -> (f64, Accumulators) {
    let mut acc = Accumulators::new(model);
    let ll = dataset.iter().map(|obs| acc.add_sequence(model, obs.borrow())).sum();
    (ll, acc)
}

/// Multi-sequence Baum-Welch. Stops when the relative gain in total
/// log-likelihood drops below `config.rel_tol` or after `config.max_iters`
/// re-estimations.
pub fn baum_welch_train<S: Borrow<FeatureSequence>>(
    model: &HmmModel,
    dataset: &[S],
    config: &HmmConfig,
) -> Result<(HmmModel, TrainReport)> {
    let dim = check_dataset(dataset, model.state_count(), Error::Training)?;
    if dim != model.dim() {
        return Err(contract!("training data width {dim} but model width {}", model.dim()));
    }
    let mut report = TrainReport::default();
    if config.max_iters == 0 {
        return Ok((model.clone(), report));
    }
    let floor = variance_floor(dataset.iter().flat_map(|s| s.borrow().frames()), dim);
    let mut current = model.clone();
    let (mut ll, mut acc) = e_step(&current, dataset);
    report.history.push(ll);
    while report.iterations < config.max_iters {
        current = acc.reestimate(&current, &floor);
        report.iterations += 1;
        let (next_ll, next_acc) = e_step(&current, dataset);
        report.history.push(next_ll);
        let gain = (next_ll - ll) / ll.abs().max(f64::MIN_POSITIVE);
        ll = next_ll;
        acc = next_acc;
        if gain < config.rel_tol {
            report.converged = true;
            break;
        }
    }
    Ok((current, report))
}

/// [`init_hmm`] followed by [`baum_welch_train`].
pub fn train_hmm<S: Borrow<FeatureSequence>>(
    dataset: &[S],
    config: &HmmConfig,
    seed: u64,
) -> Result<(HmmModel, TrainReport)> {
    let init = init_hmm(dataset, config, seed)?;
    baum_welch_train(&init, dataset, config)
}
