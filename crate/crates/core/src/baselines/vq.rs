use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::frontend::FeatureSequence;
use crate::kmeans::{nearest, squared_distance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VqTrainConfig {
    /// Final codebook size; must be a power of two.
    pub codebook_size: usize,
    pub split_epsilon: f64,
    pub max_lloyd_iters: usize,
    pub rel_tol: f64,
}

impl Default for VqTrainConfig {
    fn default() -> Self {
        Self { codebook_size: 64, split_epsilon: 1e-3, max_lloyd_iters: 50, rel_tol: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CodebookParams", into = "CodebookParams")]
pub struct VqCodebook {
    codewords: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookParams {
    pub codewords: Vec<Vec<f64>>,
}

impl VqCodebook {
    pub fn new(codewords: Vec<Vec<f64>>) -> Result<Self> {
        let k = codewords.len();
        if k == 0 || !k.is_power_of_two() {
            return Err(Error::Validation(alloc::format!("codebook size {k} is not a power of two")));
        }
        let dim = codewords[0].len();
        if dim == 0 || codewords.iter().any(|c| c.len() != dim) {
            return Err(contract!("ragged or empty codewords"));
        }
        if codewords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite codeword".into()));
        }
        Ok(Self { codewords })
    }

    pub fn codewords(&self) -> &[Vec<f64>] {
        &self.codewords
    }

    pub fn size(&self) -> usize {
        self.codewords.len()
    }

    pub fn dim(&self) -> usize {
        self.codewords[0].len()
    }
}

impl TryFrom<CodebookParams> for VqCodebook {
    type Error = Error;

    fn try_from(p: CodebookParams) -> Result<Self> {
        VqCodebook::new(p.codewords)
    }
}

impl From<VqCodebook> for CodebookParams {
    fn from(c: VqCodebook) -> Self {
        CodebookParams { codewords: c.codewords }
    }
}

/// Mean distortion after every Lloyd assignment pass, grouped by codebook size.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VqTrainReport {
    pub levels: Vec<(usize, Vec<f64>)>,
}

impl VqTrainReport {
    pub fn final_distortion(&self) -> Option<f64> {
        self.levels.last().and_then(|(_, d)| d.last().copied())
    }
}

fn mean_distortion(frames: &[&[f64]], codewords: &[Vec<f64>], assignments: &mut [usize]) -> f64 {
    let mut total = 0.0;
    for (a, x) in assignments.iter_mut().zip(frames) {
        let (k, d) = nearest(x, codewords);
        *a = k;
        total += d;
    }
    total / frames.len() as f64
}

/// LBG: start from the global centroid, split every codeword into a perturbed
/// pair, refine with Lloyd iterations, repeat until `codebook_size` is reached.
pub fn train_vq_codebook(frames: &[&[f64]], config: &VqTrainConfig, seed: u64) -> Result<(VqCodebook, VqTrainReport)> {
    let k_final = config.codebook_size;
    if k_final == 0 || !k_final.is_power_of_two() {
        return Err(Error::Training(alloc::format!("codebook size {k_final} is not a power of two")));
    }
    if frames.len() < k_final {
        return Err(Error::Training(alloc::format!("{} frames for a {k_final}-word codebook", frames.len())));
    }
    let dim = frames[0].len();
    if frames.iter().any(|f| f.len() != dim) {
        return Err(contract!("frames of differing dimension"));
    }
    let n = frames.len() as f64;
    let mut centroid = vec![0.0; dim];
    for f in frames {
        centroid.iter_mut().zip(f.iter()).for_each(|(c, x)| *c += x);
    }
    centroid.iter_mut().for_each(|c| *c /= n);
    let spread: Vec<f64> = (0..dim)
        .map(|d| libm::sqrt(frames.iter().map(|f| (f[d] - centroid[d]) * (f[d] - centroid[d])).sum::<f64>() / n))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut codewords = vec![centroid];
    let mut assignments = vec![0usize; frames.len()];
    let mut report = VqTrainReport::default();
    report.levels.push((1, vec![mean_distortion(frames, &codewords, &mut assignments)]));

    while codewords.len() < k_final {
        codewords = codewords
            .into_iter()
            .flat_map(|c| {
                let delta: Vec<f64> = c
                    .iter()
                    .zip(&spread)
                    .map(|(v, s)| {
                        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                        sign * config.split_epsilon * (v.abs() + s)
                    })
                    .collect();
                let plus = c.iter().zip(&delta).map(|(v, d)| v + d).collect();
                let minus = c.iter().zip(&delta).map(|(v, d)| v - d).collect();
                [plus, minus]
            })
            .collect();
        let mut trace = Vec::new();
        let mut distortion = mean_distortion(frames, &codewords, &mut assignments);
        trace.push(distortion);
        for _ in 0..config.max_lloyd_iters {
            let k = codewords.len();
            let mut sums = vec![vec![0.0; dim]; k];
            let mut counts = vec![0usize; k];
            for (&a, x) in assignments.iter().zip(frames) {
                counts[a] += 1;
                sums[a].iter_mut().zip(x.iter()).for_each(|(s, v)| *s += v);
            }
            for ((c, s), &cnt) in codewords.iter_mut().zip(sums).zip(&counts) {
                if cnt > 0 {
                    *c = s.into_iter().map(|v| v / cnt as f64).collect();
                }
            }
            let next = mean_distortion(frames, &codewords, &mut assignments);
            trace.push(next);
            let gain = if distortion > 0.0 { (distortion - next) / distortion } else { 0.0 };
            distortion = next;
            if gain < config.rel_tol {
                break;
            }
        }
        report.levels.push((codewords.len(), trace));
    }
    Ok((VqCodebook::new(codewords)?, report))
}

/// Mean over frames of the squared distance to the nearest codeword.
pub fn vq_distortion(codebook: &VqCodebook, obs: &FeatureSequence) -> Result<f64> {
    if obs.dim() != codebook.dim() {
        return Err(contract!("observation width {} but codebook width {}", obs.dim(), codebook.dim()));
    }
    if obs.is_empty() {
        return Err(contract!("empty observation sequence"));
    }
    let total: f64 = obs
        .frames()
        .map(|x| codebook.codewords.iter().map(|c| squared_distance(x, c)).fold(f64::INFINITY, f64::min))
        .sum();
    Ok(total / obs.frame_count() as f64)
}
