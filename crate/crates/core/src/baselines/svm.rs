use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::math::{argmax, mix_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    /// Hinge-loss weight against the L2 penalty.
    pub c: f64,
    pub epochs: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 1.0, epochs: 200 }
    }
}

/// Linear one-vs-rest SVM over standardized fixed-length vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmOvrModel<L> {
    pub labels: Vec<L>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl<L: Clone + PartialEq> SvmOvrModel<L> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.labels.len() < 2 || self.weights.len() != self.labels.len() || self.biases.len() != self.labels.len() {
            return Err(Error::Validation("one weight vector and bias per class, at least two classes".into()));
        }
        if self.scale.len() != d || self.weights.iter().any(|w| w.len() != d) {
            return Err(Error::Validation("standardizer and weight widths disagree".into()));
        }
        if self.scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Validation("standardizer scales must be positive".into()));
        }
        Ok(())
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| (v - m) / s).collect()
    }

    /// Signed margin of every class, in label order.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(contract!("vector width {} but model width {}", x.len(), self.dim()));
        }
        let z = self.standardize(x);
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + b)
            .collect())
    }

    /// Label with the largest margin; the earliest label wins ties.
    pub fn predict(&self, x: &[f64]) -> Result<&L> {
        let scores = self.scores(x)?;
        Ok(&self.labels[argmax(&scores).expect("at least two classes")])
    }
}

/// Trains one binary hinge-loss classifier per entry of `classes` with
/// Pegasos-style stochastic subgradient steps.
///
/// The bias is learned as the weight of a constant input of 1. Each epoch
/// visits every vector once in a seed-determined order.
pub fn train_svm_ovr<L: Clone + PartialEq>(
    vectors: &[Vec<f64>],
    labels: &[L],
    classes: &[L],
    config: &SvmConfig,
    seed: u64,
) -> Result<SvmOvrModel<L>> {
    if classes.len() < 2 {
        return Err(Error::Training("a one-vs-rest SVM needs at least two classes".into()));
    }
    if vectors.len() != labels.len() || vectors.is_empty() {
        return Err(contract!("{} vectors but {} labels", vectors.len(), labels.len()));
    }
    if config.c.is_nan() || config.c <= 0.0 {
        return Err(contract!("regularization C must be positive"));
    }
    let d = vectors[0].len();
    if vectors.iter().any(|v| v.len() != d) {
        return Err(contract!("vectors of differing width"));
    }
    let targets: Vec<usize> = labels
        .iter()
        .map(|l| classes.iter().position(|c| c == l).ok_or_else(|| contract!("label outside the class list")))
        .collect::<Result<_>>()?;
    for k in 0..classes.len() {
        if !targets.contains(&k) {
            return Err(Error::Training(alloc::format!("class #{k} has no training examples")));
        }
    }

    let n = vectors.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| vectors.iter().map(|v| v[j]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..d)
        .map(|j| {
            let var = vectors.iter().map(|v| (v[j] - mean[j]) * (v[j] - mean[j])).sum::<f64>() / n;
            let sd = libm::sqrt(var);
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let augmented: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| {
            let mut z: Vec<f64> = v.iter().zip(mean.iter().zip(&scale)).map(|(x, (m, s))| (x - m) / s).collect();
            z.push(1.0);
            z
        })
        .collect();

    let lambda = 1.0 / (config.c * n);
    let mut weights = Vec::with_capacity(classes.len());
    let mut biases = Vec::with_capacity(classes.len());
    for k in 0..classes.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, k as u64));
        let mut w = vec![0.0; d + 1];
        let mut order: Vec<usize> = (0..augmented.len()).collect();
        let mut step = 0u64;
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                step += 1;
                let eta = 1.0 / (lambda * step as f64);
                let y = if targets[i] == k { 1.0 } else { -1.0 };
                let x = &augmented[i];
                let margin = y * w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                let shrink = 1.0 - eta * lambda;
                w.iter_mut().for_each(|v| *v *= shrink);
                if margin < 1.0 {
                    w.iter_mut().zip(x).for_each(|(v, xi)| *v += eta * y * xi);
                }
            }
        }
        biases.push(w.pop().unwrap());
        weights.push(w);
    }
    Ok(SvmOvrModel { labels: classes.to_vec(), weights, biases, mean, scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::tests::normal;

    #[test]
    fn separable_pair_in_one_dimension() {
        let vectors = vec![vec![-1.0], vec![1.0]];
        let labels = ["neg", "pos"];
        let model = train_svm_ovr(&vectors, &labels, &labels, &SvmConfig::default(), 0).unwrap();
        assert_eq!(*model.predict(&[-1.0]).unwrap(), "neg");
        assert_eq!(*model.predict(&[1.0]).unwrap(), "pos");
    }

    #[test]
    fn deterministic_given_seed() {
        let vectors: Vec<Vec<f64>> = (0..30).map(|i| vec![libm::sin(i as f64), (i % 3) as f64]).collect();
        let labels: Vec<u8> = (0..30).map(|i| (i % 3) as u8).collect();
        let cfg = SvmConfig { c: 1.0, epochs: 20 };
        let a = train_svm_ovr(&vectors, &labels, &[0, 1, 2], &cfg, 7).unwrap();
        let b = train_svm_ovr(&vectors, &labels, &[0, 1, 2], &cfg, 7).unwrap();
        assert_eq!(a.scores(&[0.3, 1.0]).unwrap(), b.scores(&[0.3, 1.0]).unwrap());
    }

    #[test]
    fn three_separated_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        for (k, c) in centers.iter().enumerate() {
            for _ in 0..50 {
                vectors.push(vec![c[0] + normal(&mut rng), c[1] + normal(&mut rng)]);
                labels.push(k);
            }
        }
        let model = train_svm_ovr(&vectors, &labels, &[0, 1, 2], &SvmConfig::default(), 1).unwrap();
        model.validate().unwrap();
        let correct = vectors.iter().zip(&labels).filter(|(v, l)| model.predict(v).unwrap() == *l).count();
        assert!(correct as f64 >= 0.95 * 150.0, "{correct}/150");
    }

    #[test]
    fn empty_class_is_a_training_error() {
        let vectors = vec![vec![0.0], vec![1.0]];
        let labels = [0, 0];
        assert!(matches!(train_svm_ovr(&vectors, &labels, &[0, 1], &SvmConfig::default(), 0), Err(Error::Training(_))));
        assert!(train_svm_ovr(&vectors, &labels, &[0], &SvmConfig::default(), 0).is_err());
    }
}
