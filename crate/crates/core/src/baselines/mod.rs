//! Comparison classifiers: a frame-level GMM, an LBG vector quantizer and a
//! linear one-vs-rest SVM over utterance statistics. All consume the same
//! MFCC sequences as the HMM path.

mod svm;
mod vq;

use alloc::vec;
use alloc::vec::Vec;

pub use crate::gmm::{gmm_log_likelihood, train_gmm, Gmm as GmmModel, GmmTrainConfig};
pub use svm::{train_svm_ovr, SvmConfig, SvmOvrModel};
pub use vq::{train_vq_codebook, vq_distortion, VqCodebook, VqTrainConfig, VqTrainReport};

use crate::error::{contract, Result};
use crate::frontend::FeatureSequence;

/// Fixed-length summary of an utterance: per-dimension means followed by
/// per-dimension population standard deviations (length `2·D`).
pub fn aggregate_utterance(obs: &FeatureSequence) -> Result<Vec<f64>> {
    if obs.is_empty() {
        return Err(contract!("cannot aggregate an empty sequence"));
    }
    let d = obs.dim();
    let n = obs.frame_count() as f64;
    let mut mean = vec![0.0; d];
    for f in obs.frames() {
        mean.iter_mut().zip(f).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for f in obs.frames() {
        var.iter_mut().zip(f.iter().zip(&mean)).for_each(|(v, (x, m))| *v += (x - m) * (x - m));
    }
    mean.extend(var.into_iter().map(|v| libm::sqrt(v / n)));
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sequence_has_zero_spread() {
        let obs = FeatureSequence::from_rows(&[[1.0, -2.0]; 5]).unwrap();
        assert_eq!(aggregate_utterance(&obs).unwrap(), [1.0, -2.0, 0.0, 0.0]);
    }

    #[test]
    fn single_frame() {
        let obs = FeatureSequence::from_rows(&[[3.0, 4.0, 5.0]]).unwrap();
        assert_eq!(aggregate_utterance(&obs).unwrap(), [3.0, 4.0, 5.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn symmetric_pair_uses_population_spread() {
        let obs = FeatureSequence::from_rows(&[[2.0, -0.5], [-2.0, 0.5]]).unwrap();
        assert_eq!(aggregate_utterance(&obs).unwrap(), [0.0, 0.0, 2.0, 0.5]);
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let obs = FeatureSequence::new(Vec::new(), 3).unwrap();
        assert!(aggregate_utterance(&obs).is_err());
    }
}
