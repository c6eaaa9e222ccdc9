//! Allocation-only core of a two-stage speech emotion recognizer.
//!
//! The recognizer first identifies who is speaking, then picks the emotion
//! using that speaker's own emotion models. Everything here is pure
//! computation over in-memory buffers: MFCC extraction, continuous-density
//! HMMs, the GMM/VQ/SVM comparison classifiers, the cascade itself, a
//! synthetic voice generator and accuracy / Student's-t accounting.
//! File formats, corpus IO and the command line live in the `cascade-ser`
//! companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod corpus;
mod error;
mod fft;
pub mod frontend;
pub mod gmm;
pub mod hmm;
mod kmeans;
pub mod math;
pub mod recognizer;
pub mod stats;
pub mod synth;

pub use corpus::{split_paper_protocol, AudioClip, CorpusManifest, Emotion, UtteranceRecord};
pub use error::{Error, Result};
pub use frontend::{FeatureSequence, MfccConfig, MfccExtractor};
pub use gmm::Gmm;
pub use hmm::{HmmConfig, HmmModel, TrainReport};
pub use recognizer::{ClassifierKind, Prediction, SystemConfig, TrainedSystem};
