//! One-stage and two-stage (speaker, then emotion) recognition.
//!
//! A [`TrainedSystem`] holds three families of models built from the
//! training half of a corpus:
//!
//! * speaker models, each trained on one speaker's neutral utterances;
//! * per-speaker emotion models, one per (speaker, emotion) cell;
//! * pooled emotion models trained on every speaker's utterances of an
//!   emotion, used by the one-stage recognizer.
//!
//! The two-stage recognizer picks the best-scoring speaker model, then the
//! best-scoring emotion model *of that predicted speaker*. A wrong first
//! stage is never corrected.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{
    aggregate_utterance, gmm_log_likelihood, train_gmm, train_svm_ovr, train_vq_codebook, vq_distortion,
    GmmTrainConfig, SvmConfig, SvmOvrModel, VqCodebook, VqTrainConfig,
};
use crate::corpus::{CorpusManifest, Emotion};
use crate::error::{contract, Error, Result};
use crate::frontend::FeatureSequence;
use crate::gmm::Gmm;
use crate::hmm::{forward_log_likelihood, train_hmm, HmmConfig, HmmModel};
use crate::math::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Hmm,
    Gmm,
    Svm,
    Vq,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] =
        [ClassifierKind::Hmm, ClassifierKind::Gmm, ClassifierKind::Svm, ClassifierKind::Vq];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Hmm => "hmm",
            ClassifierKind::Gmm => "gmm",
            ClassifierKind::Svm => "svm",
            ClassifierKind::Vq => "vq",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Validation(alloc::format!("unknown classifier {s:?}")))
    }
}

/// Hyperparameters for every classifier family.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    pub hmm: HmmConfig,
    pub gmm: GmmTrainConfig,
    pub vq: VqTrainConfig,
    pub svm: SvmConfig,
}

/// The models for one decision (which speaker, or which emotion).
///
/// Scores are always "higher is better": HMM and GMM give log-likelihoods,
/// VQ gives negated mean distortion and SVM gives one-vs-rest margins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSet<L> {
    Hmm(Vec<(L, HmmModel)>),
    Gmm(Vec<(L, Gmm)>),
    Vq(Vec<(L, VqCodebook)>),
    Svm(SvmOvrModel<L>),
    /// A decision with a single candidate; it always wins.
    Single(L),
}

impl<L: Clone + Ord> ModelSet<L> {
    /// Candidate labels in tie-break order.
    pub fn labels(&self) -> Vec<L> {
        match self {
            ModelSet::Hmm(v) => v.iter().map(|(l, _)| l.clone()).collect(),
            ModelSet::Gmm(v) => v.iter().map(|(l, _)| l.clone()).collect(),
            ModelSet::Vq(v) => v.iter().map(|(l, _)| l.clone()).collect(),
            ModelSet::Svm(m) => m.labels.clone(),
            ModelSet::Single(l) => alloc::vec![l.clone()],
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ModelSet::Hmm(v) => v.len(),
            ModelSet::Gmm(v) => v.len(),
            ModelSet::Vq(v) => v.len(),
            ModelSet::Svm(m) => m.labels.len(),
            ModelSet::Single(_) => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn scores(&self, obs: &FeatureSequence) -> Result<Vec<(L, f64)>> {
        let scored: Vec<(L, f64)> = match self {
            ModelSet::Hmm(v) => {
                v.iter().map(|(l, m)| Ok((l.clone(), forward_log_likelihood(m, obs)?))).collect::<Result<_>>()?
            }
            ModelSet::Gmm(v) => {
                v.iter().map(|(l, m)| Ok((l.clone(), gmm_log_likelihood(m, obs)?))).collect::<Result<_>>()?
            }
            ModelSet::Vq(v) => {
                v.iter().map(|(l, m)| Ok((l.clone(), -vq_distortion(m, obs)?))).collect::<Result<_>>()?
            }
            ModelSet::Svm(m) => {
                let margins = m.scores(&aggregate_utterance(obs)?)?;
                m.labels.iter().cloned().zip(margins).collect()
            }
            ModelSet::Single(l) => alloc::vec![(l.clone(), 0.0)],
        };
        if scored.is_empty() {
            return Err(contract!("no models to score against"));
        }
        Ok(scored)
    }

    /// Best label and the full score list.
    pub fn decide(&self, obs: &FeatureSequence) -> Result<(L, Vec<(L, f64)>)> {
        let scores = self.scores(obs)?;
        let best = argmax_labelled(&scores).ok_or_else(|| contract!("no models to score against"))?.clone();
        Ok((best, scores))
    }
}

/// Label of the highest score; on ties the earliest entry wins.
pub fn argmax_labelled<L>(scores: &[(L, f64)]) -> Option<&L> {
    let mut best: Option<(&L, f64)> = None;
    for (label, s) in scores {
        match best {
            None => best = Some((label, *s)),
            Some((_, b)) if *s > b => best = Some((label, *s)),
            _ => {}
        }
    }
    best.map(|(l, _)| l)
}

/// Trains one model per class (or one multiclass SVM) for `kind`.
///
/// `data` maps each class to its training sequences; classes are visited in
/// key order and class `i` trains with sub-seed `mix_seed(seed, i)`.
pub fn train_model_set<L: Clone + Ord>(
    kind: ClassifierKind,
    data: &BTreeMap<L, Vec<&FeatureSequence>>,
    config: &SystemConfig,
    seed: u64,
) -> Result<ModelSet<L>> {
    if data.is_empty() {
        return Err(contract!("no classes to train"));
    }
    if data.values().any(Vec::is_empty) {
        return Err(Error::Training("a class has no training utterances".into()));
    }
    let per_class = |i: usize| mix_seed(seed, i as u64);
    Ok(match kind {
        ClassifierKind::Hmm => ModelSet::Hmm(
            data.iter()
                .enumerate()
                .map(|(i, (l, seqs))| Ok((l.clone(), train_hmm(seqs, &config.hmm, per_class(i))?.0)))
                .collect::<Result<_>>()?,
        ),
        ClassifierKind::Gmm => ModelSet::Gmm(
            data.iter()
                .enumerate()
                .map(|(i, (l, seqs))| {
                    let frames: Vec<&[f64]> = seqs.iter().flat_map(|s| s.frames()).collect();
                    Ok((l.clone(), train_gmm(&frames, &config.gmm, per_class(i))?.0))
                })
                .collect::<Result<_>>()?,
        ),
        ClassifierKind::Vq => ModelSet::Vq(
            data.iter()
                .enumerate()
                .map(|(i, (l, seqs))| {
                    let frames: Vec<&[f64]> = seqs.iter().flat_map(|s| s.frames()).collect();
                    Ok((l.clone(), train_vq_codebook(&frames, &config.vq, per_class(i))?.0))
                })
                .collect::<Result<_>>()?,
        ),
        ClassifierKind::Svm if data.len() == 1 => ModelSet::Single(data.keys().next().unwrap().clone()),
        ClassifierKind::Svm => {
            let classes: Vec<L> = data.keys().cloned().collect();
            let mut vectors = Vec::new();
            let mut labels = Vec::new();
            for (l, seqs) in data {
                for s in seqs {
                    vectors.push(aggregate_utterance(s)?);
                    labels.push(l.clone());
                }
            }
            ModelSet::Svm(train_svm_ovr(&vectors, &labels, &classes, &config.svm, seed)?)
        }
    })
}

/// Sub-seed of the speaker model family.
pub fn speaker_family_seed(seed: u64) -> u64 {
    mix_seed(seed, 0x5350_4b52)
}

/// Sub-seed of speaker `index`'s (in sorted id order) emotion models.
pub fn speaker_emotion_family_seed(seed: u64, index: usize) -> u64 {
    mix_seed(seed, 0x454d_4f00 + index as u64)
}

/// Sub-seed of the pooled one-stage emotion models.
pub fn pooled_family_seed(seed: u64) -> u64 {
    mix_seed(seed, 0x504f_4f4c)
}

/// Training data grouped the way the three model families consume it.
#[derive(Debug, Clone)]
pub struct TrainingGroups<'a> {
    pub emotions: Vec<Emotion>,
    /// Each speaker's neutral utterances.
    pub speakers: BTreeMap<String, Vec<&'a FeatureSequence>>,
    /// Each speaker's utterances, split by emotion.
    pub speaker_emotions: BTreeMap<String, BTreeMap<Emotion, Vec<&'a FeatureSequence>>>,
    /// All speakers' utterances, split by emotion.
    pub pooled: BTreeMap<Emotion, Vec<&'a FeatureSequence>>,
}

impl<'a> TrainingGroups<'a> {
    /// `features[i]` belongs to `train.records()[i]`.
    ///
    /// The emotion set is whatever the training manifest contains; it must
    /// include neutral, and every speaker must have every emotion.
    pub fn new(train: &CorpusManifest, features: &'a [FeatureSequence]) -> Result<Self> {
        if train.len() != features.len() {
            return Err(contract!("{} records but {} feature sequences", train.len(), features.len()));
        }
        if train.is_empty() {
            return Err(Error::Protocol("empty training manifest".into()));
        }
        let emotions = train.emotions();
        if !emotions.contains(&Emotion::Neutral) {
            return Err(Error::Protocol("training data has no neutral utterances".into()));
        }
        let mut speaker_emotions: BTreeMap<String, BTreeMap<Emotion, Vec<&FeatureSequence>>> = BTreeMap::new();
        let mut pooled: BTreeMap<Emotion, Vec<&FeatureSequence>> = BTreeMap::new();
        for (r, f) in train.records().iter().zip(features) {
            speaker_emotions.entry(r.speaker_id.clone()).or_default().entry(r.emotion).or_default().push(f);
            pooled.entry(r.emotion).or_default().push(f);
        }
        for (speaker, cells) in &speaker_emotions {
            if !cells.contains_key(&Emotion::Neutral) {
                return Err(Error::Protocol(alloc::format!("speaker {speaker:?} has no neutral training utterances")));
            }
            if let Some(e) = emotions.iter().find(|e| !cells.contains_key(e)) {
                return Err(Error::Protocol(alloc::format!("speaker {speaker:?} has no {e} training utterances")));
            }
        }
        let speakers =
            speaker_emotions.iter().map(|(s, cells)| (s.clone(), cells[&Emotion::Neutral].clone())).collect();
        Ok(Self { emotions, speakers, speaker_emotions, pooled })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedSystem {
    pub kind: ClassifierKind,
    pub seed: u64,
    pub emotions: Vec<Emotion>,
    pub speaker_models: ModelSet<String>,
    pub emotion_models_by_speaker: BTreeMap<String, ModelSet<Emotion>>,
    pub pooled_emotion_models: ModelSet<Emotion>,
}

impl TrainedSystem {
    /// Assembles a system from separately trained families, checking coverage.
    pub fn from_parts(
        kind: ClassifierKind,
        seed: u64,
        emotions: Vec<Emotion>,
        speaker_models: ModelSet<String>,
        emotion_models_by_speaker: BTreeMap<String, ModelSet<Emotion>>,
        pooled_emotion_models: ModelSet<Emotion>,
    ) -> Result<Self> {
        let speakers = speaker_models.labels();
        if speakers.is_empty() {
            return Err(contract!("no speaker models"));
        }
        for s in &speakers {
            let set = emotion_models_by_speaker
                .get(s)
                .ok_or_else(|| Error::Validation(alloc::format!("speaker {s:?} has no emotion models")))?;
            if set.labels() != emotions {
                return Err(Error::Validation(alloc::format!(
                    "speaker {s:?} emotion models do not cover the emotion set"
                )));
            }
        }
        if emotion_models_by_speaker.len() != speakers.len() {
            return Err(Error::Validation("emotion models for an unknown speaker".into()));
        }
        if pooled_emotion_models.labels() != emotions {
            return Err(Error::Validation("pooled emotion models do not cover the emotion set".into()));
        }
        Ok(Self { kind, seed, emotions, speaker_models, emotion_models_by_speaker, pooled_emotion_models })
    }

    pub fn speakers(&self) -> Vec<String> {
        self.speaker_models.labels()
    }
}

/// Builds all three model families, one after another.
pub fn train_system(
    train: &CorpusManifest,
    features: &[FeatureSequence],
    kind: ClassifierKind,
    config: &SystemConfig,
    seed: u64,
) -> Result<TrainedSystem> {
    let groups = TrainingGroups::new(train, features)?;
    let speaker_models = train_model_set(kind, &groups.speakers, config, speaker_family_seed(seed))?;
    let emotion_models_by_speaker = groups
        .speaker_emotions
        .iter()
        .enumerate()
        .map(|(i, (s, cells))| {
            Ok((s.clone(), train_model_set(kind, cells, config, speaker_emotion_family_seed(seed, i))?))
        })
        .collect::<Result<_>>()?;
    let pooled = train_model_set(kind, &groups.pooled, config, pooled_family_seed(seed))?;
    TrainedSystem::from_parts(kind, seed, groups.emotions, speaker_models, emotion_models_by_speaker, pooled)
}

/// Outcome of recognizing one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub utterance: Option<String>,
    pub true_speaker: Option<String>,
    /// Absent for the one-stage recognizer.
    pub predicted_speaker: Option<String>,
    pub true_emotion: Option<Emotion>,
    pub predicted_emotion: Emotion,
    #[serde(default)]
    pub speaker_scores: BTreeMap<String, f64>,
    pub emotion_scores: BTreeMap<Emotion, f64>,
}

impl Prediction {
    /// Attaches the ground truth for accuracy accounting.
    pub fn with_truth(mut self, speaker: &str, emotion: Emotion) -> Self {
        self.true_speaker = Some(speaker.to_string());
        self.true_emotion = Some(emotion);
        self
    }

    pub fn with_utterance(mut self, id: &str) -> Self {
        self.utterance = Some(id.to_string());
        self
    }
}

/// Stage one: the speaker whose model scores `obs` highest
/// (lexicographically smallest id on ties).
pub fn identify_speaker(system: &TrainedSystem, obs: &FeatureSequence) -> Result<String> {
    Ok(system.speaker_models.decide(obs)?.0)
}

/// Stage two: the best of `speaker`'s emotion models (canonical emotion order on ties).
pub fn identify_emotion_given_speaker(system: &TrainedSystem, speaker: &str, obs: &FeatureSequence) -> Result<Emotion> {
    Ok(speaker_emotion_set(system, speaker)?.decide(obs)?.0)
}

fn speaker_emotion_set<'s>(system: &'s TrainedSystem, speaker: &str) -> Result<&'s ModelSet<Emotion>> {
    system.emotion_models_by_speaker.get(speaker).ok_or_else(|| contract!("unknown speaker {speaker:?}"))
}

pub fn recognize_two_stage(system: &TrainedSystem, obs: &FeatureSequence) -> Result<Prediction> {
    let (speaker, speaker_scores) = system.speaker_models.decide(obs)?;
    let (emotion, emotion_scores) = speaker_emotion_set(system, &speaker)?.decide(obs)?;
    Ok(Prediction {
        utterance: None,
        true_speaker: None,
        predicted_speaker: Some(speaker),
        true_emotion: None,
        predicted_emotion: emotion,
        speaker_scores: speaker_scores.into_iter().collect(),
        emotion_scores: emotion_scores.into_iter().collect(),
    })
}

pub fn recognize_one_stage(system: &TrainedSystem, obs: &FeatureSequence) -> Result<Prediction> {
    let (emotion, emotion_scores) = system.pooled_emotion_models.decide(obs)?;
    Ok(Prediction {
        utterance: None,
        true_speaker: None,
        predicted_speaker: None,
        true_emotion: None,
        predicted_emotion: emotion,
        speaker_scores: BTreeMap::new(),
        emotion_scores: emotion_scores.into_iter().collect(),
    })
}
