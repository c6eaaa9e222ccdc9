//! Parallel training and evaluation over a featurized corpus.

use std::collections::BTreeMap;

use cascade_ser_core::recognizer::{
    pooled_family_seed, recognize_one_stage, recognize_two_stage, speaker_emotion_family_seed, speaker_family_seed,
    train_model_set, TrainingGroups,
};
use cascade_ser_core::stats::{confusion_and_accuracy, AccuracyTable, Axis, ConfusionMatrix};
use cascade_ser_core::{
    ClassifierKind, CorpusManifest, Emotion, FeatureSequence, Prediction, SystemConfig, TrainedSystem,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Same result as `cascade_ser_core::recognizer::train_system`, with the
/// model families trained concurrently on the current rayon pool.
pub fn train_system_parallel(
    train: &CorpusManifest,
    features: &[FeatureSequence],
    kind: ClassifierKind,
    config: &SystemConfig,
    seed: u64,
) -> Result<TrainedSystem> {
    let groups = TrainingGroups::new(train, features)?;
    let cells: Vec<_> = groups.speaker_emotions.iter().collect();
    let (speakers, (by_speaker, pooled)) = rayon::join(
        || train_model_set(kind, &groups.speakers, config, speaker_family_seed(seed)),
        || {
            rayon::join(
                || {
                    cells
                        .par_iter()
                        .enumerate()
                        .map(|(i, (s, c))| {
                            Ok(((*s).clone(), train_model_set(kind, c, config, speaker_emotion_family_seed(seed, i))?))
                        })
                        .collect::<Result<BTreeMap<_, _>>>()
                },
                || train_model_set(kind, &groups.pooled, config, pooled_family_seed(seed)),
            )
        },
    );
    Ok(TrainedSystem::from_parts(kind, seed, groups.emotions.clone(), speakers?, by_speaker?, pooled?)?)
}

/// Both recognizers' predictions for every test utterance, in manifest order.
pub struct Predictions {
    pub two_stage: Vec<Prediction>,
    pub one_stage: Vec<Prediction>,
}

pub fn predict(system: &TrainedSystem, test: &CorpusManifest, features: &[FeatureSequence]) -> Result<Predictions> {
    let pairs = test
        .records()
        .par_iter()
        .zip(features)
        .map(|(r, f)| {
            let tag = |p: Prediction| p.with_truth(&r.speaker_id, r.emotion).with_utterance(&r.path);
            Ok((tag(recognize_two_stage(system, f)?), tag(recognize_one_stage(system, f)?)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (two_stage, one_stage) = pairs.into_iter().unzip();
    Ok(Predictions { two_stage, one_stage })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub confusion: ConfusionMatrix,
    pub accuracy: AccuracyTable,
}

impl StageReport {
    fn tally(predictions: &[Prediction], axis: Axis, labels: &[String]) -> Result<Self> {
        let (confusion, accuracy) = confusion_and_accuracy(predictions, axis, labels)?;
        Ok(Self { confusion, accuracy })
    }
}

pub const REPORT_VERSION: u32 = 1;

/// Which per-emotion table of a report to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    TwoStage,
    OneStage,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::TwoStage => "two-stage",
            Stage::OneStage => "one-stage",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub version: u32,
    pub classifier: ClassifierKind,
    pub seed: u64,
    pub emotions: Vec<Emotion>,
    pub speakers: Vec<String>,
    pub train_utterances: usize,
    pub test_utterances: usize,
    /// Stage one of the cascade, scored on speaker identity.
    pub speaker_identification: StageReport,
    pub two_stage: StageReport,
    pub one_stage: StageReport,
}

impl EvaluationReport {
    pub fn build(system: &TrainedSystem, train_utterances: usize, predictions: &Predictions) -> Result<Self> {
        let emotions: Vec<String> = system.emotions.iter().map(|e| e.as_str().to_string()).collect();
        let speakers = system.speakers();
        Ok(Self {
            version: REPORT_VERSION,
            classifier: system.kind,
            seed: system.seed,
            emotions: system.emotions.clone(),
            train_utterances,
            test_utterances: predictions.two_stage.len(),
            speaker_identification: StageReport::tally(&predictions.two_stage, Axis::Speaker, &speakers)?,
            two_stage: StageReport::tally(&predictions.two_stage, Axis::Emotion, &emotions)?,
            one_stage: StageReport::tally(&predictions.one_stage, Axis::Emotion, &emotions)?,
            speakers,
        })
    }

    pub fn stage(&self, stage: Stage) -> &StageReport {
        match stage {
            Stage::TwoStage => &self.two_stage,
            Stage::OneStage => &self.one_stage,
        }
    }

    /// Plain-text accuracy tables, one decimal place.
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "Classifier: {}  seed: {}  train utterances: {}  test utterances: {}\n",
            self.classifier, self.seed, self.train_utterances, self.test_utterances
        );
        for (title, stage) in [
            ("One-stage emotion recognition accuracy (%)", &self.one_stage),
            ("Two-stage emotion recognition accuracy (%)", &self.two_stage),
        ] {
            out.push('\n');
            out.push_str(&render_accuracy_table(title, &stage.accuracy));
            out.push_str(&render_confusion(&stage.confusion));
        }
        out.push_str(&format!(
            "\nAverage speaker identification accuracy in the first stage: {:.1}%\n",
            self.speaker_identification.accuracy.mean
        ));
        out
    }
}

pub fn render_accuracy_table(title: &str, table: &AccuracyTable) -> String {
    let width = table.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(7);
    let mut out = format!("{title}\n");
    for r in &table.rows {
        let cell = r.accuracy.map_or_else(|| "n/a".to_string(), |a| format!("{a:.1}"));
        out.push_str(&format!("  {:<width$}  {cell:>6}\n", r.label));
    }
    out.push_str(&format!("  {:<width$}  {:>6.1}\n", "average", table.mean));
    out
}

fn render_confusion(cm: &ConfusionMatrix) -> String {
    let width = cm.labels.iter().map(String::len).max().unwrap_or(0).max(5);
    let mut out = format!("  Confusion (rows true, columns predicted)\n  {:<width$}", "");
    for l in &cm.labels {
        out.push_str(&format!(" {l:>width$}"));
    }
    out.push('\n');
    for (l, row) in cm.labels.iter().zip(&cm.counts) {
        out.push_str(&format!("  {l:<width$}"));
        for c in row {
            out.push_str(&format!(" {c:>width$}"));
        }
        out.push('\n');
    }
    out
}
