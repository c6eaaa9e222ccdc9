//! Audio buffers, corpus manifests and the half/half sentence split.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Normalized mono audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(contract!("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !(-1.0..=1.0).contains(s)) {
            return Err(contract!("sample {i} = {} outside [-1, 1]", samples[i]));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Multiplies every sample by `gain`, rejecting results outside [-1, 1].
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(self.samples.iter().map(|s| s * gain).collect(), self.sample_rate)
    }
}

/// The six emotion categories. Declaration order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Neutral,
    Happy,
    Sad,
    Disgust,
    Angry,
    Fear,
}

impl Emotion {
    pub const ALL: [Emotion; 6] =
        [Emotion::Neutral, Emotion::Happy, Emotion::Sad, Emotion::Disgust, Emotion::Angry, Emotion::Fear];

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Neutral => "neutral",
            Emotion::Happy => "happy",
            Emotion::Sad => "sad",
            Emotion::Disgust => "disgust",
            Emotion::Angry => "angry",
            Emotion::Fear => "fear",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Emotion::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Validation(alloc::format!("unknown emotion label {s:?}")))
    }
}

/// One utterance of a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub path: String,
    pub speaker_id: String,
    pub emotion: Emotion,
    pub sentence_id: u32,
    pub repetition: u32,
}

impl UtteranceRecord {
    pub fn key(&self) -> (&str, Emotion, u32, u32) {
        (&self.speaker_id, self.emotion, self.sentence_id, self.repetition)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorpusManifest {
    records: Vec<UtteranceRecord>,
    sentence_count: u32,
    repetition_count: u32,
}

impl CorpusManifest {
    /// Builds a manifest whose sentence and repetition counts are the largest
    /// ids seen in `records`.
    pub fn from_records(records: Vec<UtteranceRecord>) -> Result<Self> {
        let sentence_count = records.iter().map(|r| r.sentence_id).max().unwrap_or(0);
        let repetition_count = records.iter().map(|r| r.repetition).max().unwrap_or(0);
        Self::with_counts(records, sentence_count, repetition_count)
    }

    pub fn with_counts(records: Vec<UtteranceRecord>, sentence_count: u32, repetition_count: u32) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (line, r) in records.iter().enumerate() {
            if r.sentence_id == 0 || r.sentence_id > sentence_count {
                return Err(Error::Validation(alloc::format!(
                    "record {}: sentence_id {} outside 1..={sentence_count}",
                    line + 1,
                    r.sentence_id
                )));
            }
            if r.repetition == 0 || r.repetition > repetition_count {
                return Err(Error::Validation(alloc::format!(
                    "record {}: repetition {} outside 1..={repetition_count}",
                    line + 1,
                    r.repetition
                )));
            }
            if !seen.insert(r.key()) {
                return Err(Error::Validation(alloc::format!(
                    "record {}: duplicate key (speaker {:?}, {}, sentence {}, repetition {})",
                    line + 1,
                    r.speaker_id,
                    r.emotion,
                    r.sentence_id,
                    r.repetition
                )));
            }
        }
        Ok(Self { records, sentence_count, repetition_count })
    }

    pub fn records(&self) -> &[UtteranceRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<UtteranceRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn sentence_count(&self) -> u32 {
        self.sentence_count
    }

    pub fn repetition_count(&self) -> u32 {
        self.repetition_count
    }

    /// Sorted, de-duplicated speaker ids.
    pub fn speakers(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.speaker_id.as_str()).collect();
        set.into_iter().map(ToString::to_string).collect()
    }

    /// Emotions present, in canonical order.
    pub fn emotions(&self) -> Vec<Emotion> {
        let set: BTreeSet<Emotion> = self.records.iter().map(|r| r.emotion).collect();
        set.into_iter().collect()
    }
}

/// Splits by sentence: the first half of the sentence ids train, the second half test.
///
/// Sentence ids `1..=S/2` go to training and `S/2+1..=S` to testing, so
/// training and test utterances never share text.
pub fn split_paper_protocol(manifest: &CorpusManifest) -> Result<(CorpusManifest, CorpusManifest)> {
    let s = manifest.sentence_count;
    if s < 2 || !s.is_multiple_of(2) {
        return Err(Error::Protocol(alloc::format!("sentence count must be even and at least 2, got {s}")));
    }
    let half = s / 2;
    let (train, test): (Vec<_>, Vec<_>) = manifest.records.iter().cloned().partition(|r| r.sentence_id <= half);
    let reps = manifest.repetition_count;
    Ok((
        CorpusManifest { records: train, sentence_count: s, repetition_count: reps },
        CorpusManifest { records: test, sentence_count: s, repetition_count: reps },
    ))
}

#[cfg(test)]
pub(crate) fn grid_manifest(speakers: u32, emotions: &[Emotion], sentences: u32, reps: u32) -> CorpusManifest {
    let mut records = Vec::new();
    for s in 1..=speakers {
        for &e in emotions {
            for sentence_id in 1..=sentences {
                for repetition in 1..=reps {
                    let speaker_id = alloc::format!("s{s:02}");
                    records.push(UtteranceRecord {
                        path: alloc::format!("{speaker_id}/{e}/{sentence_id}_{repetition}.wav"),
                        speaker_id,
                        emotion: e,
                        sentence_id,
                        repetition,
                    });
                }
            }
        }
    }
    CorpusManifest::with_counts(records, sentences, reps).unwrap()
}
