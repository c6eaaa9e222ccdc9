//! Run configuration: one JSON document, overridable from the command line.

use std::path::{Path, PathBuf};

use cascade_ser_core::{ClassifierKind, MfccConfig, SystemConfig};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::models::read_json;

/// How the corpus is divided into training and test halves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// First half of the sentence ids for training, second half for testing.
    #[default]
    SentenceHalves,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Directory holding `manifest.jsonl` and the audio it references.
    pub corpus: PathBuf,
    /// Root for outputs; the directories below default to subdirectories of it.
    pub out: PathBuf,
    pub features_dir: Option<PathBuf>,
    pub models_dir: Option<PathBuf>,
    pub reports_dir: Option<PathBuf>,
    pub mfcc: MfccConfig,
    pub classifier: ClassifierKind,
    pub system: SystemConfig,
    pub split: SplitRule,
    pub seed: u64,
    /// Worker threads; 0 means one per core.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: PathBuf::from("corpus"),
            out: PathBuf::from("out"),
            features_dir: None,
            models_dir: None,
            reports_dir: None,
            mfcc: MfccConfig::default(),
            classifier: ClassifierKind::Hmm,
            system: SystemConfig::default(),
            split: SplitRule::default(),
            seed: 2019,
            jobs: 0,
        }
    }
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.corpus.join(MANIFEST_FILE)
    }

    pub fn features_dir(&self) -> PathBuf {
        self.features_dir.clone().unwrap_or_else(|| self.out.join("features"))
    }

    pub fn models_dir(&self) -> PathBuf {
        self.models_dir.clone().unwrap_or_else(|| self.out.join("models"))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.reports_dir.clone().unwrap_or_else(|| self.out.join("reports"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_documents_fill_in_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"classifier":"vq","system":{"vq":{"codebook_size":8}}}"#).unwrap();
        assert_eq!(c.classifier, ClassifierKind::Vq);
        assert_eq!(c.system.vq.codebook_size, 8);
        assert_eq!(c.system.hmm.state_count, 6);
        assert_eq!(c.features_dir(), Path::new("out/features"));
    }
}
