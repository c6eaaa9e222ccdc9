//! Versioned JSON model documents and the on-disk layout of a trained system.
//!
//! A system directory holds `index.json` plus one document per model:
//!
//! ```text
//! index.json
//! speaker/<speaker>.json
//! emotion/<speaker>/<emotion>.json
//! pooled/<emotion>.json
//! ```
//!
//! A one-vs-rest SVM covers a whole decision, so its family is a single
//! `svm.json` document instead of one file per label.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use cascade_ser_core::baselines::{SvmOvrModel, VqCodebook};
use cascade_ser_core::recognizer::ModelSet;
use cascade_ser_core::{ClassifierKind, Emotion, Gmm, HmmModel, TrainedSystem};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, json_err, Error, Result};

pub const MODEL_VERSION: u32 = 1;
pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureDocument {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl From<&Gmm> for MixtureDocument {
    fn from(g: &Gmm) -> Self {
        let p = g.params();
        Self { weights: p.weights, means: p.means, variances: p.variances }
    }
}

impl MixtureDocument {
    fn to_gmm(&self) -> Result<Gmm> {
        Ok(Gmm::new(self.weights.clone(), self.means.clone(), self.variances.clone())?)
    }
}

/// Body of a model document; `kind` is the serialized tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelBody {
    Hmm {
        state_count: usize,
        mixture_count: usize,
        dimension: usize,
        pi: Vec<f64>,
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        states: Vec<MixtureDocument>,
    },
    Gmm {
        mixture_count: usize,
        dimension: usize,
        #[serde(flatten)]
        mixture: MixtureDocument,
    },
    Vq {
        codebook_size: usize,
        dimension: usize,
        codewords: Vec<Vec<f64>>,
    },
    Svm {
        dimension: usize,
        labels: Vec<String>,
        weights: Vec<Vec<f64>>,
        biases: Vec<f64>,
        mean: Vec<f64>,
        scale: Vec<f64>,
    },
    /// A decision with one candidate, which always wins.
    Single {
        label: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    #[serde(flatten)]
    pub body: ModelBody,
}

impl ModelDocument {
    pub fn hmm(m: &HmmModel) -> Self {
        Self::new(ModelBody::Hmm {
            state_count: m.state_count(),
            mixture_count: m.mixture_count(),
            dimension: m.dim(),
            pi: m.initial().to_vec(),
            a: m.transitions().to_vec(),
            states: m.states().iter().map(MixtureDocument::from).collect(),
        })
    }

    pub fn gmm(g: &Gmm) -> Self {
        Self::new(ModelBody::Gmm { mixture_count: g.mixture_count(), dimension: g.dim(), mixture: g.into() })
    }

    pub fn vq(c: &VqCodebook) -> Self {
        Self::new(ModelBody::Vq { codebook_size: c.size(), dimension: c.dim(), codewords: c.codewords().to_vec() })
    }

    fn new(body: ModelBody) -> Self {
        Self { version: MODEL_VERSION, body }
    }

    fn check_version(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(invalid(format!("model document version {}, expected {MODEL_VERSION}", self.version)));
        }
        Ok(())
    }

    pub fn to_hmm(&self) -> Result<HmmModel> {
        self.check_version()?;
        let ModelBody::Hmm { state_count, mixture_count, dimension, pi, a, states } = &self.body else {
            return Err(invalid("expected an hmm document".into()));
        };
        let states = states.iter().map(MixtureDocument::to_gmm).collect::<Result<Vec<_>>>()?;
        let model = HmmModel::new(pi.clone(), a.clone(), states)?;
        if (model.state_count(), model.mixture_count(), model.dim()) != (*state_count, *mixture_count, *dimension) {
            return Err(invalid("declared state/mixture/dimension counts disagree with the parameters".into()));
        }
        Ok(model)
    }

    pub fn to_gmm(&self) -> Result<Gmm> {
        self.check_version()?;
        let ModelBody::Gmm { mixture_count, dimension, mixture } = &self.body else {
            return Err(invalid("expected a gmm document".into()));
        };
        let g = mixture.to_gmm()?;
        if (g.mixture_count(), g.dim()) != (*mixture_count, *dimension) {
            return Err(invalid("declared mixture/dimension counts disagree with the parameters".into()));
        }
        Ok(g)
    }

    pub fn to_vq(&self) -> Result<VqCodebook> {
        self.check_version()?;
        let ModelBody::Vq { codebook_size, dimension, codewords } = &self.body else {
            return Err(invalid("expected a vq document".into()));
        };
        let c = VqCodebook::new(codewords.clone())?;
        if (c.size(), c.dim()) != (*codebook_size, *dimension) {
            return Err(invalid("declared codebook size/dimension disagree with the codewords".into()));
        }
        Ok(c)
    }
}

fn invalid(reason: String) -> Error {
    Error::Core(cascade_ser_core::Error::Validation(reason))
}

/// Labels that can name a model in an index.
pub trait ModelLabel: Clone + Ord + Sized {
    fn key(&self) -> String;
    fn from_key(key: &str) -> Result<Self>;
}

impl ModelLabel for String {
    fn key(&self) -> String {
        self.clone()
    }

    fn from_key(key: &str) -> Result<Self> {
        Ok(key.to_string())
    }
}

impl ModelLabel for Emotion {
    fn key(&self) -> String {
        self.as_str().to_string()
    }

    fn from_key(key: &str) -> Result<Self> {
        Ok(key.parse()?)
    }
}

/// Where one model family lives, relative to the system directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case")]
pub enum FamilyIndex {
    PerLabel { files: BTreeMap<String, String> },
    Multiclass { file: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemIndex {
    pub version: u32,
    pub classifier: ClassifierKind,
    pub seed: u64,
    pub emotions: Vec<Emotion>,
    pub speakers: Vec<String>,
    pub speaker_models: FamilyIndex,
    pub emotion_models: BTreeMap<String, FamilyIndex>,
    pub pooled_emotion_models: FamilyIndex,
}

/// File stem for a label: the label itself when it is a plain name, else its position.
fn file_stem(label: &str, position: usize) -> String {
    let plain = !label.is_empty()
        && !label.starts_with('.')
        && label.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if plain {
        label.to_string()
    } else {
        format!("{position:03}")
    }
}

fn to_json<T: Serialize>(value: &T, path: &Path) -> Result<String> {
    Ok(serde_json::to_string_pretty(value).map_err(json_err(path))? + "\n")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, to_json(value, path)?).map_err(io_err(path))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}

fn write_family<L: ModelLabel>(root: &Path, rel: &str, set: &ModelSet<L>) -> Result<FamilyIndex> {
    let per_label = |docs: Vec<(String, ModelDocument)>| -> Result<FamilyIndex> {
        let mut files = BTreeMap::new();
        for (i, (label, doc)) in docs.into_iter().enumerate() {
            let file = format!("{rel}/{}.json", file_stem(&label, i));
            write_json(&root.join(&file), &doc)?;
            files.insert(label, file);
        }
        Ok(FamilyIndex::PerLabel { files })
    };
    let multiclass = |name: &str, doc: ModelDocument| -> Result<FamilyIndex> {
        let file = format!("{rel}/{name}.json");
        write_json(&root.join(&file), &doc)?;
        Ok(FamilyIndex::Multiclass { file })
    };
    match set {
        ModelSet::Hmm(v) => per_label(v.iter().map(|(l, m)| (l.key(), ModelDocument::hmm(m))).collect()),
        ModelSet::Gmm(v) => per_label(v.iter().map(|(l, m)| (l.key(), ModelDocument::gmm(m))).collect()),
        ModelSet::Vq(v) => per_label(v.iter().map(|(l, m)| (l.key(), ModelDocument::vq(m))).collect()),
        ModelSet::Svm(m) => multiclass(
            "svm",
            ModelDocument::new(ModelBody::Svm {
                dimension: m.dim(),
                labels: m.labels.iter().map(ModelLabel::key).collect(),
                weights: m.weights.clone(),
                biases: m.biases.clone(),
                mean: m.mean.clone(),
                scale: m.scale.clone(),
            }),
        ),
        ModelSet::Single(l) => multiclass("single", ModelDocument::new(ModelBody::Single { label: l.key() })),
    }
}

fn read_family<L: ModelLabel>(root: &Path, kind: ClassifierKind, family: &FamilyIndex) -> Result<ModelSet<L>> {
    match family {
        FamilyIndex::PerLabel { files } => {
            // The index is keyed by label text; models are kept in label order.
            let mut labelled = files
                .iter()
                .map(|(k, f)| Ok((L::from_key(k)?, read_json::<ModelDocument>(&root.join(f))?)))
                .collect::<Result<Vec<_>>>()?;
            labelled.sort_by(|a, b| a.0.cmp(&b.0));
            Ok(match kind {
                ClassifierKind::Hmm => {
                    ModelSet::Hmm(labelled.into_iter().map(|(l, d)| Ok((l, d.to_hmm()?))).collect::<Result<_>>()?)
                }
                ClassifierKind::Gmm => {
                    ModelSet::Gmm(labelled.into_iter().map(|(l, d)| Ok((l, d.to_gmm()?))).collect::<Result<_>>()?)
                }
                ClassifierKind::Vq => {
                    ModelSet::Vq(labelled.into_iter().map(|(l, d)| Ok((l, d.to_vq()?))).collect::<Result<_>>()?)
                }
                ClassifierKind::Svm => {
                    return Err(invalid("svm families are stored as one multiclass document".into()))
                }
            })
        }
        FamilyIndex::Multiclass { file } => {
            let doc: ModelDocument = read_json(&root.join(file))?;
            doc.check_version()?;
            match doc.body {
                ModelBody::Single { label } => Ok(ModelSet::Single(L::from_key(&label)?)),
                ModelBody::Svm { dimension, labels, weights, biases, mean, scale } if kind == ClassifierKind::Svm => {
                    let labels = labels.iter().map(|k| L::from_key(k)).collect::<Result<Vec<_>>>()?;
                    let model = SvmOvrModel { labels, weights, biases, mean, scale };
                    model.validate()?;
                    if model.dim() != dimension {
                        return Err(invalid("declared svm dimension disagrees with the weights".into()));
                    }
                    Ok(ModelSet::Svm(model))
                }
                _ => Err(invalid(format!("{file} does not hold a {kind} model set"))),
            }
        }
    }
}

/// Writes `system` under `dir`, replacing any earlier system there.
pub fn save_system(dir: &Path, system: &TrainedSystem) -> Result<()> {
    for sub in ["speaker", "emotion", "pooled"] {
        let p = dir.join(sub);
        if p.exists() {
            fs::remove_dir_all(&p).map_err(io_err(&p))?;
        }
    }
    let speakers = system.speakers();
    let emotion_models = system
        .emotion_models_by_speaker
        .iter()
        .enumerate()
        .map(|(i, (s, set))| Ok((s.clone(), write_family(dir, &format!("emotion/{}", file_stem(s, i)), set)?)))
        .collect::<Result<_>>()?;
    let index = SystemIndex {
        version: MODEL_VERSION,
        classifier: system.kind,
        seed: system.seed,
        emotions: system.emotions.clone(),
        speaker_models: write_family(dir, "speaker", &system.speaker_models)?,
        emotion_models,
        pooled_emotion_models: write_family(dir, "pooled", &system.pooled_emotion_models)?,
        speakers,
    };
    write_json(&dir.join(INDEX_FILE), &index)
}

pub fn load_system(dir: &Path) -> Result<TrainedSystem> {
    let index: SystemIndex = read_json(&dir.join(INDEX_FILE))?;
    if index.version != MODEL_VERSION {
        return Err(invalid(format!("system index version {}, expected {MODEL_VERSION}", index.version)));
    }
    let kind = index.classifier;
    let emotion_models =
        index.emotion_models.iter().map(|(s, f)| Ok((s.clone(), read_family(dir, kind, f)?))).collect::<Result<_>>()?;
    let system = TrainedSystem::from_parts(
        kind,
        index.seed,
        index.emotions.clone(),
        read_family(dir, kind, &index.speaker_models)?,
        emotion_models,
        read_family(dir, kind, &index.pooled_emotion_models)?,
    )?;
    if system.speakers() != index.speakers {
        return Err(invalid("index speaker list disagrees with the speaker models".into()));
    }
    Ok(system)
}

/// System directory for `kind` under a models root.
pub fn system_dir(models_root: &Path, kind: ClassifierKind) -> PathBuf {
    models_root.join(kind.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hmm_document_round_trips_exactly() {
        let g = Gmm::new(
            vec![0.25, 0.75],
            vec![vec![0.1, 1.0 / 3.0], vec![-2.0, 1e-17]],
            vec![vec![1.0, 2.0], vec![0.5, 0.3]],
        )
        .unwrap();
        let m = HmmModel::new(vec![1.0, 0.0], vec![vec![0.6, 0.4], vec![0.0, 1.0]], vec![g.clone(), g]).unwrap();
        let doc = ModelDocument::hmm(&m);
        let text = serde_json::to_string(&doc).unwrap();
        assert!(text.starts_with(r#"{"version":1,"kind":"hmm","state_count":2"#), "{text}");
        assert!(text.contains(r#""A":[[0.6,0.4]"#));
        let back: ModelDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_hmm().unwrap(), m);
    }

    #[test]
    fn mismatched_counts_are_rejected() {
        let g = Gmm::single(vec![0.0], vec![1.0]).unwrap();
        let mut doc = ModelDocument::gmm(&g);
        if let ModelBody::Gmm { dimension, .. } = &mut doc.body {
            *dimension = 3;
        }
        assert!(doc.to_gmm().is_err());
        let doc = ModelDocument { version: 2, ..ModelDocument::gmm(&g) };
        assert!(doc.to_gmm().is_err());
        assert!(ModelDocument::gmm(&g).to_hmm().is_err());
    }

    #[test]
    fn odd_labels_get_positional_file_names() {
        assert_eq!(file_stem("s01", 4), "s01");
        assert_eq!(file_stem("../x", 4), "004");
        assert_eq!(file_stem("a b", 12), "012");
    }
}
