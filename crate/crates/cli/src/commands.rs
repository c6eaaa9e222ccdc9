//! The `generate`, `featurize`, `train`, `evaluate` and `compare` commands.

use std::fs;
use std::path::{Path, PathBuf};

use cascade_ser_core::stats::{compare_systems, SdConvention, TTestResult};
use cascade_ser_core::synth::{corpus_manifest, synthesize_utterance, voice_profiles, SynthSpec};
use cascade_ser_core::{
    split_paper_protocol, ClassifierKind, CorpusManifest, FeatureSequence, MfccConfig, Prediction, SystemConfig,
    TrainedSystem,
};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SplitRule, MANIFEST_FILE};
use crate::error::{io_err, json_err, Error, Result};
use crate::features::{featurize, load_or_featurize, write_cache};
use crate::manifest::{load_manifest, write_manifest};
use crate::models::{load_system, read_json, save_system, system_dir};
use crate::pipeline::{predict, train_system_parallel, EvaluationReport, Stage};
use crate::wav::write_wav;

pub const SPEC_FILE: &str = "synth_spec.json";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";
const PROVENANCE_FILE: &str = "training.json";

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn pretty<T: Serialize>(value: &T, path: &Path) -> Result<String> {
    Ok(serde_json::to_string_pretty(value).map_err(json_err(path))? + "\n")
}

/// Writes the synthetic corpus described by `spec` into `out_dir` and
/// returns the manifest path.
pub fn generate(spec: &SynthSpec, out_dir: &Path) -> Result<PathBuf> {
    let profiles = voice_profiles(spec)?;
    let manifest = corpus_manifest(spec)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    manifest.records().par_iter().try_for_each(|r| {
        let profile = profiles.iter().find(|p| p.speaker_id == r.speaker_id).expect("a profile per manifest speaker");
        let clip = synthesize_utterance(spec, profile, r.emotion, r.sentence_id, r.repetition)?;
        let path = out_dir.join(&r.path);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        write_wav(&path, &clip)
    })?;
    let spec_path = out_dir.join(SPEC_FILE);
    write_text(&spec_path, &pretty(spec, &spec_path)?)?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    write_manifest(&manifest_path, &manifest)?;
    info!("wrote {} utterances to {}", manifest.len(), out_dir.display());
    Ok(manifest_path)
}

fn split(config: &RunConfig, manifest: &CorpusManifest) -> Result<(CorpusManifest, CorpusManifest)> {
    match config.split {
        SplitRule::SentenceHalves => Ok(split_paper_protocol(manifest)?),
    }
}

/// Extracts features for the whole corpus into the cache directory.
pub fn featurize_corpus(config: &RunConfig) -> Result<usize> {
    let manifest = load_manifest(&config.manifest_path())?;
    let features = featurize(&manifest, &config.corpus, &config.mfcc)?;
    write_cache(&config.features_dir(), &manifest, &config.mfcc, &features)?;
    info!("cached features for {} utterances in {}", features.len(), config.features_dir().display());
    Ok(features.len())
}

fn features_for(config: &RunConfig, manifest: &CorpusManifest) -> Result<Vec<FeatureSequence>> {
    load_or_featurize(manifest, &config.corpus, &config.features_dir(), &config.mfcc)
}

/// Settings a saved system was trained with; a mismatch means retraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Provenance {
    classifier: ClassifierKind,
    seed: u64,
    mfcc: MfccConfig,
    system: SystemConfig,
    split: SplitRule,
    train_utterances: usize,
}

impl Provenance {
    fn of(config: &RunConfig, train_utterances: usize) -> Self {
        Self {
            classifier: config.classifier,
            seed: config.seed,
            mfcc: config.mfcc.clone(),
            system: config.system.clone(),
            split: config.split,
            train_utterances,
        }
    }
}

/// Trains the configured classifier on the training half and saves it.
pub fn train(config: &RunConfig) -> Result<TrainedSystem> {
    let manifest = load_manifest(&config.manifest_path())?;
    let (train, _) = split(config, &manifest)?;
    let features = features_for(config, &train)?;
    info!("training {} system on {} utterances", config.classifier, train.len());
    let system = train_system_parallel(&train, &features, config.classifier, &config.system, config.seed)?;
    let dir = system_dir(&config.models_dir(), config.classifier);
    save_system(&dir, &system)?;
    let path = dir.join(PROVENANCE_FILE);
    write_text(&path, &pretty(&Provenance::of(config, train.len()), &path)?)?;
    info!("saved models to {}", dir.display());
    Ok(system)
}

/// A saved system matching `config`, if there is one.
fn saved_system(config: &RunConfig, train_utterances: usize) -> Result<Option<TrainedSystem>> {
    let dir = system_dir(&config.models_dir(), config.classifier);
    let Ok(saved) = read_json::<Provenance>(&dir.join(PROVENANCE_FILE)) else {
        return Ok(None);
    };
    if saved != Provenance::of(config, train_utterances) {
        info!("models in {} were trained with other settings; retraining", dir.display());
        return Ok(None);
    }
    load_system(&dir).map(Some)
}

/// Paths written by [`evaluate`].
#[derive(Debug, Clone)]
pub struct EvaluationOutputs {
    pub report: EvaluationReport,
    pub json: PathBuf,
    pub text: PathBuf,
}

pub fn evaluate(config: &RunConfig) -> Result<EvaluationOutputs> {
    let manifest = load_manifest(&config.manifest_path())?;
    let (train_half, test) = split(config, &manifest)?;
    let system = match saved_system(config, train_half.len())? {
        Some(s) => {
            info!("using saved {} models", config.classifier);
            s
        }
        None => train(config)?,
    };
    let features = features_for(config, &test)?;
    info!("recognizing {} test utterances", test.len());
    let predictions = predict(&system, &test, &features)?;
    let report = EvaluationReport::build(&system, train_half.len(), &predictions)?;

    let dir = config.reports_dir().join(config.classifier.as_str());
    let json = dir.join(REPORT_FILE);
    write_text(&json, &pretty(&report, &json)?)?;
    let text = dir.join(REPORT_TEXT_FILE);
    write_text(&text, &report.render_text())?;
    write_predictions(&dir.join("predictions_two_stage.jsonl"), &predictions.two_stage)?;
    write_predictions(&dir.join("predictions_one_stage.jsonl"), &predictions.one_stage)?;
    info!("wrote {}", json.display());
    Ok(EvaluationOutputs { report, json, text })
}

pub fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    let mut out = String::new();
    for p in predictions {
        out.push_str(&serde_json::to_string(p).map_err(json_err(path))?);
        out.push('\n');
    }
    write_text(path, &out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparedSystem {
    pub report: PathBuf,
    pub classifier: ClassifierKind,
    pub seed: u64,
    pub stage: Stage,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub a: ComparedSystem,
    pub b: ComparedSystem,
    pub test: TTestResult,
    pub critical_value: f64,
    pub significant: bool,
    pub verdict: String,
}

impl ComparisonReport {
    pub fn render_text(&self) -> String {
        let side = |s: &ComparedSystem| format!("{} {} ({})", s.classifier, s.stage.as_str(), s.report.display());
        format!(
            "A: {}  mean {:.1}%\nB: {}  mean {:.1}%\nt = {:.4}  pooled SD = {:.4}  critical value = {}\nA vs B: {}\n",
            side(&self.a),
            self.a.mean_accuracy,
            side(&self.b),
            self.b.mean_accuracy,
            self.test.t_value,
            self.test.sd_pooled,
            self.critical_value,
            self.verdict
        )
    }
}

/// Student's t between the per-emotion accuracies of two reports (A minus B).
pub fn compare(
    report_a: &Path,
    stage_a: Stage,
    report_b: &Path,
    stage_b: Stage,
    convention: SdConvention,
) -> Result<ComparisonReport> {
    let a: EvaluationReport = read_json(report_a)?;
    let b: EvaluationReport = read_json(report_b)?;
    let (ta, tb) = (&a.stage(stage_a).accuracy, &b.stage(stage_b).accuracy);
    if ta.labels() != tb.labels() {
        return Err(Error::Usage(format!("emotion label sets differ: {:?} vs {:?}", ta.labels(), tb.labels())));
    }
    let c = compare_systems(ta, tb, convention)?;
    let side = |path: &Path, r: &EvaluationReport, stage: Stage| ComparedSystem {
        report: path.to_path_buf(),
        classifier: r.classifier,
        seed: r.seed,
        stage,
        mean_accuracy: r.stage(stage).accuracy.mean,
    };
    Ok(ComparisonReport {
        a: side(report_a, &a, stage_a),
        b: side(report_b, &b, stage_b),
        verdict: if c.significant { "significant" } else { "not significant" }.to_string(),
        significant: c.significant,
        critical_value: c.critical_value,
        test: c.test,
    })
}

pub fn write_comparison(path: &Path, comparison: &ComparisonReport) -> Result<()> {
    write_text(path, &pretty(comparison, path)?)
}
