//! Acceptance checks, one PASS/FAIL line per criterion.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cascade_ser::commands::{compare, evaluate, featurize_corpus, generate, train, REPORT_FILE};
use cascade_ser::pipeline::{EvaluationReport, Stage};
use cascade_ser::RunConfig;
use cascade_ser_core::frontend::{append_deltas, dct_matrix, MfccConfig, MfccExtractor};
use cascade_ser_core::gmm::{train_gmm, GmmTrainConfig};
use cascade_ser_core::hmm::{forward_log_likelihood, train_hmm, HmmConfig};
use cascade_ser_core::recognizer::{train_system, ClassifierKind, Prediction, SystemConfig, TrainingGroups};
use cascade_ser_core::stats::{compare_systems, confusion_and_accuracy, t_statistic, Axis, SdConvention};
use cascade_ser_core::synth::SynthSpec;
use cascade_ser_core::{
    split_paper_protocol, AudioClip, CorpusManifest, Emotion, FeatureSequence, Gmm, HmmModel, UtteranceRecord,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-emotion accuracies of the one-stage and two-stage reference tables.
const ONE_STAGE_TABLE: [f64; 6] = [84.2, 63.4, 61.5, 55.9, 40.2, 63.2];
const TWO_STAGE_TABLE: [f64; 6] = [90.4, 70.1, 66.7, 61.8, 48.6, 67.6];
const PRINTED_T: f64 = 1.798;

/// Independently computed reference values for the tables above.
const ORACLE_SD_X: f64 = 5.542301968596723;
const ORACLE_SD_Y: f64 = 5.793041803175025;
const ORACLE_SD_POOLED: f64 = 5.669058318823526;
const ORACLE_T_STANDARD_ERROR: f64 = 1.0818963200587024;
const ORACLE_T_SAMPLE_SD: f64 = 0.4416823231231097;

/// Regression values of the pinned HMM run on the default synthetic corpus.
const PINNED_HMM_TWO_STAGE_MEAN: f64 = 55.169753086419746;
const PINNED_HMM_ONE_STAGE_MEAN: f64 = 51.15740740740741;

const CHANCE: f64 = 100.0 / 6.0;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1.0)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn stochastic(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

fn random_hmm(rng: &mut ChaCha8Rng, n: usize, m: usize, d: usize) -> HmmModel {
    let states = (0..n)
        .map(|_| {
            let means = (0..m).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
            let vars = (0..m).map(|_| (0..d).map(|_| rng.gen_range(0.2..3.0)).collect()).collect();
            Gmm::new(stochastic(rng, m), means, vars).unwrap()
        })
        .collect();
    let a = (0..n).map(|_| stochastic(rng, n)).collect();
    HmmModel::new(stochastic(rng, n), a, states).unwrap()
}

/// Sums the joint probability of every state path.
fn enumerate_paths(model: &HmmModel, obs: &FeatureSequence) -> f64 {
    let n = model.state_count();
    let t_len = obs.frame_count();
    let emit: Vec<Vec<f64>> = obs.frames().map(|o| model.states().iter().map(|g| g.log_density(o)).collect()).collect();
    let mut terms = Vec::with_capacity(n.pow(t_len as u32));
    let mut path = vec![0usize; t_len];
    loop {
        let mut lp = model.initial()[path[0]].ln() + emit[0][path[0]];
        for t in 1..t_len {
            lp += model.transitions()[path[t - 1]][path[t]].ln() + emit[t][path[t]];
        }
        terms.push(lp);
        let mut k = 0;
        while k < t_len && path[k] == n - 1 {
            path[k] = 0;
            k += 1;
        }
        if k == t_len {
            break;
        }
        path[k] += 1;
    }
    log_sum_exp(&terms)
}

fn forward_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let trials = 200;
    let mut worst: f64 = 0.0;
    for i in 0..trials {
        let (n, m, d, t) = (rng.gen_range(1..=3), rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=6));
        let model = random_hmm(&mut rng, n, m, d);
        let rows: Vec<Vec<f64>> = (0..t).map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let obs = FeatureSequence::from_rows(&rows).unwrap();
        let fast = forward_log_likelihood(&model, &obs).map_err(|e| e.to_string())?;
        let slow = enumerate_paths(&model, &obs);
        let rel = (fast - slow).abs() / slow.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        ensure!(rel <= 1e-8, "trial {i}: forward {fast} vs enumeration {slow} (N={n} M={m} D={d} T={t})");
    }
    Ok(format!("{trials} random models, worst relative error {worst:.1e}"))
}

fn clustered_frames(rng: &mut ChaCha8Rng, count: usize, d: usize) -> Vec<Vec<f64>> {
    let centers: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| rng.gen_range(-4.0..4.0)).collect()).collect();
    (0..count).map(|i| centers[(i / 7) % 3].iter().map(|c| c + rng.gen_range(-1.0..1.0)).collect()).collect()
}

fn training_monotone() -> Outcome {
    let slack = 1e-6;
    let datasets = 20;
    let mut steps = 0;
    for seed in 0..datasets {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let d = rng.gen_range(1..=3);
        let sequences: Vec<FeatureSequence> = (0..4)
            .map(|_| {
                let t = rng.gen_range(12..30);
                FeatureSequence::from_rows(&clustered_frames(&mut rng, t, d)).unwrap()
            })
            .collect();
        let cfg = HmmConfig { state_count: 3, mixture_count: 2, max_iters: 15, rel_tol: 0.0 };
        let (_, report) = train_hmm(&sequences, &cfg, seed).map_err(|e| e.to_string())?;
        ensure!(report.history.len() >= 2, "HMM dataset {seed}: no re-estimation recorded");
        ensure!(report.is_monotone(slack), "HMM dataset {seed}: history {:?}", report.history);
        steps += report.history.len() - 1;

        let frames = clustered_frames(&mut rng, 80, d);
        let refs: Vec<&[f64]> = frames.iter().map(Vec::as_slice).collect();
        let cfg = GmmTrainConfig { mixture_count: 3, max_iters: 15, rel_tol: 0.0 };
        let (_, report) = train_gmm(&refs, &cfg, seed).map_err(|e| e.to_string())?;
        ensure!(report.history.len() >= 2, "GMM dataset {seed}: no re-estimation recorded");
        ensure!(report.is_monotone(slack), "GMM dataset {seed}: history {:?}", report.history);
        steps += report.history.len() - 1;
    }
    Ok(format!("{datasets} HMM and {datasets} GMM datasets, {steps} non-decreasing steps"))
}

fn frontend_invariants() -> Outcome {
    let dct = dct_matrix(26);
    for i in 0..26 {
        for j in 0..26 {
            let dot: f64 = (0..26).map(|k| dct[i][k] * dct[j][k]).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            ensure!((dot - want).abs() <= 1e-10, "DCT rows {i},{j}: dot {dot}");
        }
    }

    let constant = FeatureSequence::from_rows(&vec![vec![1.5, -2.0, 0.25]; 12]).unwrap();
    let with_deltas = append_deltas(&constant, 2).map_err(|e| e.to_string())?;
    for frame in with_deltas.frames() {
        ensure!(frame[3..].iter().all(|v| v.abs() < 1e-12), "deltas of a constant: {frame:?}");
    }

    let sr = 16_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples: Vec<f64> = (0..8_000).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let clip = AudioClip::new(samples, sr).unwrap();
    let extractor = MfccExtractor::new(MfccConfig::default(), sr).map_err(|e| e.to_string())?;
    let base = extractor.static_mfcc(&clip).map_err(|e| e.to_string())?;
    for gain in [0.1, 3.0] {
        let scaled = extractor.static_mfcc(&clip.scaled(gain).unwrap()).map_err(|e| e.to_string())?;
        let diff = base.as_slice().iter().zip(scaled.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure!(diff <= 1e-8, "gain {gain}: static MFCC moved by {diff:e}");
    }

    let bank = extractor.filterbank();
    for j in 0..bank.len() {
        let f = bank.center_hz(j);
        let tone: Vec<f64> =
            (0..4_000).map(|n| 0.5 * (2.0 * std::f64::consts::PI * f * n as f64 / sr as f64).sin()).collect();
        let energies = extractor.log_mel_energies(&AudioClip::new(tone, sr).unwrap()).map_err(|e| e.to_string())?;
        let mid = &energies[energies.len() / 2];
        let peak = (0..mid.len()).fold(0, |best, k| if mid[k] > mid[best] { k } else { best });
        ensure!(peak == j, "tone at {f:.1} Hz peaks in filter {peak}, expected {j}");
    }
    Ok(format!("DCT orthonormal, constant deltas zero, gain invariant, {} tone peaks", bank.len()))
}

fn predictions_for(table: &[f64; 6]) -> Vec<Prediction> {
    let mut out = Vec::new();
    for (i, acc) in table.iter().enumerate() {
        let truth = Emotion::ALL[i];
        let wrong = Emotion::ALL[(i + 1) % 6];
        let correct = (acc * 10.0).round() as usize;
        for k in 0..1000 {
            out.push(Prediction {
                utterance: None,
                true_speaker: None,
                predicted_speaker: None,
                true_emotion: Some(truth),
                predicted_emotion: if k < correct { truth } else { wrong },
                speaker_scores: Default::default(),
                emotion_scores: Default::default(),
            });
        }
    }
    out
}

fn table_statistics() -> Outcome {
    let labels: Vec<String> = Emotion::ALL.iter().map(|e| e.to_string()).collect();
    let (_, one) = confusion_and_accuracy(&predictions_for(&ONE_STAGE_TABLE), Axis::Emotion, &labels)
        .map_err(|e| e.to_string())?;
    let (_, two) = confusion_and_accuracy(&predictions_for(&TWO_STAGE_TABLE), Axis::Emotion, &labels)
        .map_err(|e| e.to_string())?;
    ensure!(close(one.mean, 61.4, 1e-12), "one-stage mean {}", one.mean);
    ensure!((two.mean * 10.0).round() / 10.0 == 67.5, "two-stage mean {}", two.mean);

    let se = t_statistic(&TWO_STAGE_TABLE, &ONE_STAGE_TABLE, SdConvention::StandardError).map_err(|e| e.to_string())?;
    for (name, got, want) in [
        ("sd_x", se.sd_x, ORACLE_SD_X),
        ("sd_y", se.sd_y, ORACLE_SD_Y),
        ("pooled sd", se.sd_pooled, ORACLE_SD_POOLED),
        ("t", se.t_value, ORACLE_T_STANDARD_ERROR),
    ] {
        ensure!(close(got, want, 1e-9), "{name}: {got} vs oracle {want}");
    }
    let sample = t_statistic(&TWO_STAGE_TABLE, &ONE_STAGE_TABLE, SdConvention::SampleSd).map_err(|e| e.to_string())?;
    ensure!(close(sample.t_value, ORACLE_T_SAMPLE_SD, 1e-9), "sample-SD t {}", sample.t_value);

    let c = compare_systems(&two, &one, SdConvention::StandardError).map_err(|e| e.to_string())?;
    ensure!(close(c.test.t_value, ORACLE_T_STANDARD_ERROR, 1e-9), "t from tables {}", c.test.t_value);
    ensure!(!c.significant, "tables compare as significant");
    ensure!(
        (se.t_value - PRINTED_T).abs() > 0.1 && (sample.t_value - PRINTED_T).abs() > 0.1,
        "t unexpectedly matches the printed {PRINTED_T}"
    );
    Ok(format!(
        "means {:.1} / {:.1}, t = {:.4} (standard error) or {:.4} (sample SD), printed {PRINTED_T} not reproduced",
        one.mean, two.mean, se.t_value, sample.t_value
    ))
}

/// A generated default corpus with its feature cache.
struct Workspace {
    _dir: tempfile::TempDir,
    corpus: PathBuf,
    out: PathBuf,
}

impl Workspace {
    fn create() -> Result<Self, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let corpus = dir.path().join("corpus");
        let out = dir.path().join("out");
        generate(&SynthSpec::default(), &corpus).map_err(|e| e.to_string())?;
        featurize_corpus(&config(&corpus, &out, ClassifierKind::Hmm)).map_err(|e| e.to_string())?;
        Ok(Self { _dir: dir, corpus, out })
    }

    fn config(&self, kind: ClassifierKind) -> RunConfig {
        config(&self.corpus, &self.out, kind)
    }

    fn report_path(&self, kind: ClassifierKind) -> PathBuf {
        self.out.join("reports").join(kind.as_str()).join(REPORT_FILE)
    }
}

fn config(corpus: &Path, out: &Path, kind: ClassifierKind) -> RunConfig {
    RunConfig { corpus: corpus.to_path_buf(), out: out.to_path_buf(), classifier: kind, ..RunConfig::default() }
}

fn row(report: &EvaluationReport, stage: Stage) -> Vec<(String, f64)> {
    report.stage(stage).accuracy.rows.iter().map(|r| (r.label.clone(), r.accuracy.unwrap_or(f64::NAN))).collect()
}

fn cascade_trend(ws: &mut Option<Workspace>) -> Outcome {
    *ws = Some(Workspace::create()?);
    let ws = ws.as_ref().unwrap();
    let cfg = ws.config(ClassifierKind::Hmm);
    train(&cfg).map_err(|e| e.to_string())?;
    let report = evaluate(&cfg).map_err(|e| e.to_string())?.report;
    let two = report.two_stage.accuracy.mean;
    let one = report.one_stage.accuracy.mean;
    let rows = row(&report, Stage::TwoStage);
    let best = report.two_stage.accuracy.best_label().unwrap_or("").to_string();
    let summary = format!("two-stage {two:.2}% vs one-stage {one:.2}%, two-stage rows {rows:?}");
    ensure!(two >= one, "two-stage below one-stage: {summary}");
    ensure!(one > CHANCE && two > CHANCE, "at or below chance: {summary}");
    ensure!(best == Emotion::Neutral.as_str(), "best two-stage row is {best}: {summary}");
    ensure!(
        close(two, PINNED_HMM_TWO_STAGE_MEAN, 1e-9) && close(one, PINNED_HMM_ONE_STAGE_MEAN, 1e-9),
        "pinned means {PINNED_HMM_TWO_STAGE_MEAN} / {PINNED_HMM_ONE_STAGE_MEAN} not reproduced: two {two:?} one {one:?}"
    );
    Ok(summary)
}

fn baselines(ws: &mut Option<Workspace>) -> Outcome {
    let ws = ws.as_ref().ok_or("no generated corpus")?;
    let mut parts = Vec::new();
    for kind in [ClassifierKind::Gmm, ClassifierKind::Svm, ClassifierKind::Vq] {
        let report = evaluate(&ws.config(kind)).map_err(|e| e.to_string())?.report;
        let mean = report.one_stage.accuracy.mean;
        ensure!(mean > 2.0 * CHANCE, "{kind} one-stage mean {mean:.2}% is not above twice chance");
        parts.push(format!("{kind} {mean:.1}%"));
    }
    let pairs = [
        (ClassifierKind::Hmm, Stage::TwoStage, ClassifierKind::Hmm, Stage::OneStage),
        (ClassifierKind::Vq, Stage::OneStage, ClassifierKind::Gmm, Stage::OneStage),
        (ClassifierKind::Svm, Stage::TwoStage, ClassifierKind::Gmm, Stage::TwoStage),
    ];
    for (ka, sa, kb, sb) in pairs {
        let c = compare(&ws.report_path(ka), sa, &ws.report_path(kb), sb, SdConvention::StandardError)
            .map_err(|e| e.to_string())?;
        ensure!(c.test.t_value.is_finite(), "{ka}/{kb}: t = {}", c.test.t_value);
        ensure!(
            c.verdict == if c.significant { "significant" } else { "not significant" },
            "{ka}/{kb}: verdict {:?}",
            c.verdict
        );
        parts.push(format!("{ka} {} vs {kb} {}: t={:.3} {}", sa.as_str(), sb.as_str(), c.test.t_value, c.verdict));
    }
    Ok(format!("one-stage means {}", parts.join(", ")))
}

fn determinism(ws: &mut Option<Workspace>) -> Outcome {
    let first = ws.as_ref().ok_or("no first run")?;
    let first_bytes = fs::read(first.report_path(ClassifierKind::Hmm)).map_err(|e| e.to_string())?;
    let second = Workspace::create()?;
    let cfg = second.config(ClassifierKind::Hmm);
    train(&cfg).map_err(|e| e.to_string())?;
    let outputs = evaluate(&cfg).map_err(|e| e.to_string())?;
    let second_bytes = fs::read(&outputs.json).map_err(|e| e.to_string())?;
    ensure!(first_bytes == second_bytes, "HMM reports differ between two runs");
    Ok(format!("two independent runs wrote identical {}-byte reports", first_bytes.len()))
}

fn protocol_counts() -> Outcome {
    let mut records = Vec::new();
    for s in 1..=30 {
        for emotion in Emotion::ALL {
            for sentence_id in 1..=8 {
                for repetition in 1..=9 {
                    records.push(UtteranceRecord {
                        path: format!("s{s:02}/{emotion}/sent{sentence_id:02}_rep{repetition:02}.wav"),
                        speaker_id: format!("s{s:02}"),
                        emotion,
                        sentence_id,
                        repetition,
                    });
                }
            }
        }
    }
    let manifest = CorpusManifest::with_counts(records, 8, 9).map_err(|e| e.to_string())?;
    let (train_half, test) = split_paper_protocol(&manifest).map_err(|e| e.to_string())?;
    ensure!(test.len() == 6_480, "test utterances {}", test.len());
    ensure!(train_half.len() == 6_480, "training utterances {}", train_half.len());

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let features: Vec<FeatureSequence> = (0..train_half.len())
        .map(|_| FeatureSequence::new((0..8).map(|_| rng.gen_range(-1.0..1.0)).collect(), 2).unwrap())
        .collect();
    let groups = TrainingGroups::new(&train_half, &features).map_err(|e| e.to_string())?;
    ensure!(groups.speakers.len() == 30, "{} speaker groups", groups.speakers.len());
    for (speaker, utterances) in &groups.speakers {
        ensure!(utterances.len() == 36, "speaker {speaker} trains on {} utterances", utterances.len());
    }

    let system_config = SystemConfig {
        gmm: GmmTrainConfig { mixture_count: 1, max_iters: 1, rel_tol: 0.0 },
        ..SystemConfig::default()
    };
    let system =
        train_system(&train_half, &features, ClassifierKind::Gmm, &system_config, 1).map_err(|e| e.to_string())?;
    let cells: usize = system.emotion_models_by_speaker.values().map(|m| m.len()).sum();
    ensure!(system.speaker_models.len() == 30, "{} speaker models", system.speaker_models.len());
    ensure!(cells == 180, "{cells} speaker-emotion models");
    ensure!(system.pooled_emotion_models.len() == 6, "{} pooled models", system.pooled_emotion_models.len());
    Ok("6,480 test utterances, 36 per speaker model, 30/180/6 models".into())
}

fn run(n: usize, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|panic| {
        let msg = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let elapsed = fmt_duration(start.elapsed());
    match outcome {
        Ok(detail) => {
            println!("criterion {n}: PASS  {detail} ({elapsed})");
            true
        }
        Err(detail) => {
            println!("criterion {n}: FAIL  {detail} ({elapsed})");
            false
        }
    }
}

fn fmt_duration(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn main() -> ExitCode {
    let mut ws = None;
    let results = [
        run(1, forward_oracle),
        run(2, training_monotone),
        run(3, frontend_invariants),
        run(4, table_statistics),
        run(5, || cascade_trend(&mut ws)),
        run(6, || baselines(&mut ws)),
        run(7, || determinism(&mut ws)),
        run(8, protocol_counts),
    ];
    if results.iter().all(|&ok| ok) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
