//! Confusion matrices, per-label accuracy tables and the pooled-SD Student's t
//! comparison between two recognizers.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::recognizer::Prediction;

/// One-sided critical value at the 0.05 level used to call a difference significant.
pub const T_CRITICAL_05: f64 = 1.645;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Emotion,
    Speaker,
}

/// Rows are true labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self { labels, counts: vec![vec![0; n]; n] }
    }

    fn index(&self, label: &str) -> Result<usize> {
        self.labels.iter().position(|l| l == label).ok_or_else(|| contract!("unknown label {label:?}"))
    }

    pub fn record(&mut self, truth: &str, predicted: &str) -> Result<()> {
        let (i, j) = (self.index(truth)?, self.index(predicted)?);
        self.counts[i][j] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn accuracy_table(&self) -> AccuracyTable {
        let rows = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, label)| {
                let trials = self.row_total(i);
                let correct = self.counts[i][i];
                AccuracyRow {
                    label: label.clone(),
                    trials,
                    correct,
                    accuracy: (trials > 0).then(|| 100.0 * correct as f64 / trials as f64),
                }
            })
            .collect();
        AccuracyTable::from_rows(rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub label: String,
    pub trials: u64,
    pub correct: u64,
    /// Percent correct; absent when the label had no trials.
    pub accuracy: Option<f64>,
}

/// Per-label accuracy (%) and their unweighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub rows: Vec<AccuracyRow>,
    pub mean: f64,
}

impl AccuracyTable {
    /// Labels with no trials are left out of the mean.
    pub fn from_rows(rows: Vec<AccuracyRow>) -> Self {
        let present: Vec<f64> = rows.iter().filter_map(|r| r.accuracy).collect();
        for r in rows.iter().filter(|r| r.accuracy.is_none()) {
            log::warn!("label {:?} has no trials; excluded from the mean accuracy", r.label);
        }
        let mean = if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
        Self { rows, mean }
    }

    /// A table from bare percentages (trial counts unknown, recorded as 0).
    pub fn from_accuracies<S: ToString>(labels: &[S], accuracies: &[f64]) -> Result<Self> {
        if labels.len() != accuracies.len() {
            return Err(contract!("{} labels but {} accuracies", labels.len(), accuracies.len()));
        }
        if let Some(a) = accuracies.iter().find(|a| !(0.0..=100.0).contains(*a)) {
            return Err(contract!("accuracy {a} outside [0, 100]"));
        }
        Ok(Self::from_rows(
            labels
                .iter()
                .zip(accuracies)
                .map(|(l, &a)| AccuracyRow { label: l.to_string(), trials: 0, correct: 0, accuracy: Some(a) })
                .collect(),
        ))
    }

    pub fn labels(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.label.as_str()).collect()
    }

    pub fn accuracies(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.accuracy).collect()
    }

    pub fn accuracy_of(&self, label: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.label == label).and_then(|r| r.accuracy)
    }

    /// Label of the best row (earliest on ties).
    pub fn best_label(&self) -> Option<&str> {
        let mut best: Option<&AccuracyRow> = None;
        for r in self.rows.iter().filter(|r| r.accuracy.is_some()) {
            if best.is_none_or(|b| r.accuracy > b.accuracy) {
                best = Some(r);
            }
        }
        best.map(|r| r.label.as_str())
    }
}

/// Tallies predictions along one axis over the given label set.
pub fn confusion_and_accuracy(
    predictions: &[Prediction],
    axis: Axis,
    labels: &[String],
) -> Result<(ConfusionMatrix, AccuracyTable)> {
    if predictions.is_empty() {
        return Err(contract!("no predictions to score"));
    }
    let mut cm = ConfusionMatrix::new(labels.to_vec());
    for (i, p) in predictions.iter().enumerate() {
        match axis {
            Axis::Emotion => {
                let truth = p.true_emotion.ok_or_else(|| contract!("prediction {i} has no true emotion"))?;
                cm.record(truth.as_str(), p.predicted_emotion.as_str())?;
            }
            Axis::Speaker => {
                let truth = p.true_speaker.as_deref().ok_or_else(|| contract!("prediction {i} has no true speaker"))?;
                let predicted = p
                    .predicted_speaker
                    .as_deref()
                    .ok_or_else(|| contract!("prediction {i} has no speaker decision"))?;
                cm.record(truth, predicted)?;
            }
        }
    }
    let table = cm.accuracy_table();
    Ok((cm, table))
}

/// Root-mean-square of two dispersion estimates.
pub fn pooled_sd(sd_x: f64, sd_y: f64) -> Result<f64> {
    if !(sd_x >= 0.0 && sd_y >= 0.0) {
        return Err(contract!("standard deviations must be non-negative, got {sd_x} and {sd_y}"));
    }
    Ok(libm::sqrt((sd_x * sd_x + sd_y * sd_y) / 2.0))
}

/// What each sample contributes to the pooled SD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdConvention {
    /// Standard error of the mean: sample SD (n − 1) divided by √n.
    #[default]
    StandardError,
    /// Sample SD with the n − 1 denominator.
    SampleSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_value: f64,
    pub sd_pooled: f64,
    pub mean_x: f64,
    pub mean_y: f64,
    /// Per-sample dispersion estimates under `convention`.
    pub sd_x: f64,
    pub sd_y: f64,
    pub n: usize,
    pub convention: SdConvention,
    /// Set when the pooled SD is zero but the means differ (t is ±∞).
    pub unbounded: bool,
}

fn mean_and_sample_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, libm::sqrt(ss / (n - 1.0)))
}

/// `t = (mean_x − mean_y) / pooled_sd(sd_x, sd_y)` for two equal-size samples.
pub fn t_statistic(x: &[f64], y: &[f64], convention: SdConvention) -> Result<TTestResult> {
    if x.len() != y.len() {
        return Err(contract!("samples of size {} and {} differ", x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(contract!("need at least two observations per sample, got {n}"));
    }
    let (mean_x, sx) = mean_and_sample_sd(x);
    let (mean_y, sy) = mean_and_sample_sd(y);
    let root_n = libm::sqrt(n as f64);
    let (sd_x, sd_y) = match convention {
        SdConvention::StandardError => (sx / root_n, sy / root_n),
        SdConvention::SampleSd => (sx, sy),
    };
    let sd_pooled = pooled_sd(sd_x, sd_y)?;
    let diff = mean_x - mean_y;
    let (t_value, unbounded) = if sd_pooled > 0.0 {
        (diff / sd_pooled, false)
    } else if diff == 0.0 {
        (0.0, false)
    } else {
        (if diff > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY }, true)
    };
    Ok(TTestResult { t_value, sd_pooled, mean_x, mean_y, sd_x, sd_y, n, convention, unbounded })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub test: TTestResult,
    pub critical_value: f64,
    /// `t > critical_value` (one-sided: system A better than system B).
    pub significant: bool,
}

/// Student's t on two systems' per-label accuracies, A minus B.
pub fn compare_systems(a: &AccuracyTable, b: &AccuracyTable, convention: SdConvention) -> Result<Comparison> {
    if a.labels() != b.labels() {
        return Err(contract!("label sets differ: {:?} vs {:?}", a.labels(), b.labels()));
    }
    let values = |t: &AccuracyTable| {
        t.accuracies()
            .into_iter()
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| contract!("a label has no trials; cannot compare"))
    };
    let test = t_statistic(&values(a)?, &values(b)?, convention)?;
    Ok(Comparison { significant: test.t_value > T_CRITICAL_05, critical_value: T_CRITICAL_05, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Emotion;
    use proptest::prelude::*;

    const ONE_STAGE: [f64; 6] = [84.2, 63.4, 61.5, 55.9, 40.2, 63.2];
    const TWO_STAGE: [f64; 6] = [90.4, 70.1, 66.7, 61.8, 48.6, 67.6];

    fn labels() -> Vec<String> {
        Emotion::ALL.iter().map(|e| e.as_str().to_string()).collect()
    }

    fn predictions_with_accuracy(per_mille: &[u64]) -> Vec<Prediction> {
        let mut out = Vec::new();
        for (e, &correct) in Emotion::ALL.iter().zip(per_mille) {
            for k in 0..1000 {
                let predicted = if k < correct { *e } else { Emotion::ALL[(e.index() + 1) % 6] };
                out.push(Prediction {
                    utterance: None,
                    true_speaker: Some("s".into()),
                    predicted_speaker: Some("s".into()),
                    true_emotion: Some(*e),
                    predicted_emotion: predicted,
                    speaker_scores: Default::default(),
                    emotion_scores: Default::default(),
                });
            }
        }
        out
    }

    fn one_decimal(x: f64) -> f64 {
        libm::round(x * 10.0) / 10.0
    }

    #[test]
    fn all_correct_is_one_hundred() {
        let preds = predictions_with_accuracy(&[1000; 6]);
        let (cm, table) = confusion_and_accuracy(&preds, Axis::Emotion, &labels()).unwrap();
        assert_eq!(cm.total(), 6000);
        assert!(table.accuracies().iter().all(|a| *a == Some(100.0)));
        assert_eq!(table.mean, 100.0);
    }

    #[test]
    fn table_means_from_counted_predictions() {
        let one: Vec<u64> = ONE_STAGE.iter().map(|a| libm::round(a * 10.0) as u64).collect();
        let (_, t) = confusion_and_accuracy(&predictions_with_accuracy(&one), Axis::Emotion, &labels()).unwrap();
        assert_eq!(one_decimal(t.mean), 61.4);
        let two: Vec<u64> = TWO_STAGE.iter().map(|a| libm::round(a * 10.0) as u64).collect();
        let (_, t) = confusion_and_accuracy(&predictions_with_accuracy(&two), Axis::Emotion, &labels()).unwrap();
        assert_eq!(one_decimal(t.mean), 67.5);
    }

    #[test]
    fn labels_without_trials_leave_the_mean() {
        let preds: Vec<Prediction> = predictions_with_accuracy(&[500; 6])
            .into_iter()
            .filter(|p| p.true_emotion != Some(Emotion::Fear))
            .collect();
        let (_, t) = confusion_and_accuracy(&preds, Axis::Emotion, &labels()).unwrap();
        assert_eq!(t.accuracy_of("fear"), None);
        assert_eq!(t.mean, 50.0);
    }

    #[test]
    fn unknown_labels_and_missing_truth_are_errors() {
        let mut preds = predictions_with_accuracy(&[1000; 6]);
        assert!(confusion_and_accuracy(&preds, Axis::Emotion, &labels()[..5]).is_err());
        preds[0].true_emotion = None;
        assert!(confusion_and_accuracy(&preds, Axis::Emotion, &labels()).is_err());
        assert!(confusion_and_accuracy(&[], Axis::Emotion, &labels()).is_err());
    }

    #[test]
    fn pooled_sd_examples() {
        assert_eq!(pooled_sd(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(pooled_sd(2.5, 2.5).unwrap(), 2.5);
        assert!((pooled_sd(3.0, 4.0).unwrap() - 3.535_533_905_932_737_8).abs() < 1e-15);
        assert!(pooled_sd(-1.0, 1.0).is_err());
    }

    #[test]
    fn t_statistic_on_the_published_tables() {
        // Frozen from an independent numpy computation of the same formulas.
        let r = t_statistic(&TWO_STAGE, &ONE_STAGE, SdConvention::StandardError).unwrap();
        assert!((r.sd_x - 5.542_301_968_596_723).abs() < 1e-9);
        assert!((r.sd_y - 5.793_041_803_175_025).abs() < 1e-9);
        assert!((r.sd_pooled - 5.669_058_318_823_526).abs() < 1e-9);
        assert!((r.t_value - 1.081_896_320_058_702_4).abs() < 1e-9);
        let raw = t_statistic(&TWO_STAGE, &ONE_STAGE, SdConvention::SampleSd).unwrap();
        assert!((raw.t_value - 0.441_682_323_123_109_7).abs() < 1e-9);
        // Neither convention lands on the 1.798 printed alongside the tables.
        assert!((r.t_value - 1.798).abs() > 0.5 && (raw.t_value - 1.798).abs() > 0.5);
    }

    #[test]
    fn t_statistic_edge_cases() {
        let r = t_statistic(&ONE_STAGE, &ONE_STAGE, SdConvention::StandardError).unwrap();
        assert_eq!(r.t_value, 0.0);
        assert!(t_statistic(&[1.0], &[2.0], SdConvention::StandardError).is_err());
        assert!(t_statistic(&[1.0, 2.0], &[2.0], SdConvention::StandardError).is_err());
        let flat = t_statistic(&[3.0, 3.0], &[1.0, 1.0], SdConvention::StandardError).unwrap();
        assert!(flat.unbounded && flat.t_value == f64::INFINITY);
    }

    #[test]
    fn compare_examples() {
        let a = AccuracyTable::from_accuracies(&labels(), &ONE_STAGE).unwrap();
        let same = compare_systems(&a, &a, SdConvention::StandardError).unwrap();
        assert_eq!(same.test.t_value, 0.0);
        assert!(!same.significant);
        assert_eq!(same.critical_value, 1.645);
        let shifted: Vec<f64> = ONE_STAGE.iter().map(|v| (v + 50.0).min(100.0)).collect();
        let b = AccuracyTable::from_accuracies(&labels(), &shifted).unwrap();
        let cmp = compare_systems(&b, &a, SdConvention::StandardError).unwrap();
        assert!(cmp.test.t_value > 0.0);
        let other = AccuracyTable::from_accuracies(&["x", "y", "z", "u", "v", "w"], &ONE_STAGE).unwrap();
        assert!(compare_systems(&a, &other, SdConvention::StandardError).is_err());
    }

    #[test]
    fn best_label_picks_the_top_row() {
        let a = AccuracyTable::from_accuracies(&labels(), &TWO_STAGE).unwrap();
        assert_eq!(a.best_label(), Some("neutral"));
    }

    proptest! {
        #[test]
        fn t_is_antisymmetric(x in proptest::collection::vec(0.0f64..100.0, 6), y in proptest::collection::vec(0.0f64..100.0, 6)) {
            let a = t_statistic(&x, &y, SdConvention::StandardError).unwrap();
            let b = t_statistic(&y, &x, SdConvention::StandardError).unwrap();
            prop_assert_eq!(a.t_value, -b.t_value);
        }

        #[test]
        fn t_is_scale_free(x in proptest::collection::vec(0.0f64..100.0, 5), y in proptest::collection::vec(0.0f64..100.0, 5), c in 0.01f64..100.0) {
            let a = t_statistic(&x, &y, SdConvention::StandardError).unwrap();
            prop_assume!(a.sd_pooled > 1e-6);
            let xs: Vec<f64> = x.iter().map(|v| v * c).collect();
            let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
            let b = t_statistic(&xs, &ys, SdConvention::StandardError).unwrap();
            prop_assert!((a.t_value - b.t_value).abs() <= 1e-12 * a.t_value.abs().max(1.0));
        }

        #[test]
        fn mean_ignores_row_order(v in proptest::collection::vec(0.0f64..100.0, 6), rot in 0usize..6) {
            let labels = labels();
            let a = AccuracyTable::from_accuracies(&labels, &v).unwrap();
            let mut rl = labels.clone();
            let mut rv = v.clone();
            rl.rotate_left(rot);
            rv.rotate_left(rot);
            let b = AccuracyTable::from_accuracies(&rl, &rv).unwrap();
            prop_assert!((a.mean - b.mean).abs() < 1e-9);
        }
    }
}
