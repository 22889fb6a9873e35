//! Confusion matrix, classification report and the ablation harness.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{landmark_dropout, AugmentConfig};
use crate::error::{Error, Result};
use crate::landmarks::{LabeledSample, LABELS};
use crate::model::{train, ResidualMlpModel, TrainConfig};
use crate::preprocess::{stratified_split, LabelCodec, SplitSpec};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            counts: vec![0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch {
                expected: format!("{n}x{n}"),
                found: "ragged rows".into(),
            });
        }
        Ok(Self {
            n,
            counts: rows.concat(),
        })
    }

    pub fn from_predictions(n: usize, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} predictions", truth.len()),
                found: predicted.len().to_string(),
            });
        }
        let mut cm = Self::new(n);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.record(t, p);
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.n + predicted] += 1;
    }

    /// Adds another matrix's counts (for sharded evaluation).
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.n, other.n, "merging matrices of different size");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c * self.n..(c + 1) * self.n].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        (0..self.n).map(|r| self.get(r, c)).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n).map(|c| self.get(c, c)).sum()
    }

    /// CSV with a header row of predicted labels and a leading true-label column.
    pub fn to_csv(&self, labels: &[&str]) -> String {
        let mut out = String::from("true\\pred");
        for l in labels.iter().take(self.n) {
            let _ = write!(out, ",{l}");
        }
        out.push('\n');
        for r in 0..self.n {
            out.push_str(labels.get(r).copied().unwrap_or("?"));
            for c in 0..self.n {
                let _ = write!(out, ",{}", self.get(r, c));
            }
            out.push('\n');
        }
        out
    }

    /// Off-diagonal cells sorted by count, largest first.
    pub fn top_confusions(&self, k: usize) -> Vec<(usize, usize, u64)> {
        let mut cells: Vec<_> = (0..self.n)
            .flat_map(|r| (0..self.n).map(move |c| (r, c)))
            .filter(|(r, c)| r != c)
            .map(|(r, c)| (r, c, self.get(r, c)))
            .filter(|&(_, _, n)| n > 0)
            .collect();
        cells.sort_by(|a, b| b.2.cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
        cells.truncate(k);
        cells
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: AveragedMetrics,
    pub weighted_avg: AveragedMetrics,
    pub total: u64,
    /// Metrics that hit a zero denominator and were set to 0.
    pub zero_division: Vec<String>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ClassificationReport {
    pub fn from_confusion(cm: &ConfusionMatrix, labels: &[&str]) -> Result<Self> {
        let total = cm.total();
        if total == 0 {
            return Err(Error::EmptyInput("classification report needs evaluated samples"));
        }
        let mut zero_division = Vec::new();
        let mut classes = Vec::with_capacity(cm.classes());
        for c in 0..cm.classes() {
            let label = labels.get(c).map_or_else(|| c.to_string(), |s| s.to_string());
            let tp = cm.get(c, c);
            let precision = ratio(tp, cm.col_sum(c)).unwrap_or_else(|| {
                zero_division.push(format!("precision[{label}]"));
                0.0
            });
            let recall = ratio(tp, cm.row_sum(c)).unwrap_or_else(|| {
                zero_division.push(format!("recall[{label}]"));
                0.0
            });
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            classes.push(ClassMetrics {
                label,
                precision,
                recall,
                f1,
                support: cm.row_sum(c),
            });
        }
        let k = classes.len() as f64;
        let macro_avg = AveragedMetrics {
            precision: classes.iter().map(|m| m.precision).sum::<f64>() / k,
            recall: classes.iter().map(|m| m.recall).sum::<f64>() / k,
            f1: classes.iter().map(|m| m.f1).sum::<f64>() / k,
        };
        let t = total as f64;
        let weighted = |f: fn(&ClassMetrics) -> f64| {
            classes.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / t
        };
        let weighted_avg = AveragedMetrics {
            precision: weighted(|m| m.precision),
            recall: weighted(|m| m.recall),
            f1: weighted(|m| m.f1),
        };
        Ok(Self {
            accuracy: cm.trace() as f64 / t,
            classes,
            macro_avg,
            weighted_avg,
            total,
            zero_division,
        })
    }

    /// Aligned text table with per-class rows and summary lines.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:>12} {:>9} {:>9} {:>9} {:>9}\n",
            "class", "precision", "recall", "f1-score", "support"
        );
        for m in &self.classes {
            let _ = writeln!(
                out,
                "{:>12} {:>9.2} {:>9.2} {:>9.2} {:>9}",
                m.label, m.precision, m.recall, m.f1, m.support
            );
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "{:>12} {:>9} {:>9} {:>9.2} {:>9}",
            "accuracy", "", "", self.accuracy, self.total
        );
        for (name, a) in [("macro avg", self.macro_avg), ("weighted avg", self.weighted_avg)] {
            let _ = writeln!(
                out,
                "{:>12} {:>9.2} {:>9.2} {:>9.2} {:>9}",
                name, a.precision, a.recall, a.f1, self.total
            );
        }
        out
    }
}

/// Predicts every sample and tallies the results.
pub fn evaluate(
    model: &ResidualMlpModel,
    samples: &[LabeledSample],
) -> Result<(ConfusionMatrix, ClassificationReport)> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("evaluation set"));
    }
    let mut cm = ConfusionMatrix::new(model.codec.len());
    for chunk in samples.chunks(1024) {
        let frames: Vec<_> = chunk.iter().map(|s| s.frame).collect();
        let probs = model.predict_proba(&frames)?;
        for (row, s) in probs.rows().into_iter().zip(chunk) {
            let predicted = LabelCodec::argmax(row.as_slice().expect("row-major"));
            cm.record(model.codec.encode(s.label), predicted);
        }
    }
    let report = ClassificationReport::from_confusion(&cm, &LABELS)?;
    Ok((cm, report))
}

/// Applies landmark dropout to every sample with a fixed seed.
pub fn corrupt_with_dropout(samples: &[LabeledSample], cfg: &AugmentConfig, seed: u64) -> Vec<LabeledSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    samples
        .iter()
        .map(|s| LabeledSample::new(landmark_dropout(&s.frame, cfg, &mut rng), s.label))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    pub epochs_logged: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Accuracy on the held-out split with every sample dropout-corrupted.
    pub corrupted_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, variant: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<16} {:>6} {:>6} {:>9} {:>9} {:>10}\n",
            "variant", "seed", "epochs", "accuracy", "macro-f1", "corrupted"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<16} {:>6} {:>6} {:>9.4} {:>9.4} {:>10.4}",
                r.variant, r.seed, r.epochs_logged, r.accuracy, r.macro_f1, r.corrupted_accuracy
            );
        }
        out
    }
}

/// Trains `full`, `no-augmentation` and `no-residual` variants with the same
/// seed and evaluates each on the same held-out split, clean and corrupted.
pub fn run_ablations(
    dataset: &[LabeledSample],
    base: &TrainConfig,
    aug: &AugmentConfig,
) -> Result<AblationReport> {
    let split = SplitSpec {
        train_fraction: base.train_fraction,
        seed: base.seed,
    };
    // train() re-splits with the same spec, so this is the same held-out set
    let (_, test) = stratified_split(dataset, &split)?;
    if test.is_empty() {
        return Err(Error::EmptyInput("ablation needs a non-empty test split"));
    }
    let corrupted = corrupt_with_dropout(&test, aug, base.seed ^ 0xC0FFEE);

    let mut no_residual = *base;
    no_residual.network.residual = false;
    let variants = [
        ("full", TrainConfig { augment: true, ..*base }),
        ("no-augmentation", TrainConfig { augment: false, on_the_fly_dropout: false, ..*base }),
        ("no-residual", TrainConfig { augment: true, ..no_residual }),
    ];
    let mut rows = Vec::with_capacity(3);
    for (name, cfg) in variants {
        let (model, log) = train(dataset, &cfg, aug)?;
        let (_, clean) = evaluate(&model, &test)?;
        let (_, dirty) = evaluate(&model, &corrupted)?;
        rows.push(AblationRow {
            variant: name.to_string(),
            seed: cfg.seed,
            epochs_logged: log.epochs_completed(),
            accuracy: clean.accuracy,
            macro_f1: clean.macro_avg.f1,
            corrupted_accuracy: dirty.accuracy,
        });
    }
    Ok(AblationReport { rows })
}
