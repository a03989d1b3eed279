//! Confusion matrix, per-class precision/recall, macro scores, prediction
//! and the robustness suite.

mod robust;

use serde::{Deserialize, Serialize};

use crate::dataset::ImageRecord;
use crate::error::{Error, Result};
use crate::model::{InputBatch, Network};
use crate::preprocess::{self, ImageTensor, PreprocessConfig};
use crate::train::argmax_rows;

pub use robust::{load_suite, run_robustness_suite, run_robustness_suite_images, RobustnessReport, RobustnessRow};

/// Images per forward call during evaluation.
pub const EVAL_BATCH: usize = 20;

/// `counts[i][j]`: samples of true class `i` predicted as `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    /// Replaces the default index names with the class registry names.
    pub fn with_class_names(mut self, names: &[String]) -> Result<Self> {
        if names.len() != self.k() {
            return Err(Error::shape(format!(
                "{} class names for a {}x{} matrix",
                names.len(),
                self.k(),
                self.k()
            )));
        }
        self.classes = names.to_vec();
        Ok(self)
    }
}

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::shape(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut counts = vec![vec![0u64; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= k || p >= k {
            return Err(Error::shape(format!("label pair ({t}, {p}) out of range for {k} classes")));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix {
        classes: (0..k).map(|i| i.to_string()).collect(),
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub index: usize,
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub support: u64,
    /// Nothing was predicted as this class; precision reported as 0.
    pub precision_undefined: bool,
    /// No true samples of this class; recall reported as 0.
    pub recall_undefined: bool,
}

pub fn per_class_precision_recall(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..cm.k())
        .map(|i| {
            let tp = cm.counts[i][i];
            let predicted = cm.col_sum(i);
            let support = cm.row_sum(i);
            let ratio = |d: u64| if d == 0 { 0.0 } else { tp as f64 / d as f64 };
            let m = ClassMetrics {
                index: i,
                name: cm.classes[i].clone(),
                precision: ratio(predicted),
                recall: ratio(support),
                support,
                precision_undefined: predicted == 0,
                recall_undefined: support == 0,
            };
            if m.precision_undefined || m.recall_undefined {
                log::warn!("class `{}` has an empty row or column; its metrics are reported as 0", m.name);
            }
            m
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Macro precision and recall, and their harmonic mean.
pub fn macro_f1(per_class: &[ClassMetrics]) -> Result<MacroScores> {
    let pairs: Vec<(f64, f64)> = per_class.iter().map(|m| (m.precision, m.recall)).collect();
    macro_f1_from_pairs(&pairs)
}

/// `macro_f1` on raw `(precision, recall)` pairs.
pub fn macro_f1_from_pairs(pairs: &[(f64, f64)]) -> Result<MacroScores> {
    if pairs.is_empty() {
        return Err(Error::config("metrics", "macro scores need at least one class"));
    }
    let n = pairs.len() as f64;
    let precision = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let recall = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(MacroScores { precision, recall, f1 })
}

pub fn overall_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::config("metrics", "accuracy of an empty confusion matrix"));
    }
    Ok(cm.trace() as f64 / total as f64)
}

/// `correct / total` as a percentage truncated (not rounded) to two
/// decimals, computed in integers so the text is exact.
pub fn format_percent(correct: u64, total: u64) -> String {
    if total == 0 {
        return "n/a".to_string();
    }
    let hundredths = correct * 10_000 / total;
    format!("{}.{:02}%", hundredths / 100, hundredths % 100)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub classes: Vec<String>,
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassEntry>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub n_samples: u64,
}

impl EvaluationReport {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self> {
        let per_class = per_class_precision_recall(cm);
        let scores = macro_f1(&per_class)?;
        Ok(Self {
            classes: cm.classes.clone(),
            confusion: cm.counts.clone(),
            per_class: per_class
                .into_iter()
                .map(|m| ClassEntry {
                    name: m.name,
                    precision: m.precision,
                    recall: m.recall,
                    support: m.support,
                })
                .collect(),
            macro_precision: scores.precision,
            macro_recall: scores.recall,
            macro_f1: scores.f1,
            accuracy: overall_accuracy(cm)?,
            n_samples: cm.total(),
        })
    }

    pub fn confusion_matrix(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            classes: self.classes.clone(),
            counts: self.confusion.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class_index: usize,
    pub probabilities: Vec<f32>,
}

impl Prediction {
    fn from_row(row: &[f32]) -> Self {
        Self {
            class_index: argmax_rows(row, row.len())[0],
            probabilities: row.to_vec(),
        }
    }

    /// The `n` most probable classes, highest first; ties keep index order.
    pub fn top(&self, n: usize) -> Vec<(usize, f32)> {
        let mut idx: Vec<usize> = (0..self.probabilities.len()).collect();
        idx.sort_by(|&a, &b| self.probabilities[b].total_cmp(&self.probabilities[a]).then(a.cmp(&b)));
        idx.into_iter().take(n).map(|i| (i, self.probabilities[i])).collect()
    }
}

/// Inference on preprocessed images, in input order.
pub fn predict_images(net: &Network<f32>, images: &[ImageTensor]) -> Result<Vec<Prediction>> {
    let k = net.config().n_classes;
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(EVAL_BATCH) {
        let probs = net.forward(&InputBatch::from_images(chunk)?)?;
        out.extend(probs.chunks_exact(k).map(Prediction::from_row));
    }
    Ok(out)
}

/// Preprocesses and predicts every record. Records that fail to load get an
/// `Err` entry at their position; the rest are still predicted.
pub fn predict_batch(
    net: &Network<f32>,
    records: &[ImageRecord],
    pp: &PreprocessConfig,
) -> Result<Vec<Result<Prediction>>> {
    let mut slots: Vec<Option<Result<Prediction>>> = Vec::with_capacity(records.len());
    let mut good = Vec::new();
    let mut good_pos = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match preprocess::preprocess_record(r, pp) {
            Ok(img) => {
                good.push(img);
                good_pos.push(i);
                slots.push(None);
            }
            Err(e) => slots.push(Some(Err(e))),
        }
    }
    for (pos, p) in good_pos.into_iter().zip(predict_images(net, &good)?) {
        slots[pos] = Some(Ok(p));
    }
    Ok(slots.into_iter().map(|s| s.expect("every slot filled")).collect())
}

/// Predicts every record and builds the full report. Any unreadable record
/// is an error.
pub fn evaluate(
    net: &Network<f32>,
    records: &[ImageRecord],
    pp: &PreprocessConfig,
    class_names: &[String],
) -> Result<EvaluationReport> {
    let images = records
        .iter()
        .map(|r| preprocess::preprocess_record(r, pp))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = records.iter().map(|r| r.label_index).collect();
    evaluate_images(net, &images, &labels, class_names)
}

pub fn evaluate_images(
    net: &Network<f32>,
    images: &[ImageTensor],
    labels: &[usize],
    class_names: &[String],
) -> Result<EvaluationReport> {
    let preds: Vec<usize> = predict_images(net, images)?.iter().map(|p| p.class_index).collect();
    let cm = confusion_matrix(labels, &preds, net.config().n_classes)?.with_class_names(class_names)?;
    EvaluationReport::from_confusion(&cm)
}
