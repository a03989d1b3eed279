use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{format_percent, predict_images};
use crate::augment::{PerturbationKind, RobustnessSpec};
use crate::dataset::ImageRecord;
use crate::error::{Error, Result};
use crate::model::Network;
use crate::preprocess::{self, ImageTensor, PreprocessConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub kind: PerturbationKind,
    pub params: BTreeMap<String, f64>,
    pub seed: u64,
    pub correct: u64,
    pub total: u64,
    pub accuracy: f64,
}

impl RobustnessRow {
    pub fn new(spec: &RobustnessSpec, correct: u64, total: u64) -> Self {
        Self {
            kind: spec.kind,
            params: spec.params.clone(),
            seed: spec.seed,
            correct,
            total,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        }
    }

    /// Accuracy as shown in reports, e.g. `90.18%`.
    pub fn rendered_accuracy(&self) -> String {
        format_percent(self.correct, self.total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub rows: Vec<RobustnessRow>,
}

impl RobustnessReport {
    /// Tab-separated table: kind, correct, total, accuracy.
    pub fn render_table(&self) -> String {
        let mut out = String::from("perturbation\tcorrect\ttotal\taccuracy\n");
        for r in &self.rows {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", r.kind, r.correct, r.total, r.rendered_accuracy());
        }
        out
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Loads a suite file: a JSON list of specs.
pub fn load_suite(path: &std::path::Path) -> Result<Vec<RobustnessSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let specs: Vec<RobustnessSpec> = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::config(format!("suite.{}", e.path()), e.inner().to_string()))?;
    for s in &specs {
        s.resolve()?;
    }
    Ok(specs)
}

/// Perturbs every test image once per spec (generator keyed by the spec seed
/// and the record's position), then predicts and counts correct answers.
/// Perturbations act on the preprocessed model input.
pub fn run_robustness_suite(
    net: &Network<f32>,
    records: &[ImageRecord],
    pp: &PreprocessConfig,
    specs: &[RobustnessSpec],
) -> Result<RobustnessReport> {
    let images = records
        .iter()
        .map(|r| preprocess::preprocess_record(r, pp))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = records.iter().map(|r| r.label_index).collect();
    run_robustness_suite_images(net, &images, &labels, specs)
}

pub fn run_robustness_suite_images(
    net: &Network<f32>,
    images: &[ImageTensor],
    labels: &[usize],
    specs: &[RobustnessSpec],
) -> Result<RobustnessReport> {
    if specs.is_empty() {
        return Err(Error::config("suite", "no perturbations given"));
    }
    if images.len() != labels.len() {
        return Err(Error::shape("image and label counts differ"));
    }
    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        spec.resolve()?;
        let perturbed = images
            .iter()
            .enumerate()
            .map(|(i, img)| spec.apply_indexed(img, i as u64))
            .collect::<Result<Vec<_>>>()?;
        let correct = predict_images(net, &perturbed)?
            .iter()
            .zip(labels)
            .filter(|(p, &l)| p.class_index == l)
            .count() as u64;
        let row = RobustnessRow::new(spec, correct, images.len() as u64);
        log::info!("{}: {}/{} ({})", spec.kind, correct, row.total, row.rendered_accuracy());
        rows.push(row);
    }
    Ok(RobustnessReport { rows })
}
