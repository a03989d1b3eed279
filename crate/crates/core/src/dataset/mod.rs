//! Directory-per-class dataset discovery, manifests and split assignment.

mod synth;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use synth::generate_synthetic_dataset;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassLabel {
    pub index: usize,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub const ASSIGNED: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub path: PathBuf,
    pub label_index: usize,
    pub split: Split,
    pub byte_size: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn total(&self) -> usize {
        self.train_per_class + self.val_per_class + self.test_per_class
    }

    pub fn count_for(&self, split: Split) -> Option<usize> {
        match split {
            Split::Train => Some(self.train_per_class),
            Split::Val => Some(self.val_per_class),
            Split::Test => Some(self.test_per_class),
            Split::Unassigned => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub created_at: DateTime<Utc>,
    pub classes: Vec<ClassLabel>,
    pub split_spec: Option<SplitSpec>,
    pub records: Vec<ImageRecord>,
    /// Files found under class directories that could not be read or decoded.
    #[serde(default)]
    pub skipped_files: usize,
}

impl DatasetManifest {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn records_in(&self, split: Split) -> Vec<ImageRecord> {
        self.records
            .iter()
            .filter(|r| r.split == split)
            .cloned()
            .collect()
    }

    /// Count per (class, split).
    pub fn split_counts(&self) -> BTreeMap<(usize, Split), usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry((r.label_index, r.split)).or_insert(0) += 1;
        }
        counts
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        if manifest.format_version != MANIFEST_FORMAT_VERSION {
            return Err(Error::Version {
                found: manifest.format_version,
                supported: MANIFEST_FORMAT_VERSION,
            });
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

fn is_decodable(path: &Path) -> bool {
    image::ImageReader::open(path)
        .and_then(|r| r.with_guessed_format())
        .map(|r| r.format().is_some() && r.into_dimensions().is_ok())
        .unwrap_or(false)
}

/// Scans `root/<class>/**/<image>` into an unsplit manifest. Class indices
/// follow the lexicographic order of the class directory names.
pub fn scan_dataset(root: &Path) -> Result<DatasetManifest> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut class_dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.file_type().map_err(|e| Error::io(entry.path(), e))?.is_dir() {
            let name = entry.file_name().to_string_lossy().into_owned();
            class_dirs.push((name, entry.path()));
        }
    }
    if class_dirs.is_empty() {
        return Err(Error::NoClassesFound(root.to_path_buf()));
    }
    class_dirs.sort();

    let mut classes = Vec::with_capacity(class_dirs.len());
    let mut records = Vec::new();
    let mut skipped = 0;
    for (index, (name, dir)) in class_dirs.into_iter().enumerate() {
        let mut found = 0;
        let walker = walkdir::WalkDir::new(&dir).sort_by_file_name().follow_links(true);
        for entry in walker {
            let entry = match entry {
                Ok(e) => e,
                Err(err) => {
                    warn!("skipping unreadable entry under {}: {err}", dir.display());
                    skipped += 1;
                    continue;
                }
            };
            if !entry.file_type().is_file() {
                continue;
            }
            let path = entry.path();
            let byte_size = entry.metadata().map(|m| m.len()).unwrap_or(0);
            if byte_size == 0 || !is_decodable(path) {
                warn!("skipping non-image file {}", path.display());
                skipped += 1;
                continue;
            }
            records.push(ImageRecord {
                path: path.to_path_buf(),
                label_index: index,
                split: Split::Unassigned,
                byte_size,
            });
            found += 1;
        }
        if found == 0 {
            return Err(Error::EmptyClass(name));
        }
        classes.push(ClassLabel { index, name });
    }

    Ok(DatasetManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        created_at: Utc::now(),
        classes,
        split_spec: None,
        records,
        skipped_files: skipped,
    })
}

/// Assigns train/val/test per class. Each class's records are ordered by path
/// and shuffled with a generator keyed by `(seed, class index)`, so the
/// assignment only depends on the manifest contents and the spec.
pub fn split_manifest(manifest: &DatasetManifest, spec: &SplitSpec) -> Result<DatasetManifest> {
    if spec.total() == 0 {
        return Err(Error::config("split", "train, val and test counts are all zero"));
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); manifest.n_classes()];
    for (i, r) in manifest.records.iter().enumerate() {
        let slot = per_class.get_mut(r.label_index).ok_or_else(|| {
            Error::Format(format!(
                "record {} has label {} outside the registry",
                r.path.display(),
                r.label_index
            ))
        })?;
        slot.push(i);
    }

    let mut out = manifest.clone();
    for r in &mut out.records {
        r.split = Split::Unassigned;
    }
    for (class, mut indices) in per_class.into_iter().enumerate() {
        if indices.len() < spec.total() {
            return Err(Error::InsufficientImages {
                class: manifest.classes[class].name.clone(),
                have: indices.len(),
                need: spec.total(),
            });
        }
        indices.sort_by(|&a, &b| manifest.records[a].path.cmp(&manifest.records[b].path));
        let mut rng = seed::rng_from(spec.seed, &[class as u64]);
        indices.shuffle(&mut rng);
        let bounds = [
            (Split::Train, spec.train_per_class),
            (Split::Val, spec.val_per_class),
            (Split::Test, spec.test_per_class),
        ];
        let mut cursor = indices.into_iter();
        for (split, n) in bounds {
            for i in cursor.by_ref().take(n) {
                out.records[i].split = split;
            }
        }
    }
    out.split_spec = Some(*spec);
    Ok(out)
}

/// Appends the records of a separately scanned test directory as the test
/// split. Class names must match the registry, every class must contribute
/// the same number of images, and the base manifest must not already hold a
/// test split.
pub fn merge_test_manifest(
    base: &DatasetManifest,
    test: &DatasetManifest,
) -> Result<DatasetManifest> {
    if base.class_names() != test.class_names() {
        return Err(Error::config(
            "test_dir",
            "class directories of the test set do not match the training registry",
        ));
    }
    if base.records.iter().any(|r| r.split == Split::Test) {
        return Err(Error::config("test_dir", "manifest already contains a test split"));
    }
    let mut counts = vec![0usize; test.n_classes()];
    for r in &test.records {
        counts[r.label_index] += 1;
    }
    let per_class = counts[0];
    if counts.iter().any(|&c| c != per_class) {
        return Err(Error::config(
            "test_dir",
            format!("test classes have uneven image counts {counts:?}"),
        ));
    }
    let mut out = base.clone();
    out.records.extend(test.records.iter().map(|r| ImageRecord {
        split: Split::Test,
        ..r.clone()
    }));
    out.skipped_files += test.skipped_files;
    if let Some(spec) = out.split_spec.as_mut() {
        spec.test_per_class = per_class;
    } else {
        out.split_spec = Some(SplitSpec {
            train_per_class: 0,
            val_per_class: 0,
            test_per_class: per_class,
            seed: 0,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMismatch {
    pub class: String,
    pub split: Split,
    pub expected: usize,
    pub actual: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub missing_files: Vec<PathBuf>,
    pub duplicate_paths: Vec<PathBuf>,
    pub split_mismatches: Vec<SplitMismatch>,
    pub bad_labels: Vec<PathBuf>,
}

pub fn validate_manifest(manifest: &DatasetManifest) -> ValidationReport {
    let k = manifest.n_classes();
    let missing_files = manifest
        .records
        .iter()
        .filter(|r| fs::File::open(&r.path).is_err())
        .map(|r| r.path.clone())
        .collect();

    let mut seen = HashSet::new();
    let mut duplicate_paths = Vec::new();
    for r in &manifest.records {
        if !seen.insert(&r.path) && !duplicate_paths.contains(&r.path) {
            duplicate_paths.push(r.path.clone());
        }
    }

    let bad_labels: Vec<PathBuf> = manifest
        .records
        .iter()
        .filter(|r| r.label_index >= k)
        .map(|r| r.path.clone())
        .collect();

    let mut split_mismatches = Vec::new();
    if let Some(spec) = &manifest.split_spec {
        let counts = manifest.split_counts();
        for class in &manifest.classes {
            for split in Split::ASSIGNED {
                let expected = spec.count_for(split).unwrap_or(0);
                let actual = counts.get(&(class.index, split)).copied().unwrap_or(0);
                if actual != expected {
                    split_mismatches.push(SplitMismatch {
                        class: class.name.clone(),
                        split,
                        expected,
                        actual,
                    });
                }
            }
        }
    }

    let mut report = ValidationReport {
        valid: false,
        missing_files,
        duplicate_paths,
        split_mismatches,
        bad_labels,
    };
    report.valid = report.missing_files.is_empty()
        && report.duplicate_paths.is_empty()
        && report.split_mismatches.is_empty()
        && report.bad_labels.is_empty();
    report
}
