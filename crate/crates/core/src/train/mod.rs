//! Supervised fine-tuning loop: seeded shuffling, augmented batches, RMSProp
//! on the trainable layers, per-epoch history and checkpoints.

mod checkpoint;
mod loss;
mod rmsprop;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::sync_channel;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{apply_train_augment, TrainAugmentConfig};
use crate::dataset::ImageRecord;
use crate::error::{Error, Result};
use crate::model::{Activation, InputBatch, Network};
use crate::preprocess::{self, ImageTensor, PreprocessConfig};
use crate::seed;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{argmax_rows, cross_entropy_grad, cross_entropy_loss, PROB_FLOOR};
pub use rmsprop::{rmsprop_step, RmsPropState};

pub const HISTORY_FILE: &str = "history.csv";
pub const BEST_CHECKPOINT: &str = "ckpt_best.bin";

// seed-derivation stream ids
const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

pub fn epoch_checkpoint_name(epoch: usize) -> String {
    format!("ckpt_epoch{epoch}.bin")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeepBestBy {
    #[default]
    ValAccuracy,
    ValLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub shuffle_seed: u64,
    /// Write `ckpt_epoch{N}.bin` every this many epochs (0: final epoch only).
    pub checkpoint_every: usize,
    pub keep_best_by: KeepBestBy,
    /// Batch-producing threads.
    pub workers: usize,
    /// Bound on batches produced ahead of the training step.
    pub prefetch_depth: usize,
    /// Single-threaded loading and zeroed wall-clock column, for runs that
    /// must be reproducible byte for byte.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-6,
            rmsprop_decay: 0.9,
            rmsprop_epsilon: 1e-7,
            batch_size: 20,
            epochs: 150,
            shuffle_seed: 0,
            checkpoint_every: 10,
            keep_best_by: KeepBestBy::ValAccuracy,
            workers: 2,
            prefetch_depth: 4,
            deterministic: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("train.learning_rate", "must be positive"));
        }
        if !(self.rmsprop_decay > 0.0 && self.rmsprop_decay < 1.0) {
            return Err(Error::config("train.rmsprop_decay", "must be in (0, 1)"));
        }
        if !(self.rmsprop_epsilon.is_finite() && self.rmsprop_epsilon > 0.0) {
            return Err(Error::config("train.rmsprop_epsilon", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::config("train.workers", "must be at least 1"));
        }
        if self.prefetch_depth == 0 {
            return Err(Error::config("train.prefetch_depth", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub config: TrainConfig,
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: Option<usize>,
}

impl TrainingHistory {
    pub fn new(config: TrainConfig) -> Self {
        Self {
            config,
            epochs: Vec::new(),
            best_epoch: None,
        }
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }

    fn is_better(&self, m: &EpochMetrics, than: &EpochMetrics) -> bool {
        match self.config.keep_best_by {
            KeepBestBy::ValAccuracy => m.val_accuracy > than.val_accuracy,
            KeepBestBy::ValLoss => m.val_loss < than.val_loss,
        }
    }

    /// Appends an epoch; returns true when it becomes the best one.
    pub fn push(&mut self, m: EpochMetrics) -> bool {
        let better = match self.best_epoch.and_then(|b| self.epochs.iter().find(|e| e.epoch == b)) {
            Some(best) => self.is_better(&m, best),
            None => true,
        };
        if better {
            self.best_epoch = Some(m.epoch);
        }
        self.epochs.push(m);
        better
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for m in &self.epochs {
            w.serialize(m).map_err(|e| Error::Format(e.to_string()))?;
        }
        if self.epochs.is_empty() {
            w.write_record(["epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy", "wall_seconds"])
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    /// Reads epoch rows from a history CSV.
    pub fn read_csv(path: &Path) -> Result<Vec<EpochMetrics>> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        r.deserialize()
            .map(|row| row.map_err(|e| Error::Format(format!("{}: {e}", path.display()))))
            .collect()
    }
}

/// Preprocessed images held in memory, with their labels. Grayscale images
/// are kept as a single plane and expanded when batched.
#[derive(Debug, Clone)]
pub struct PreparedSet {
    images: Vec<ImageTensor>,
    labels: Vec<usize>,
}

impl PreparedSet {
    pub fn from_images(images: Vec<ImageTensor>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::shape("image and label counts differ"));
        }
        let images = images.into_iter().map(compact).collect::<Result<_>>()?;
        Ok(Self { images, labels })
    }

    pub fn load(records: &[ImageRecord], pp: &PreprocessConfig, workers: usize) -> Result<Self> {
        let images = parallel_map(records, workers, |r| {
            preprocess::preprocess_record(r, pp).and_then(compact)
        })?;
        Ok(Self {
            images,
            labels: records.iter().map(|r| r.label_index).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// The image at `i` as a 3-channel tensor.
    pub fn image(&self, i: usize) -> Result<ImageTensor> {
        expand(&self.images[i])
    }

    /// Un-augmented batch of the given items.
    pub fn batch(&self, indices: &[usize]) -> Result<(InputBatch<f32>, Vec<usize>)> {
        let imgs = indices.iter().map(|&i| self.image(i)).collect::<Result<Vec<_>>>()?;
        Ok((InputBatch::from_images(&imgs)?, indices.iter().map(|&i| self.labels[i]).collect()))
    }

    /// Augmented batch; every item's draw depends only on
    /// `(aug.seed, epoch, batch, position)`.
    pub fn augmented_batch(
        &self,
        indices: &[usize],
        aug: &TrainAugmentConfig,
        epoch: usize,
        batch: usize,
    ) -> Result<(InputBatch<f32>, Vec<usize>)> {
        let imgs = indices
            .iter()
            .enumerate()
            .map(|(j, &i)| {
                let mut rng = seed::rng_from(aug.seed, &[epoch as u64, batch as u64, j as u64]);
                expand(&apply_train_augment(&self.images[i], aug, &mut rng)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((InputBatch::from_images(&imgs)?, indices.iter().map(|&i| self.labels[i]).collect()))
    }
}

fn compact(img: ImageTensor) -> Result<ImageTensor> {
    if img.channels() != 3 {
        return Err(Error::shape(format!("expected 3 channels, got {}", img.channels())));
    }
    let d = img.data();
    if d.chunks_exact(3).all(|p| p[0] == p[1] && p[1] == p[2]) {
        ImageTensor::new(img.height(), img.width(), 1, img.domain(), img.channel(0))
    } else {
        Ok(img)
    }
}

fn expand(img: &ImageTensor) -> Result<ImageTensor> {
    if img.channels() == 1 {
        preprocess::replicate_channels(img)
    } else {
        Ok(img.clone())
    }
}

/// Order-preserving map over `items` using up to `workers` threads.
fn parallel_map<I, O, F>(items: &[I], workers: usize, f: F) -> Result<Vec<O>>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> Result<O> + Sync,
{
    if workers <= 1 || items.len() < 2 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(|| part.iter().map(&f).collect::<Result<Vec<O>>>()))
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("worker panicked")?);
        }
        Ok(out)
    })
}

/// Produces the epoch's batches (possibly on worker threads) and hands them
/// to `consume` strictly in batch order.
fn for_each_batch<F>(
    set: &PreparedSet,
    order: &[usize],
    aug: &TrainAugmentConfig,
    epoch: usize,
    cfg: &TrainConfig,
    mut consume: F,
) -> Result<()>
where
    F: FnMut(usize, InputBatch<f32>, Vec<usize>) -> Result<()>,
{
    let batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
    let n_batches = batches.len();
    let make = |b: usize| set.augmented_batch(batches[b], aug, epoch, b);
    if cfg.deterministic || cfg.workers <= 1 {
        for b in 0..batches.len() {
            let (x, y) = make(b)?;
            consume(b, x, y)?;
        }
        return Ok(());
    }
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    std::thread::scope(|s| {
        let (tx, rx) = sync_channel(cfg.prefetch_depth);
        for _ in 0..cfg.workers {
            let tx = tx.clone();
            let (next, stop, make) = (&next, &stop, &make);
            s.spawn(move || loop {
                let b = next.fetch_add(1, Ordering::SeqCst);
                if b >= n_batches || stop.load(Ordering::SeqCst) {
                    break;
                }
                if tx.send((b, make(b))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending = BTreeMap::new();
        let mut want = 0;
        let result = (|| {
            for (b, item) in rx.iter() {
                pending.insert(b, item);
                while let Some(item) = pending.remove(&want) {
                    let (x, y) = item?;
                    consume(want, x, y)?;
                    want += 1;
                }
            }
            Ok(())
        })();
        stop.store(true, Ordering::SeqCst);
        drop(rx);
        result
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub correct: usize,
}

/// One optimizer step on a batch: forward with dropout, cross-entropy,
/// backward, RMSProp on the trainable arrays.
pub fn train_step(
    net: &mut Network<f32>,
    optimizer: &mut RmsPropState,
    batch: &InputBatch<f32>,
    labels: &[usize],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<StepOutcome> {
    let k = net.config().n_classes;
    let features = net.frozen_features(batch)?;
    let trace = net.forward_train(features, rng);
    let probs = trace.probabilities();
    let loss = cross_entropy_loss(probs, labels, k)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("loss is {loss}")));
    }
    let correct = argmax_rows(probs, k)
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    let dlogits = cross_entropy_grad(probs, labels, k)?;
    let grads = net.backward(&trace, &dlogits);
    optimizer.apply(net, &grads.entries, cfg)?;
    Ok(StepOutcome { loss, correct })
}

/// Validation inputs reduced to frozen-prefix features. The prefix never
/// changes during training, so these are computed once.
#[derive(Debug)]
pub struct FeatureCache {
    chunks: Vec<Activation<f32>>,
    labels: Vec<usize>,
}

impl FeatureCache {
    pub fn build(net: &Network<f32>, set: &PreparedSet, batch_size: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..set.len()).collect();
        let chunks = idx
            .chunks(batch_size.max(1))
            .map(|c| {
                let (x, _) = set.batch(c)?;
                net.frozen_features(&x)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            chunks,
            labels: set.labels().to_vec(),
        })
    }

    /// Dropout-free `(mean loss, accuracy)` of `net` on the cached inputs.
    pub fn evaluate(&self, net: &Network<f32>) -> Result<(f64, f64)> {
        let k = net.config().n_classes;
        let mut probs = Vec::with_capacity(self.labels.len() * k);
        for c in &self.chunks {
            probs.extend(net.forward_from_features(c.clone()));
        }
        let loss = cross_entropy_loss(&probs, &self.labels, k)?;
        let correct = argmax_rows(&probs, k)
            .iter()
            .zip(&self.labels)
            .filter(|(p, l)| p == l)
            .count();
        Ok((loss, correct as f64 / self.labels.len().max(1) as f64))
    }
}

/// Mutable training state: network, optimizer accumulators, history.
#[derive(Debug, Clone)]
pub struct TrainSession {
    pub network: Network<f32>,
    pub optimizer: RmsPropState,
    pub history: TrainingHistory,
    pub class_names: Vec<String>,
}

impl TrainSession {
    pub fn new(network: Network<f32>, class_names: Vec<String>, cfg: &TrainConfig) -> Self {
        Self {
            optimizer: RmsPropState::new(&network),
            network,
            history: TrainingHistory::new(cfg.clone()),
            class_names,
        }
    }

    /// Continues from a checkpoint at its recorded epoch.
    pub fn resume(ckpt: Checkpoint) -> Self {
        let optimizer = ckpt
            .optimizer
            .unwrap_or_else(|| RmsPropState::new(&ckpt.network));
        Self {
            network: ckpt.network,
            optimizer,
            history: ckpt.history,
            class_names: ckpt.class_names,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(
            &self.network,
            &self.class_names,
            &self.history,
            Some(&self.optimizer),
            path,
        )
    }
}

/// Where and how a run writes its artifacts.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub dir: Option<PathBuf>,
}

/// Trains from the session's current epoch up to `cfg.epochs`.
pub fn train(
    session: &mut TrainSession,
    train_records: &[ImageRecord],
    val_records: &[ImageRecord],
    pp: &PreprocessConfig,
    aug: &TrainAugmentConfig,
    cfg: &TrainConfig,
    out: &RunOutput,
) -> Result<TrainingHistory> {
    cfg.validate()?;
    pp.validate()?;
    aug.validate()?;
    let workers = if cfg.deterministic { 1 } else { cfg.workers };
    let train_set = PreparedSet::load(train_records, pp, workers)?;
    let val_set = PreparedSet::load(val_records, pp, workers)?;
    train_prepared(session, &train_set, &val_set, aug, cfg, out)
}

/// `train` on already preprocessed data.
pub fn train_prepared(
    session: &mut TrainSession,
    train_set: &PreparedSet,
    val_set: &PreparedSet,
    aug: &TrainAugmentConfig,
    cfg: &TrainConfig,
    out: &RunOutput,
) -> Result<TrainingHistory> {
    cfg.validate()?;
    aug.validate()?;
    if train_set.is_empty() {
        return Err(Error::config("train", "the training split is empty"));
    }
    if val_set.is_empty() {
        return Err(Error::config("train", "the validation split is empty"));
    }
    let k = session.network.config().n_classes;
    if let Some(&bad) = train_set.labels().iter().chain(val_set.labels()).find(|&&l| l >= k) {
        return Err(Error::config("train", format!("label {bad} exceeds the {k} model classes")));
    }
    if let Some(dir) = &out.dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    session.history.config = cfg.clone();

    let val_cache = FeatureCache::build(&session.network, val_set, cfg.batch_size)?;
    let first_epoch = session.history.len() + 1;
    for epoch in first_epoch..=cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut seed::rng_from(cfg.shuffle_seed, &[SHUFFLE_STREAM, epoch as u64]));

        let mut loss_sum = 0.0;
        let mut correct = 0;
        let net = &mut session.network;
        let optimizer = &mut session.optimizer;
        for_each_batch(train_set, &order, aug, epoch, cfg, |b, x, y| {
            let mut rng = seed::rng_from(cfg.shuffle_seed, &[DROPOUT_STREAM, epoch as u64, b as u64]);
            let step = train_step(net, optimizer, &x, &y, cfg, &mut rng)?;
            loss_sum += step.loss * y.len() as f64;
            correct += step.correct;
            Ok(())
        })?;

        let (val_loss, val_accuracy) = val_cache.evaluate(&session.network)?;
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            val_loss,
            val_accuracy,
            wall_seconds: if cfg.deterministic {
                0.0
            } else {
                started.elapsed().as_secs_f64()
            },
        };
        log::info!(
            "epoch {epoch}/{}: loss {:.4} acc {:.4} val_loss {:.4} val_acc {:.4}",
            cfg.epochs,
            metrics.train_loss,
            metrics.train_accuracy,
            metrics.val_loss,
            metrics.val_accuracy
        );
        let best = session.history.push(metrics);

        if let Some(dir) = &out.dir {
            if best {
                session.save(&dir.join(BEST_CHECKPOINT))?;
            }
            let scheduled = cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0;
            if scheduled || epoch == cfg.epochs {
                session.save(&dir.join(epoch_checkpoint_name(epoch)))?;
            }
            session.history.write_csv(&dir.join(HISTORY_FILE))?;
        }
    }
    Ok(session.history.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_classifier, BackboneWeights, ModelConfig};

    fn tiny_model() -> Network<f32> {
        let cfg = ModelConfig {
            n_classes: 2,
            input_height: 32,
            input_width: 32,
            head_widths: vec![8],
            ..ModelConfig::default()
        };
        build_classifier(&cfg, &BackboneWeights::standin(0)).unwrap()
    }

    fn stripes(n: usize) -> PreparedSet {
        let mut imgs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let label = i % 2;
            let data: Vec<f32> = (0..32 * 32)
                .flat_map(|p| {
                    let (y, x) = (p / 32, p % 32);
                    let v = if label == 0 { (x / 4) % 2 } else { (y / 4) % 2 } as f32;
                    [v, v, v]
                })
                .collect();
            imgs.push(ImageTensor::new(32, 32, 3, preprocess::ValueDomain::UnitFloat, data).unwrap());
            labels.push(label);
        }
        PreparedSet::from_images(imgs, labels).unwrap()
    }

    #[test]
    fn history_csv_header_and_best() {
        let mut h = TrainingHistory::new(TrainConfig::default());
        assert_eq!(h.to_csv().unwrap().lines().next().unwrap(), "epoch,train_loss,train_accuracy,val_loss,val_accuracy,wall_seconds");
        let m = |e, acc| EpochMetrics { epoch: e, train_loss: 1.0, train_accuracy: 0.5, val_loss: 1.0, val_accuracy: acc, wall_seconds: 0.0 };
        assert!(h.push(m(1, 0.5)));
        assert!(h.push(m(2, 0.7)));
        assert!(!h.push(m(3, 0.7)));
        assert_eq!(h.best_epoch, Some(2));
        let csv = h.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("epoch,train_loss,train_accuracy,val_loss,val_accuracy,wall_seconds\n1,"));
    }

    #[test]
    fn config_validation_paths() {
        let bad = TrainConfig { rmsprop_decay: 1.0, ..TrainConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config { path, .. }) if path == "train.rmsprop_decay"));
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..TrainConfig::default() }.validate().is_err());
    }

    #[test]
    fn batch_order_independent_of_workers() {
        let set = stripes(7);
        let order: Vec<usize> = (0..7).rev().collect();
        let aug = TrainAugmentConfig::default();
        let collect = |workers, deterministic| {
            let cfg = TrainConfig { batch_size: 3, workers, prefetch_depth: 1, deterministic, ..TrainConfig::default() };
            let mut seen = Vec::new();
            for_each_batch(&set, &order, &aug, 1, &cfg, |b, x, y| {
                seen.push((b, x.data, y));
                Ok(())
            })
            .unwrap();
            seen
        };
        let reference = collect(1, true);
        assert_eq!(reference.len(), 3);
        assert_eq!(reference[2].2.len(), 1);
        assert_eq!(collect(3, false), reference);
    }

    #[test]
    fn empty_training_set_is_config_error() {
        let mut session = TrainSession::new(tiny_model(), vec!["a".into(), "b".into()], &TrainConfig::default());
        let empty = PreparedSet::from_images(vec![], vec![]).unwrap();
        let err = train_prepared(&mut session, &empty, &stripes(2), &TrainAugmentConfig::disabled(), &TrainConfig::default(), &RunOutput::default());
        assert!(matches!(err, Err(Error::Config { .. })));
    }

    #[test]
    fn one_epoch_smoke_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig { epochs: 1, learning_rate: 1e-3, batch_size: 4, ..TrainConfig::default() };
        let mut session = TrainSession::new(tiny_model(), vec!["a".into(), "b".into()], &cfg);
        let out = RunOutput { dir: Some(dir.path().to_path_buf()) };
        let h = train_prepared(&mut session, &stripes(10), &stripes(4), &TrainAugmentConfig::default(), &cfg, &out).unwrap();
        assert_eq!(h.len(), 1);
        let m = &h.epochs[0];
        assert!(m.train_loss.is_finite() && m.val_loss.is_finite());
        assert!(dir.path().join("ckpt_epoch1.bin").exists());
        assert!(dir.path().join(BEST_CHECKPOINT).exists());
        assert_eq!(TrainingHistory::read_csv(&dir.path().join(HISTORY_FILE)).unwrap(), h.epochs);
    }
}
