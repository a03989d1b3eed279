use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RmsPropState, TrainingHistory};
use crate::archive::{Archive, Tensor};
use crate::error::{Error, Result};
use crate::model::{LayerFreezeMask, ModelConfig, Network};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"AIDCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

const OPTIMIZER_PREFIX: &str = "rmsprop/";

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    model_config: ModelConfig,
    classes: Vec<String>,
    freeze_mask: LayerFreezeMask,
    history: TrainingHistory,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub network: Network<f32>,
    pub class_names: Vec<String>,
    pub history: TrainingHistory,
    pub optimizer: Option<RmsPropState>,
}

/// Writes every parameter array (frozen ones included), the class registry,
/// freeze mask, history and, when given, the optimizer accumulators.
pub fn save_checkpoint(
    net: &Network<f32>,
    class_names: &[String],
    history: &TrainingHistory,
    optimizer: Option<&RmsPropState>,
    path: &Path,
) -> Result<()> {
    let meta = Meta {
        format_version: CHECKPOINT_VERSION,
        model_config: net.config().clone(),
        classes: class_names.to_vec(),
        freeze_mask: net.freeze_mask().clone(),
        history: history.clone(),
    };
    let mut tensors = net.export_tensors();
    if let Some(opt) = optimizer {
        for (slot, s) in opt.slots.iter().zip(&opt.mean_square) {
            tensors.push(Tensor {
                name: format!("{OPTIMIZER_PREFIX}{}", net.param_name(*slot)),
                shape: net.param_shape(*slot),
                data: s.clone(),
            });
        }
    }
    Archive {
        meta: serde_json::to_value(meta)?,
        tensors,
    }
    .write(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let archive = Archive::read(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let meta: Meta = serde_json::from_value(archive.meta)
        .map_err(|e| Error::Format(format!("{}: checkpoint header: {e}", path.display())))?;
    if meta.classes.len() != meta.model_config.n_classes {
        return Err(Error::Format(format!(
            "{} class names for a {}-class model",
            meta.classes.len(),
            meta.model_config.n_classes
        )));
    }
    let (params, opt): (Vec<Tensor>, Vec<Tensor>) = archive
        .tensors
        .into_iter()
        .partition(|t| !t.name.starts_with(OPTIMIZER_PREFIX));
    let network = Network::from_tensors(&meta.model_config, &params).map_err(|e| match e {
        Error::Config { .. } | Error::Shape(_) => Error::Format(e.to_string()),
        other => other,
    })?;
    if network.freeze_mask() != &meta.freeze_mask {
        return Err(Error::Format("stored freeze mask disagrees with the model config".into()));
    }
    let optimizer = if opt.is_empty() {
        None
    } else {
        let mut state = RmsPropState::new(&network);
        if state.slots.len() != opt.len() {
            return Err(Error::Format("optimizer state does not cover the trainable arrays".into()));
        }
        for ((slot, s), t) in state.slots.iter().zip(state.mean_square.iter_mut()).zip(opt) {
            let want = format!("{OPTIMIZER_PREFIX}{}", network.param_name(*slot));
            if t.name != want || t.data.len() != s.len() {
                return Err(Error::Format(format!("unexpected optimizer tensor `{}`", t.name)));
            }
            *s = t.data;
        }
        Some(state)
    };
    Ok(Checkpoint {
        network,
        class_names: meta.classes,
        history: meta.history,
        optimizer,
    })
}
