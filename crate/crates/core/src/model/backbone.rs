//! The VGG16 convolutional stack: canonical layer list and weight archives.

use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};
use serde_json::json;

use crate::archive::{self, Archive, Tensor};
use crate::error::{Error, Result};
use crate::seed;

pub const WEIGHTS_MAGIC: &[u8; 8] = b"AIDVGG16";
pub const WEIGHTS_VERSION: u32 = 1;

/// Default file name inside the weight cache directory.
pub const DEFAULT_WEIGHTS_FILE: &str = "vgg16_backbone.bin";
pub const CACHE_ENV: &str = "ACTIONID_CACHE";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackboneLayer {
    Input,
    Conv { block: usize, index: usize, in_ch: usize, out_ch: usize },
    Pool { block: usize },
}

impl BackboneLayer {
    pub fn name(&self) -> String {
        match *self {
            BackboneLayer::Input => "input".to_string(),
            BackboneLayer::Conv { block, index, .. } => format!("block{block}_conv{index}"),
            BackboneLayer::Pool { block } => format!("block{block}_pool"),
        }
    }
}

/// `(conv layers, output channels)` per block.
const BLOCKS: [(usize, usize); 5] = [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)];

/// The 19-entry layer list: input, then each block's convolutions followed
/// by its pooling layer.
pub fn canonical_layers() -> Vec<BackboneLayer> {
    let mut layers = vec![BackboneLayer::Input];
    let mut in_ch = 3;
    for (b, &(convs, out_ch)) in BLOCKS.iter().enumerate() {
        for i in 0..convs {
            layers.push(BackboneLayer::Conv {
                block: b + 1,
                index: i + 1,
                in_ch,
                out_ch,
            });
            in_ch = out_ch;
        }
        layers.push(BackboneLayer::Pool { block: b + 1 });
    }
    layers
}

pub fn backbone_len() -> usize {
    canonical_layers().len()
}

pub const FEATURE_CHANNELS: usize = 512;

/// Weights for the 13 convolutions, stored `[out][in][3][3]` with biases.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneWeights {
    pub convs: Vec<(Vec<f32>, Vec<f32>)>,
    pub source: String,
    pub content_hash: String,
}

fn conv_specs() -> Vec<(String, usize, usize)> {
    canonical_layers()
        .into_iter()
        .filter_map(|l| match l {
            BackboneLayer::Conv { in_ch, out_ch, .. } => Some((l.name(), in_ch, out_ch)),
            _ => None,
        })
        .collect()
}

fn zero_mean_rescaled(filter: &mut [f32]) {
    let n = filter.len() as f32;
    let energy = |f: &[f32]| f.iter().map(|v| v * v).sum::<f32>();
    let before = energy(filter);
    let mean = filter.iter().sum::<f32>() / n;
    filter.iter_mut().for_each(|v| *v -= mean);
    let after = energy(filter);
    if after > 0.0 {
        let scale = (before / after).sqrt();
        filter.iter_mut().for_each(|v| *v *= scale);
    }
}

impl BackboneWeights {
    /// Seeded stand-in for pretrained weights, used where the real archive is
    /// unavailable (tests, desk runs). Filters are He-normal draws shifted to
    /// zero mean and rescaled back to the He variance, so they respond to
    /// structure rather than to overall brightness.
    pub fn standin(seed: u64) -> Self {
        let convs = conv_specs()
            .into_iter()
            .enumerate()
            .map(|(i, (_, in_ch, out_ch))| {
                let fan_in = (in_ch * 9) as f32;
                let normal = Normal::new(0.0f32, (2.0 / fan_in).sqrt()).expect("positive std");
                let mut rng = seed::rng_from(seed, &[i as u64]);
                let fan = in_ch * 9;
                let mut w: Vec<f32> = (0..out_ch * fan).map(|_| normal.sample(&mut rng)).collect();
                for filter in w.chunks_mut(fan) {
                    zero_mean_rescaled(filter);
                }
                (w, vec![0.0; out_ch])
            })
            .collect();
        let mut weights = BackboneWeights {
            convs,
            source: format!("standin:{seed}"),
            content_hash: String::new(),
        };
        weights.content_hash = archive::sha256_hex(
            &weights.to_archive().to_bytes(WEIGHTS_MAGIC, WEIGHTS_VERSION).expect("serializable"),
        );
        weights
    }

    fn to_archive(&self) -> Archive {
        let mut tensors = Vec::new();
        for ((name, in_ch, out_ch), (w, b)) in conv_specs().into_iter().zip(&self.convs) {
            tensors.push(Tensor {
                name: format!("{name}.weight"),
                shape: vec![out_ch, in_ch, 3, 3],
                data: w.clone(),
            });
            tensors.push(Tensor {
                name: format!("{name}.bias"),
                shape: vec![out_ch],
                data: b.clone(),
            });
        }
        Archive {
            meta: json!({ "architecture": "vgg16", "source": self.source }),
            tensors,
        }
    }

    fn from_archive(archive: &Archive, content_hash: String) -> Result<Self> {
        let mut convs = Vec::new();
        for (name, in_ch, out_ch) in conv_specs() {
            let fetch = |suffix: &str, shape: Vec<usize>| -> Result<Vec<f32>> {
                let key = format!("{name}.{suffix}");
                let t = archive
                    .get(&key)
                    .ok_or_else(|| Error::WeightLoad(format!("missing tensor `{key}`")))?;
                if t.shape != shape {
                    return Err(Error::WeightLoad(format!(
                        "tensor `{key}` has shape {:?}, expected {shape:?}",
                        t.shape
                    )));
                }
                Ok(t.data.clone())
            };
            convs.push((
                fetch("weight", vec![out_ch, in_ch, 3, 3])?,
                fetch("bias", vec![out_ch])?,
            ));
        }
        let source = archive.meta["source"].as_str().unwrap_or("unknown").to_string();
        Ok(BackboneWeights {
            convs,
            source,
            content_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_archive().to_bytes(WEIGHTS_MAGIC, WEIGHTS_VERSION)?;
        std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(archive::sha256_hex(&bytes))
    }

    /// Loads an archive; `expected_hash`, when given, must match the SHA-256
    /// of the file.
    pub fn load(path: &Path, expected_hash: Option<&str>) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::WeightLoad(format!("{}: {e}", path.display())))?;
        let hash = archive::sha256_hex(&bytes);
        if let Some(want) = expected_hash {
            if !want.eq_ignore_ascii_case(&hash) {
                return Err(Error::WeightLoad(format!(
                    "{} has content hash {hash}, expected {want}",
                    path.display()
                )));
            }
        }
        let archive = Archive::from_bytes(&bytes, WEIGHTS_MAGIC, WEIGHTS_VERSION)
            .map_err(|e| Error::WeightLoad(format!("{}: {e}", path.display())))?;
        Self::from_archive(&archive, hash)
    }

    /// Converts torchvision-layout VGG16 weights (`features.N.weight`, OIHW)
    /// stored as safetensors.
    pub fn import_safetensors(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::WeightLoad(format!("{}: {e}", path.display())))?;
        let st = safetensors::SafeTensors::deserialize(&bytes)
            .map_err(|e| Error::WeightLoad(format!("{}: {e}", path.display())))?;
        // index of each convolution inside torchvision's `features` sequence
        const FEATURE_INDEX: [usize; 13] = [0, 2, 5, 7, 10, 12, 14, 17, 19, 21, 24, 26, 28];
        let mut convs = Vec::new();
        for ((_, in_ch, out_ch), idx) in conv_specs().into_iter().zip(FEATURE_INDEX) {
            let fetch = |suffix: &str, shape: &[usize]| -> Result<Vec<f32>> {
                let key = format!("features.{idx}.{suffix}");
                let view = st
                    .tensor(&key)
                    .map_err(|e| Error::WeightLoad(format!("`{key}`: {e}")))?;
                if view.dtype() != safetensors::Dtype::F32 || view.shape() != shape {
                    return Err(Error::WeightLoad(format!(
                        "`{key}` is {:?} {:?}, expected F32 {shape:?}",
                        view.dtype(),
                        view.shape()
                    )));
                }
                Ok(view
                    .data()
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                    .collect())
            };
            convs.push((
                fetch("weight", &[out_ch, in_ch, 3, 3])?,
                fetch("bias", &[out_ch])?,
            ));
        }
        let mut weights = BackboneWeights {
            convs,
            source: format!("safetensors:{}", path.display()),
            content_hash: String::new(),
        };
        weights.content_hash = archive::sha256_hex(
            &weights.to_archive().to_bytes(WEIGHTS_MAGIC, WEIGHTS_VERSION)?,
        );
        Ok(weights)
    }

    pub fn param_count(&self) -> usize {
        self.convs.iter().map(|(w, b)| w.len() + b.len()).sum()
    }
}

/// Resolves the backbone archive path: explicit path first, then
/// `$ACTIONID_CACHE/vgg16_backbone.bin`.
pub fn resolve_weights_path(explicit: Option<&Path>) -> Result<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p.to_path_buf());
    }
    match std::env::var_os(CACHE_ENV) {
        Some(dir) => Ok(PathBuf::from(dir).join(DEFAULT_WEIGHTS_FILE)),
        None => Err(Error::WeightLoad(format!(
            "no backbone weights given and {CACHE_ENV} is not set"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_list_matches_reference_naming() {
        let names: Vec<String> = canonical_layers().iter().map(|l| l.name()).collect();
        assert_eq!(names.len(), 19);
        assert_eq!(names[0], "input");
        assert_eq!(names[3], "block1_pool");
        assert_eq!(names[13], "block4_conv3");
        assert_eq!(names[14], "block4_pool");
        assert_eq!(names[18], "block5_pool");
    }

    #[test]
    fn standin_round_trips_with_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let w = BackboneWeights::standin(3);
        let hash = w.save(&path).unwrap();
        assert_eq!(hash, w.content_hash);
        let loaded = BackboneWeights::load(&path, Some(&hash)).unwrap();
        assert_eq!(loaded.convs, w.convs);
        assert!(matches!(
            BackboneWeights::load(&path, Some("00")),
            Err(Error::WeightLoad(_))
        ));
    }

    #[test]
    fn missing_or_corrupt_weights() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nope.bin");
        assert!(matches!(BackboneWeights::load(&path, None), Err(Error::WeightLoad(_))));
        std::fs::write(&path, b"garbage").unwrap();
        assert!(matches!(BackboneWeights::load(&path, None), Err(Error::WeightLoad(_))));
    }

    #[test]
    fn safetensors_import_uses_torchvision_keys() {
        let dir = tempfile::tempdir().unwrap();
        let reference = BackboneWeights::standin(8);
        let idx = [0, 2, 5, 7, 10, 12, 14, 17, 19, 21, 24, 26, 28];
        let mut owned = Vec::new();
        for ((name, in_ch, out_ch), (w, b)) in conv_specs().iter().zip(&reference.convs) {
            let _ = name;
            owned.push((vec![*out_ch, *in_ch, 3, 3], w.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>()));
            owned.push((vec![*out_ch], b.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>()));
        }
        let mut views = Vec::new();
        for (i, (shape, data)) in owned.iter().enumerate() {
            let key = format!("features.{}.{}", idx[i / 2], if i % 2 == 0 { "weight" } else { "bias" });
            views.push((key, safetensors::tensor::TensorView::new(safetensors::Dtype::F32, shape.clone(), data).unwrap()));
        }
        let path = dir.path().join("vgg16.safetensors");
        safetensors::serialize_to_file(views, &None, &path).unwrap();
        let imported = BackboneWeights::import_safetensors(&path).unwrap();
        assert_eq!(imported.convs, reference.convs);
    }
}
