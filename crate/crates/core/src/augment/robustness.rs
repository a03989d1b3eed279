use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::geometry::{self, FillMode, Homography};
use crate::error::{Error, Result};
use crate::preprocess::{resize, ImageTensor};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Rotation,
    GaussianNoise,
    GaussianBlur,
    Perspective,
    Crop,
    Sharpen,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 6] = [
        PerturbationKind::Rotation,
        PerturbationKind::GaussianNoise,
        PerturbationKind::GaussianBlur,
        PerturbationKind::Perspective,
        PerturbationKind::Crop,
        PerturbationKind::Sharpen,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationKind::Rotation => "rotation",
            PerturbationKind::GaussianNoise => "gaussian_noise",
            PerturbationKind::GaussianBlur => "gaussian_blur",
            PerturbationKind::Perspective => "perspective",
            PerturbationKind::Crop => "crop",
            PerturbationKind::Sharpen => "sharpen",
        }
    }

    /// Accepted parameter names with their defaults.
    fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            PerturbationKind::Rotation => &[("max_degrees", 15.0)],
            PerturbationKind::GaussianNoise => &[("sigma", 0.05)],
            PerturbationKind::GaussianBlur => &[("sigma", 1.0)],
            PerturbationKind::Perspective => &[("max_fraction", 0.10)],
            PerturbationKind::Crop => &[("max_fraction", 0.10)],
            PerturbationKind::Sharpen => &[("alpha", 1.0), ("blur_sigma", 1.0)],
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PerturbationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config("perturb.kind", format!("unknown perturbation `{s}`")))
    }
}

/// Serialized form `{kind, params, seed}`; absent params take the kind's
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessSpec {
    pub kind: PerturbationKind,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fill_mode: FillMode,
}

/// Fully resolved perturbation with validated parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    Rotation { max_degrees: f32 },
    GaussianNoise { sigma: f32 },
    GaussianBlur { sigma: f32 },
    Perspective { max_fraction: f32 },
    Crop { max_fraction: f32 },
    Sharpen { alpha: f32, blur_sigma: f32 },
}

impl RobustnessSpec {
    pub fn new(kind: PerturbationKind, seed: u64) -> Self {
        Self {
            kind,
            params: BTreeMap::new(),
            seed,
            fill_mode: FillMode::Nearest,
        }
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    /// The suite used by the reference robustness table: every kind at its
    /// default strength.
    pub fn default_suite(seed: u64) -> Vec<RobustnessSpec> {
        PerturbationKind::ALL
            .into_iter()
            .enumerate()
            .map(|(i, k)| RobustnessSpec::new(k, seed.wrapping_add(i as u64)))
            .collect()
    }

    /// Parses the CLI form `kind[:k=v,...]`.
    pub fn parse_cli(text: &str, seed: u64) -> Result<Self> {
        let (kind, rest) = match text.split_once(':') {
            Some((k, r)) => (k, Some(r)),
            None => (text, None),
        };
        let mut spec = RobustnessSpec::new(kind.trim().parse()?, seed);
        for pair in rest.into_iter().flat_map(|r| r.split(',')).filter(|p| !p.is_empty()) {
            let (k, v) = pair.split_once('=').ok_or_else(|| {
                Error::config("perturb", format!("expected key=value, got `{pair}`"))
            })?;
            let k = k.trim();
            if k == "seed" {
                spec.seed = v.trim().parse().map_err(|_| {
                    Error::config("perturb.seed", format!("`{v}` is not an integer"))
                })?;
                continue;
            }
            let value: f64 = v.trim().parse().map_err(|_| {
                Error::config(format!("perturb.params.{k}"), format!("`{v}` is not a number"))
            })?;
            spec.params.insert(k.to_string(), value);
        }
        spec.resolve()?;
        Ok(spec)
    }

    fn param(&self, name: &str) -> f32 {
        let default = self
            .kind
            .defaults()
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
            .unwrap_or_default();
        self.params.get(name).copied().unwrap_or(default) as f32
    }

    pub fn resolve(&self) -> Result<Perturbation> {
        let known = self.kind.defaults();
        if let Some(bad) = self.params.keys().find(|k| !known.iter().any(|(n, _)| n == k)) {
            return Err(Error::config(
                format!("perturb.params.{bad}"),
                format!("not a parameter of {}", self.kind),
            ));
        }
        let check = |name: &str, lo: f32, hi: f32| -> Result<f32> {
            let v = self.param(name);
            if v.is_finite() && v >= lo && v <= hi {
                Ok(v)
            } else {
                Err(Error::config(
                    format!("perturb.params.{name}"),
                    format!("{v} is outside [{lo}, {hi}]"),
                ))
            }
        };
        Ok(match self.kind {
            PerturbationKind::Rotation => Perturbation::Rotation {
                max_degrees: check("max_degrees", 0.0, 180.0)?,
            },
            PerturbationKind::GaussianNoise => Perturbation::GaussianNoise {
                sigma: check("sigma", 0.0, f32::MAX)?,
            },
            PerturbationKind::GaussianBlur => Perturbation::GaussianBlur {
                sigma: check("sigma", 0.0, 64.0)?,
            },
            PerturbationKind::Perspective => Perturbation::Perspective {
                max_fraction: check("max_fraction", 0.0, 0.45)?,
            },
            PerturbationKind::Crop => Perturbation::Crop {
                max_fraction: check("max_fraction", 0.0, 0.45)?,
            },
            PerturbationKind::Sharpen => Perturbation::Sharpen {
                alpha: check("alpha", 0.0, f32::MAX)?,
                blur_sigma: check("blur_sigma", 0.0, 64.0)?,
            },
        })
    }

    /// Applies this perturbation to the `index`-th evaluation image. The
    /// per-image generator is keyed by `(seed, index)`.
    pub fn apply_indexed(&self, img: &ImageTensor, index: u64) -> Result<ImageTensor> {
        let mut rng = seed::rng_from(self.seed, &[index]);
        apply_robustness(img, self, &mut rng)
    }
}

/// Applies one robustness perturbation. The output has the input's shape and
/// stays within `[0, 1]`.
pub fn apply_robustness(
    img: &ImageTensor,
    spec: &RobustnessSpec,
    rng: &mut impl Rng,
) -> Result<ImageTensor> {
    let fill = spec.fill_mode;
    let (h, w, _) = img.shape();
    Ok(match spec.resolve()? {
        Perturbation::Rotation { max_degrees } => {
            let angle = max_degrees * (2.0 * rng.gen::<f32>() - 1.0);
            geometry::rotate(img, angle, fill)
        }
        Perturbation::GaussianNoise { sigma } => {
            if sigma == 0.0 {
                return Ok(img.clone());
            }
            let normal = Normal::new(0.0f32, sigma)
                .map_err(|e| Error::config("perturb.params.sigma", e.to_string()))?;
            let ch = img.channels();
            let mut data = img.data().to_vec();
            for px in data.chunks_exact_mut(ch) {
                let n = normal.sample(rng);
                for v in px {
                    *v = (*v + n).clamp(0.0, 1.0);
                }
            }
            ImageTensor::from_raw(h, w, ch, img.domain(), data)
        }
        Perturbation::GaussianBlur { sigma } => geometry::gaussian_blur(img, sigma),
        Perturbation::Perspective { max_fraction } => {
            if max_fraction == 0.0 {
                return Ok(img.clone());
            }
            let d = f64::from(max_fraction) * h.min(w) as f64;
            let (x1, y1) = ((w - 1) as f64, (h - 1) as f64);
            let corners = [(0.0, 0.0), (x1, 0.0), (x1, y1), (0.0, y1)];
            let mut moved = corners;
            for c in &mut moved {
                c.0 += d * (2.0 * rng.gen::<f64>() - 1.0);
                c.1 += d * (2.0 * rng.gen::<f64>() - 1.0);
            }
            // output corners sample from the displaced source corners
            let inverse = Homography::from_correspondences(corners, moved).ok_or_else(|| {
                Error::Numeric("degenerate perspective transform".to_string())
            })?;
            geometry::perspective(img, &inverse, fill)
        }
        Perturbation::Crop { max_fraction } => {
            let mut margin = |len: usize| -> usize {
                (rng.gen::<f32>() * max_fraction * len as f32).floor() as usize
            };
            let (top, bottom, left, right) = (margin(h), margin(h), margin(w), margin(w));
            let (ch_, cw) = (h - top - bottom, w - left - right);
            if (ch_, cw) == (h, w) {
                return Ok(img.clone());
            }
            let ch = img.channels();
            let mut data = Vec::with_capacity(ch_ * cw * ch);
            for y in top..top + ch_ {
                let row = (y * w + left) * ch;
                data.extend_from_slice(&img.data()[row..row + cw * ch]);
            }
            let cropped = ImageTensor::from_raw(ch_, cw, ch, img.domain(), data);
            resize(&cropped, h, w)?
        }
        Perturbation::Sharpen { alpha, blur_sigma } => {
            if alpha == 0.0 {
                return Ok(img.clone());
            }
            let blurred = geometry::gaussian_blur(img, blur_sigma);
            let data = img
                .data()
                .iter()
                .zip(blurred.data())
                .map(|(&v, &b)| (v + alpha * (v - b)).clamp(0.0, 1.0))
                .collect();
            ImageTensor::from_raw(h, w, img.channels(), img.domain(), data)
        }
    })
}
