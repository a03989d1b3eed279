//! Decoding and fixed-shape preprocessing of raw image files.
//!
//! The model input is a 3-channel grayscale raster: images are reduced to a
//! single luminance channel, replicated back to three channels, resized to
//! the target shape and scaled to `[0, 1]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::ImageRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueDomain {
    /// Integral values in `[0, 255]`.
    Uint8,
    /// Real values in `[0, 1]`.
    UnitFloat,
}

impl ValueDomain {
    fn max(self) -> f32 {
        match self {
            ValueDomain::Uint8 => 255.0,
            ValueDomain::UnitFloat => 1.0,
        }
    }
}

/// Row-major `height × width × channels` raster (channels interleaved).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    domain: ValueDomain,
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        domain: ValueDomain,
        data: Vec<f32>,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::shape(format!("channels must be 1 or 3, got {channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::shape(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        let max = domain.max();
        if let Some(v) = data.iter().find(|v| !(0.0..=max).contains(*v)) {
            return Err(Error::shape(format!("value {v} outside the {domain:?} domain")));
        }
        Ok(Self {
            height,
            width,
            channels,
            domain,
            data,
        })
    }

    /// Constant-valued tensor.
    pub fn filled(
        height: usize,
        width: usize,
        channels: usize,
        domain: ValueDomain,
        value: f32,
    ) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            domain,
            vec![value; height * width * channels],
        )
    }

    /// Builds a tensor whose values are already known to be in range; used by
    /// the pixel operations in this crate after clamping.
    pub(crate) fn from_raw(
        height: usize,
        width: usize,
        channels: usize,
        domain: ValueDomain,
        data: Vec<f32>,
    ) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            domain,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn domain(&self) -> ValueDomain {
        self.domain
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Copy of one channel as a `height × width` plane.
    pub fn channel(&self, c: usize) -> Vec<f32> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    /// Divides by 255, moving a `Uint8` tensor to the unit domain.
    pub fn to_unit(&self) -> ImageTensor {
        match self.domain {
            ValueDomain::UnitFloat => self.clone(),
            ValueDomain::Uint8 => ImageTensor::from_raw(
                self.height,
                self.width,
                self.channels,
                ValueDomain::UnitFloat,
                self.data.iter().map(|v| v / 255.0).collect(),
            ),
        }
    }

    /// Quantizes to 8-bit RGB for writing to disk.
    pub fn to_rgb8(&self) -> image::RgbImage {
        let scale = match self.domain {
            ValueDomain::Uint8 => 1.0,
            ValueDomain::UnitFloat => 255.0,
        };
        let mut out = image::RgbImage::new(self.width as u32, self.height as u32);
        for (i, px) in out.pixels_mut().enumerate() {
            for c in 0..3 {
                let src = if self.channels == 1 { 0 } else { c };
                let v = (self.data[i * self.channels + src] * scale).round_ties_even();
                px.0[c] = v.clamp(0.0, 255.0) as u8;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub target_height: usize,
    pub target_width: usize,
    pub grayscale: bool,
    pub scale_to_unit: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_height: 100,
            target_width: 200,
            grayscale: true,
            scale_to_unit: true,
        }
    }
}

/// Smallest spatial size that survives the five 2x poolings of the backbone.
pub const MIN_INPUT_SIDE: usize = 32;

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_height < MIN_INPUT_SIDE {
            return Err(Error::config(
                "preprocess.target_height",
                format!("must be at least {MIN_INPUT_SIDE}"),
            ));
        }
        if self.target_width < MIN_INPUT_SIDE {
            return Err(Error::config(
                "preprocess.target_width",
                format!("must be at least {MIN_INPUT_SIDE}"),
            ));
        }
        Ok(())
    }
}

/// Decodes a PNG or JPEG payload into an 8-bit RGB tensor.
pub fn decode_image(bytes: &[u8]) -> Result<ImageTensor> {
    let img = image::load_from_memory(bytes).map_err(|e| Error::Decode(e.to_string()))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(f32::from).collect();
    Ok(ImageTensor::from_raw(
        h as usize,
        w as usize,
        3,
        ValueDomain::Uint8,
        data,
    ))
}

pub fn load_image(path: &Path) -> Result<ImageTensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|e| match e {
        Error::Decode(msg) => Error::Decode(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// BT.601 luma, rounded half-to-even.
pub fn luminance(r: f32, g: f32, b: f32) -> f32 {
    let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    y.round_ties_even().clamp(0.0, 255.0) as f32
}

pub fn to_grayscale(img: &ImageTensor) -> Result<ImageTensor> {
    if img.channels != 3 {
        return Err(Error::shape(format!(
            "grayscale conversion needs 3 channels, got {}",
            img.channels
        )));
    }
    let data = img
        .data
        .chunks_exact(3)
        .map(|px| match img.domain {
            ValueDomain::Uint8 => luminance(px[0], px[1], px[2]),
            ValueDomain::UnitFloat => {
                let y = 0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2]);
                y.clamp(0.0, 1.0) as f32
            }
        })
        .collect();
    Ok(ImageTensor::from_raw(
        img.height,
        img.width,
        1,
        img.domain,
        data,
    ))
}

pub fn replicate_channels(img: &ImageTensor) -> Result<ImageTensor> {
    if img.channels != 1 {
        return Err(Error::shape(format!(
            "channel replication needs 1 channel, got {}",
            img.channels
        )));
    }
    let data = img.data.iter().flat_map(|&v| [v, v, v]).collect();
    Ok(ImageTensor::from_raw(
        img.height,
        img.width,
        3,
        img.domain,
        data,
    ))
}

#[inline]
pub(crate) fn lerp(a: f32, b: f32, t: f32) -> f32 {
    // exact when a == b or t == 0
    a + t * (b - a)
}

/// Source coordinate and interpolation weight along one axis, using
/// half-pixel centers.
fn axis_taps(dst: usize, src: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, (s - i0 as f64) as f32)
        })
        .collect()
}

/// Bilinear resize. `Uint8` outputs are rounded half-to-even.
pub fn resize(img: &ImageTensor, height: usize, width: usize) -> Result<ImageTensor> {
    if height == 0 || width == 0 {
        return Err(Error::shape(format!(
            "resize target must be positive, got {height}x{width}"
        )));
    }
    if (height, width) == (img.height, img.width) {
        return Ok(img.clone());
    }
    let rows = axis_taps(height, img.height);
    let cols = axis_taps(width, img.width);
    let ch = img.channels;
    let mut data = Vec::with_capacity(height * width * ch);
    for &(y0, y1, fy) in &rows {
        for &(x0, x1, fx) in &cols {
            for c in 0..ch {
                let top = lerp(img.get(y0, x0, c), img.get(y0, x1, c), fx);
                let bottom = lerp(img.get(y1, x0, c), img.get(y1, x1, c), fx);
                let v = lerp(top, bottom, fy);
                data.push(match img.domain {
                    ValueDomain::Uint8 => v.round_ties_even().clamp(0.0, 255.0),
                    ValueDomain::UnitFloat => v.clamp(0.0, 1.0),
                });
            }
        }
    }
    Ok(ImageTensor::from_raw(height, width, ch, img.domain, data))
}

/// Runs the model-input pipeline on an already decoded image.
pub fn preprocess_image(img: &ImageTensor, cfg: &PreprocessConfig) -> Result<ImageTensor> {
    let mut out = if cfg.grayscale {
        replicate_channels(&to_grayscale(img)?)?
    } else {
        img.clone()
    };
    out = resize(&out, cfg.target_height, cfg.target_width)?;
    if cfg.scale_to_unit {
        out = out.to_unit();
    }
    Ok(out)
}

pub fn preprocess_path(path: &Path, cfg: &PreprocessConfig) -> Result<ImageTensor> {
    preprocess_image(&load_image(path)?, cfg)
}

pub fn preprocess_record(record: &ImageRecord, cfg: &PreprocessConfig) -> Result<ImageTensor> {
    preprocess_path(&record.path, cfg)
}
