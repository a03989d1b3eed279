//! Train-time augmentation (random shift + zoom) and the evaluation-only
//! robustness perturbations.

pub mod geometry;
mod robustness;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::ImageTensor;

pub use geometry::FillMode;
pub use robustness::{apply_robustness, Perturbation, PerturbationKind, RobustnessSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainAugmentConfig {
    pub width_shift_range: f32,
    pub height_shift_range: f32,
    pub zoom_range: f32,
    pub fill_mode: FillMode,
    pub seed: u64,
}

impl Default for TrainAugmentConfig {
    fn default() -> Self {
        Self {
            width_shift_range: 0.3,
            height_shift_range: 0.3,
            zoom_range: 0.2,
            fill_mode: FillMode::Nearest,
            seed: 0,
        }
    }
}

impl TrainAugmentConfig {
    /// No-op configuration.
    pub fn disabled() -> Self {
        Self {
            width_shift_range: 0.0,
            height_shift_range: 0.0,
            zoom_range: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_range("augment.width_shift_range", self.width_shift_range)?;
        check_range("augment.height_shift_range", self.height_shift_range)?;
        check_range("augment.zoom_range", self.zoom_range)
    }
}

fn check_range(path: &str, value: f32) -> Result<()> {
    if (0.0..1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::config(path, format!("{value} is outside [0, 1)")))
    }
}

/// Symmetric draw in `[-bound, bound)`.
fn symmetric(rng: &mut impl Rng, bound: f32) -> f32 {
    bound * (2.0 * rng.gen::<f32>() - 1.0)
}

/// Draws `(dx, dy)` in pixels, bounded by the range fractions of the width
/// and height.
pub fn sample_shift(
    width_range: f32,
    height_range: f32,
    height: usize,
    width: usize,
    rng: &mut impl Rng,
) -> Result<(f32, f32)> {
    check_range("width_shift_range", width_range)?;
    check_range("height_shift_range", height_range)?;
    let dx = symmetric(rng, width_range * width as f32);
    let dy = symmetric(rng, height_range * height as f32);
    Ok((dx, dy))
}

pub fn sample_zoom(zoom_range: f32, rng: &mut impl Rng) -> Result<f32> {
    check_range("zoom_range", zoom_range)?;
    Ok(1.0 + symmetric(rng, zoom_range))
}

pub fn random_shift(
    img: &ImageTensor,
    width_range: f32,
    height_range: f32,
    fill: FillMode,
    rng: &mut impl Rng,
) -> Result<ImageTensor> {
    let (dx, dy) = sample_shift(width_range, height_range, img.height(), img.width(), rng)?;
    Ok(geometry::translate(img, dx, dy, fill))
}

pub fn random_zoom(
    img: &ImageTensor,
    zoom_range: f32,
    fill: FillMode,
    rng: &mut impl Rng,
) -> Result<ImageTensor> {
    let z = sample_zoom(zoom_range, rng)?;
    Ok(geometry::zoom(img, z, fill))
}

/// Shift followed by zoom, both drawn from `rng`. Output stays in `[0, 1]`.
pub fn apply_train_augment(
    img: &ImageTensor,
    cfg: &TrainAugmentConfig,
    rng: &mut impl Rng,
) -> Result<ImageTensor> {
    cfg.validate()?;
    let shifted = random_shift(
        img,
        cfg.width_shift_range,
        cfg.height_shift_range,
        cfg.fill_mode,
        rng,
    )?;
    random_zoom(&shifted, cfg.zoom_range, cfg.fill_mode, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::ValueDomain;
    use crate::seed;

    fn ramp(h: usize, w: usize) -> ImageTensor {
        let data = (0..h * w * 3).map(|i| (i % 97) as f32 / 96.0).collect();
        ImageTensor::new(h, w, 3, ValueDomain::UnitFloat, data).unwrap()
    }

    #[test]
    fn zero_ranges_are_identity() {
        let img = ramp(10, 20);
        let mut rng = seed::rng(3);
        assert_eq!(random_shift(&img, 0.0, 0.0, FillMode::Nearest, &mut rng).unwrap(), img);
        assert_eq!(random_zoom(&img, 0.0, FillMode::Nearest, &mut rng).unwrap(), img);
        let out = apply_train_augment(&img, &TrainAugmentConfig::disabled(), &mut rng).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn bright_pixel_follows_integer_shift() {
        let mut data = vec![0.0; 100 * 200];
        data[50 * 200 + 100] = 1.0;
        let img = ImageTensor::new(100, 200, 1, ValueDomain::UnitFloat, data).unwrap();
        let out = geometry::translate(&img, 10.0, -5.0, FillMode::Constant0);
        let argmax = out
            .data()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!((argmax / 200, argmax % 200), (45, 110));
    }

    #[test]
    fn bright_pixel_follows_sampled_shift() {
        let mut data = vec![0.0; 100 * 200];
        data[50 * 200 + 100] = 1.0;
        let img = ImageTensor::new(100, 200, 1, ValueDomain::UnitFloat, data).unwrap();
        let mut draw_rng = seed::rng(11);
        let (dx, dy) = sample_shift(0.1, 0.1, 100, 200, &mut draw_rng).unwrap();
        let mut rng = seed::rng(11);
        let out = random_shift(&img, 0.1, 0.1, FillMode::Constant0, &mut rng).unwrap();
        let argmax = out
            .data()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        let (y, x) = (argmax / 200, argmax % 200);
        assert!((y as f32 - (50.0 + dy)).abs() <= 1.0, "{y} vs {dy}");
        assert!((x as f32 - (100.0 + dx)).abs() <= 1.0, "{x} vs {dx}");
    }

    #[test]
    fn ranges_outside_unit_interval_rejected() {
        let img = ramp(4, 4);
        let mut rng = seed::rng(0);
        assert!(matches!(
            random_shift(&img, 1.0, 0.0, FillMode::Nearest, &mut rng),
            Err(Error::Config { .. })
        ));
        assert!(random_zoom(&img, -0.1, FillMode::Nearest, &mut rng).is_err());
    }

    #[test]
    fn constant_image_survives_zoom() {
        let img = ImageTensor::filled(12, 24, 3, ValueDomain::UnitFloat, 0.4).unwrap();
        let mut rng = seed::rng(5);
        for _ in 0..20 {
            let out = random_zoom(&img, 0.2, FillMode::Nearest, &mut rng).unwrap();
            assert!(out.data().iter().all(|&v| v == 0.4));
        }
    }

    #[test]
    fn same_seed_same_output() {
        let img = ramp(20, 40);
        let cfg = TrainAugmentConfig::default();
        let a = apply_train_augment(&img, &cfg, &mut seed::rng(9)).unwrap();
        let b = apply_train_augment(&img, &cfg, &mut seed::rng(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), img.shape());
    }
}
