use std::f32::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{scan_dataset, DatasetManifest};
use crate::error::{Error, Result};
use crate::seed;

/// Number of stripe orientations; classes cycle through them before
/// switching motif.
const ORIENTATIONS: usize = 6;
const MOTIFS: usize = 3;

/// Texture family of one class: an oriented periodic motif. Families differ
/// in orientation (30 degree steps) and motif shape (grating, thin bars, dashed bars), both of which survive
/// grayscale conversion, translation and moderate zoom.
#[derive(Debug, Clone, Copy)]
struct Family {
    angle: f32,
    motif: usize,
    period_scale: f32,
}

impl Family {
    fn for_class(class: usize) -> Self {
        let angle = (class % ORIENTATIONS) as f32 * PI / ORIENTATIONS as f32;
        let motif = (class / ORIENTATIONS) % MOTIFS;
        let cycle = class / (ORIENTATIONS * MOTIFS);
        Family {
            angle,
            motif,
            period_scale: 1.0 + 0.45 * cycle as f32,
        }
    }

    fn base_period(&self, side: f32) -> f32 {
        let frac = match self.motif {
            0 => 0.30,
            1 => 0.22,
            _ => 0.26,
        };
        (side * frac * self.period_scale).max(3.0)
    }

    /// Intensity in [-1, 1] at rotated coordinates (u along the stripe normal,
    /// v along the stripe).
    fn motif_value(&self, u: f32, v: f32, period: f32) -> f32 {
        let phase_u = 2.0 * PI * u / period;
        match self.motif {
            0 => phase_u.sin(),
            1 => {
                // thin bright bars on a dark field
                let t = (u / period).rem_euclid(1.0);
                if t < 0.25 {
                    1.0
                } else {
                    -0.6
                }
            }
            _ => {
                // dashed bars; the dash gaps break the 90 degree symmetry a
                // dot lattice would have
                let t = (u / period).rem_euclid(1.0);
                let s = (v / (2.5 * period)).rem_euclid(1.0);
                if t < 0.3 && s < 0.6 {
                    1.0
                } else {
                    -0.5
                }
            }
        }
    }
}

/// Writes `per_class` PNG images for each of `n_classes` classes under
/// `out/class_XX/` and returns the scanned manifest. Output files depend only
/// on the arguments.
pub fn generate_synthetic_dataset(
    n_classes: usize,
    per_class: usize,
    height: usize,
    width: usize,
    seed: u64,
    out: &Path,
) -> Result<DatasetManifest> {
    if n_classes < 2 {
        return Err(Error::config("synth.classes", "need at least 2 classes"));
    }
    if per_class < 1 {
        return Err(Error::config("synth.per_class", "need at least 1 image per class"));
    }
    if height == 0 || width == 0 {
        return Err(Error::config("synth.size", "image size must be positive"));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let digits = (n_classes - 1).to_string().len().max(2);
    for class in 0..n_classes {
        let dir = out.join(format!("class_{class:0digits$}"));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let family = Family::for_class(class);
        for i in 0..per_class {
            let mut rng = seed::rng_from(seed, &[class as u64, i as u64]);
            let img = render(&family, height, width, &mut rng);
            let path = dir.join(format!("img_{i:04}.png"));
            img.save_with_format(&path, image::ImageFormat::Png)
                .map_err(|e| match e {
                    image::ImageError::IoError(io) => Error::io(&path, io),
                    other => Error::io(&path, std::io::Error::other(other)),
                })?;
        }
    }
    scan_dataset(out)
}

fn render(family: &Family, height: usize, width: usize, rng: &mut seed::Rng) -> image::RgbImage {
    let side = height.min(width) as f32;
    let angle = family.angle + rng.gen_range(-4.0f32..4.0).to_radians();
    let period = family.base_period(side) * rng.gen_range(0.94f32..1.06);
    let offset_u = rng.gen_range(0.0..period);
    let offset_v = rng.gen_range(0.0..period);
    let contrast = rng.gen_range(0.32f32..0.45);
    let mean = rng.gen_range(0.45f32..0.55);
    let tint = [
        rng.gen_range(0.85f32..1.0),
        rng.gen_range(0.85f32..1.0),
        rng.gen_range(0.85f32..1.0),
    ];
    let noise = Normal::new(0.0f32, 0.03).expect("valid sigma");
    let (sin, cos) = angle.sin_cos();
    let cy = height as f32 / 2.0;
    let cx = width as f32 / 2.0;
    let mut img = image::RgbImage::new(width as u32, height as u32);
    for y in 0..height {
        for x in 0..width {
            let dx = x as f32 - cx;
            let dy = y as f32 - cy;
            let u = dx * cos + dy * sin + offset_u;
            let v = -dx * sin + dy * cos + offset_v;
            let base = mean + contrast * family.motif_value(u, v, period) + noise.sample(rng);
            let px = img.get_pixel_mut(x as u32, y as u32);
            for c in 0..3 {
                px.0[c] = ((base * tint[c]).clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
    }
    img
}
