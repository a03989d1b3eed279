//! Resampling primitives shared by the train-time and robustness transforms.

use serde::{Deserialize, Serialize};

use crate::preprocess::{lerp, ImageTensor};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillMode {
    /// Repeat the nearest edge pixel.
    #[default]
    Nearest,
    /// Fill with zero.
    Constant0,
}

/// Bilinear lookup at a real-valued source location.
#[inline]
fn sample(img: &ImageTensor, sy: f32, sx: f32, c: usize, fill: FillMode) -> f32 {
    let h = img.height() as isize;
    let w = img.width() as isize;
    let (sy, sx) = match fill {
        FillMode::Nearest => (sy.clamp(0.0, (h - 1) as f32), sx.clamp(0.0, (w - 1) as f32)),
        FillMode::Constant0 => {
            if sy <= -1.0 || sx <= -1.0 || sy >= h as f32 || sx >= w as f32 {
                return 0.0;
            }
            (sy, sx)
        }
    };
    let y0 = sy.floor();
    let x0 = sx.floor();
    let fy = sy - y0;
    let fx = sx - x0;
    let (y0, x0) = (y0 as isize, x0 as isize);
    let at = |y: isize, x: isize| -> f32 {
        if y < 0 || x < 0 || y >= h || x >= w {
            // only reachable with Constant0; Nearest coordinates are clamped
            // and the +1 neighbour carries zero weight at the edge
            let yc = y.clamp(0, h - 1) as usize;
            let xc = x.clamp(0, w - 1) as usize;
            match fill {
                FillMode::Nearest => img.get(yc, xc, c),
                FillMode::Constant0 => 0.0,
            }
        } else {
            img.get(y as usize, x as usize, c)
        }
    };
    let top = lerp(at(y0, x0), at(y0, x0 + 1), fx);
    let bottom = lerp(at(y0 + 1, x0), at(y0 + 1, x0 + 1), fx);
    lerp(top, bottom, fy)
}

/// Resamples `img` through an inverse map from output `(y, x)` to source
/// `(sy, sx)`. Output values are clamped to `[0, 1]`.
pub fn warp<F>(img: &ImageTensor, fill: FillMode, inverse: F) -> ImageTensor
where
    F: Fn(f32, f32) -> (f32, f32),
{
    let (h, w, ch) = img.shape();
    let mut data = Vec::with_capacity(h * w * ch);
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = inverse(y as f32, x as f32);
            for c in 0..ch {
                data.push(sample(img, sy, sx, c, fill).clamp(0.0, 1.0));
            }
        }
    }
    ImageTensor::from_raw(h, w, ch, img.domain(), data)
}

/// Moves content by `dx` columns right and `dy` rows down.
pub fn translate(img: &ImageTensor, dx: f32, dy: f32, fill: FillMode) -> ImageTensor {
    warp(img, fill, |y, x| (y - dy, x - dx))
}

fn center(img: &ImageTensor) -> (f32, f32) {
    (
        (img.height() as f32 - 1.0) / 2.0,
        (img.width() as f32 - 1.0) / 2.0,
    )
}

/// Scales content about the image center; `factor > 1` magnifies.
pub fn zoom(img: &ImageTensor, factor: f32, fill: FillMode) -> ImageTensor {
    let (cy, cx) = center(img);
    warp(img, fill, |y, x| (cy + (y - cy) / factor, cx + (x - cx) / factor))
}

/// Rotates content counter-clockwise by `degrees` about the image center.
pub fn rotate(img: &ImageTensor, degrees: f32, fill: FillMode) -> ImageTensor {
    let (cy, cx) = center(img);
    let (sin, cos) = degrees.to_radians().sin_cos();
    warp(img, fill, |y, x| {
        let (dy, dx) = (y - cy, x - cx);
        // inverse rotation, image rows grow downwards
        (cy + cos * dy + sin * dx, cx - sin * dy + cos * dx)
    })
}

/// 3x3 projective transform, row-major, acting on `(x, y, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub [f64; 9]);

impl Homography {
    /// Transform taking each `from[i]` to `to[i]` (points are `(x, y)`).
    pub fn from_correspondences(from: [(f64, f64); 4], to: [(f64, f64); 4]) -> Option<Self> {
        let mut a = [[0.0f64; 9]; 8];
        for i in 0..4 {
            let (x, y) = from[i];
            let (u, v) = to[i];
            a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
            a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
        }
        // Gauss-Jordan with partial pivoting on the 8x8 system.
        for col in 0..8 {
            let pivot = (col..8).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
            if a[pivot][col].abs() < 1e-12 {
                return None;
            }
            a.swap(col, pivot);
            for row in 0..8 {
                if row != col {
                    let f = a[row][col] / a[col][col];
                    for k in col..9 {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
        let mut m = [0.0; 9];
        for i in 0..8 {
            m[i] = a[i][8] / a[i][i];
        }
        m[8] = 1.0;
        Some(Homography(m))
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.0;
        let w = m[6] * x + m[7] * y + m[8];
        ((m[0] * x + m[1] * y + m[2]) / w, (m[3] * x + m[4] * y + m[5]) / w)
    }
}

/// Output pixel `p` samples the source at `inverse.apply(p)`.
pub fn perspective(img: &ImageTensor, inverse: &Homography, fill: FillMode) -> ImageTensor {
    warp(img, fill, |y, x| {
        let (sx, sy) = inverse.apply(f64::from(x), f64::from(y));
        (sy as f32, sx as f32)
    })
}

fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as isize;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * f64::from(sigma) * f64::from(sigma))).exp())
        .collect();
    let sum: f64 = weights.iter().sum();
    weights.into_iter().map(|w| (w / sum) as f32).collect()
}

/// Separable Gaussian blur with edge clamping. `sigma == 0` is the identity.
pub fn gaussian_blur(img: &ImageTensor, sigma: f32) -> ImageTensor {
    if sigma == 0.0 {
        return img.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (h, w, ch) = img.shape();
    let src = img.data();
    let mut tmp = vec![0.0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, wt) in kernel.iter().enumerate() {
                    let xs = (x as isize + k as isize - radius).clamp(0, w as isize - 1) as usize;
                    acc += wt * src[(y * w + xs) * ch + c];
                }
                tmp[(y * w + x) * ch + c] = acc;
            }
        }
    }
    let mut out = vec![0.0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, wt) in kernel.iter().enumerate() {
                    let ys = (y as isize + k as isize - radius).clamp(0, h as isize - 1) as usize;
                    acc += wt * tmp[(ys * w + x) * ch + c];
                }
                out[(y * w + x) * ch + c] = acc.clamp(0.0, 1.0);
            }
        }
    }
    ImageTensor::from_raw(h, w, ch, img.domain(), out)
}
