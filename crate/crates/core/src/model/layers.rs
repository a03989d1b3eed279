//! Forward and backward kernels.
//!
//! Spatial activations are stored channel-major over the whole batch
//! (`[C][N][H][W]`), so a 3x3 "same" convolution over the batch becomes one
//! `[O x 9C] * [9C x NHW]` product per column block of the im2col matrix.
//! Flat activations are row-major `[N][F]`.

use rand::Rng;

use super::scalar::{gemm, MatRef, Scalar};

/// Upper bound on the number of im2col elements materialized at once.
const COL_BLOCK_ELEMS: usize = 1 << 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Spatial { c: usize, n: usize, h: usize, w: usize },
    Flat { n: usize, f: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Spatial { c, n, h, w } => c * n * h * w,
            Shape::Flat { n, f } => n * f,
        }
    }

    pub fn batch(&self) -> usize {
        match *self {
            Shape::Spatial { n, .. } | Shape::Flat { n, .. } => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Activation<T> {
    pub shape: Shape,
    pub data: Vec<T>,
}

impl<T: Scalar> Activation<T> {
    pub fn new(shape: Shape, data: Vec<T>) -> Self {
        assert_eq!(shape.len(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    /// Selects images `[start, end)` of the batch.
    pub fn slice_batch(&self, start: usize, end: usize) -> Self {
        match self.shape {
            Shape::Spatial { c, n, h, w } => {
                let plane = h * w;
                let mut data = Vec::with_capacity(c * (end - start) * plane);
                for ch in 0..c {
                    let base = ch * n * plane;
                    data.extend_from_slice(&self.data[base + start * plane..base + end * plane]);
                }
                Self::new(Shape::Spatial { c, n: end - start, h, w }, data)
            }
            Shape::Flat { f, .. } => Self::new(
                Shape::Flat { n: end - start, f },
                self.data[start * f..end * f].to_vec(),
            ),
        }
    }

    /// Concatenates along the batch axis.
    pub fn concat(parts: &[Activation<T>]) -> Self {
        let first = parts.first().expect("at least one part").shape;
        let total: usize = parts.iter().map(|p| p.shape.batch()).sum();
        match first {
            Shape::Spatial { c, h, w, .. } => {
                let plane = h * w;
                let mut data = Vec::with_capacity(c * total * plane);
                for ch in 0..c {
                    for p in parts {
                        let n = p.shape.batch();
                        data.extend_from_slice(&p.data[ch * n * plane..(ch + 1) * n * plane]);
                    }
                }
                Self::new(Shape::Spatial { c, n: total, h, w }, data)
            }
            Shape::Flat { f, .. } => {
                let data = parts.iter().flat_map(|p| p.data.iter().copied()).collect();
                Self::new(Shape::Flat { n: total, f }, data)
            }
        }
    }
}

/// 3x3 convolution, stride 1, zero padding 1, fused ReLU.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    /// `[out][in][3][3]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Splits columns `j0..j1` (ordered image, row, column) into runs that stay
/// within one image row: `(offset from j0, image, row, first x, len)`.
fn row_segments(j0: usize, j1: usize, h: usize, w: usize) -> impl Iterator<Item = (usize, usize, usize, usize, usize)> {
    let plane = h * w;
    let mut j = j0;
    std::iter::from_fn(move || {
        if j >= j1 {
            return None;
        }
        let (img, rem) = (j / plane, j % plane);
        let (y, x0) = (rem / w, rem % w);
        let len = (w - x0).min(j1 - j);
        let seg = (j - j0, img, y, x0, len);
        j += len;
        Some(seg)
    })
}

/// For a run starting at `x0` shifted by `dx`, the sub-range `[lo, hi)` of
/// run positions whose source column lies inside the image.
fn valid_span(x0: usize, len: usize, dx: isize, w: usize) -> (usize, usize) {
    let start = x0 as isize + dx;
    let lo = (-start).max(0) as usize;
    let hi = ((w as isize - start).max(0) as usize).min(len);
    (lo.min(hi), hi)
}

fn im2col<T: Scalar>(x: &[T], c: usize, n: usize, h: usize, w: usize, j0: usize, j1: usize, col: &mut [T]) {
    let jb = j1 - j0;
    let plane = h * w;
    let total = n * plane;
    for ci in 0..c {
        let src = &x[ci * total..(ci + 1) * total];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((ci * 3 + ky) * 3 + kx) * jb..][..jb];
                let dx = kx as isize - 1;
                for (off, img, y, x0, len) in row_segments(j0, j1, h, w) {
                    let seg = &mut row[off..off + len];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy as usize >= h {
                        seg.fill(T::zero());
                        continue;
                    }
                    let (lo, hi) = valid_span(x0, len, dx, w);
                    seg[..lo].fill(T::zero());
                    seg[hi..].fill(T::zero());
                    let base = img * plane + sy as usize * w;
                    let s0 = (x0 as isize + dx + lo as isize) as usize;
                    seg[lo..hi].copy_from_slice(&src[base + s0..base + s0 + (hi - lo)]);
                }
            }
        }
    }
}

fn col2im_add<T: Scalar>(col: &[T], c: usize, n: usize, h: usize, w: usize, j0: usize, j1: usize, dx_out: &mut [T]) {
    let jb = j1 - j0;
    let plane = h * w;
    let total = n * plane;
    for ci in 0..c {
        let dst = &mut dx_out[ci * total..(ci + 1) * total];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((ci * 3 + ky) * 3 + kx) * jb..][..jb];
                let dx = kx as isize - 1;
                for (off, img, y, x0, len) in row_segments(j0, j1, h, w) {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy as usize >= h {
                        continue;
                    }
                    let (lo, hi) = valid_span(x0, len, dx, w);
                    let base = img * plane + sy as usize * w;
                    let s0 = (x0 as isize + dx + lo as isize) as usize;
                    for (d, &g) in dst[base + s0..base + s0 + (hi - lo)].iter_mut().zip(&row[off + lo..off + hi]) {
                        *d = *d + g;
                    }
                }
            }
        }
    }
}

fn column_blocks(k: usize, total: usize) -> impl Iterator<Item = (usize, usize)> {
    let step = (COL_BLOCK_ELEMS / k.max(1)).max(64);
    (0..total).step_by(step).map(move |j0| (j0, (j0 + step).min(total)))
}

impl<T: Scalar> Conv2d<T> {
    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &Activation<T>) -> Activation<T> {
        let Shape::Spatial { c, n, h, w } = x.shape else {
            panic!("conv2d expects a spatial activation");
        };
        assert_eq!(c, self.in_ch, "conv2d input channels");
        let k = c * 9;
        let total = n * h * w;
        let mut out = vec![T::zero(); self.out_ch * total];
        let mut col = Vec::new();
        for (j0, j1) in column_blocks(k, total) {
            let jb = j1 - j0;
            col.resize(k * jb, T::zero());
            im2col(&x.data, c, n, h, w, j0, j1, &mut col);
            gemm(
                T::one(),
                MatRef::row_major(&self.weight, self.out_ch, k, k),
                MatRef::row_major(&col, k, jb, jb),
                T::zero(),
                &mut out[j0..],
                total,
            );
        }
        for (o, row) in out.chunks_exact_mut(total).enumerate() {
            let b = self.bias[o];
            for v in row {
                let z = *v + b;
                *v = if z > T::zero() { z } else { T::zero() };
            }
        }
        Activation::new(Shape::Spatial { c: self.out_ch, n, h, w }, out)
    }

    /// Gradients given the layer input, its (post-ReLU) output and the
    /// gradient with respect to that output.
    pub fn backward(
        &self,
        x: &Activation<T>,
        y: &Activation<T>,
        dy: &[T],
        need_dx: bool,
    ) -> (Vec<T>, Vec<T>, Option<Vec<T>>) {
        let Shape::Spatial { c, n, h, w } = x.shape else {
            panic!("conv2d expects a spatial activation");
        };
        let k = c * 9;
        let total = n * h * w;
        let dz: Vec<T> = dy
            .iter()
            .zip(&y.data)
            .map(|(&g, &o)| if o > T::zero() { g } else { T::zero() })
            .collect();
        let db: Vec<T> = dz
            .chunks_exact(total)
            .map(|row| row.iter().fold(T::zero(), |a, &b| a + b))
            .collect();
        let mut dw = vec![T::zero(); self.weight.len()];
        let mut dx = need_dx.then(|| vec![T::zero(); x.data.len()]);
        let mut col = Vec::new();
        let mut dcol = Vec::new();
        for (j0, j1) in column_blocks(k, total) {
            let jb = j1 - j0;
            col.resize(k * jb, T::zero());
            im2col(&x.data, c, n, h, w, j0, j1, &mut col);
            let dz_blk = MatRef {
                data: &dz[j0..],
                rows: self.out_ch,
                cols: jb,
                rs: total,
                cs: 1,
            };
            gemm(
                T::one(),
                dz_blk,
                MatRef::row_major(&col, k, jb, jb).t(),
                T::one(),
                &mut dw,
                k,
            );
            if let Some(dx) = dx.as_mut() {
                dcol.resize(k * jb, T::zero());
                gemm(
                    T::one(),
                    MatRef::row_major(&self.weight, self.out_ch, k, k).t(),
                    dz_blk,
                    T::zero(),
                    &mut dcol,
                    jb,
                );
                col2im_add(&dcol, c, n, h, w, j0, j1, dx);
            }
        }
        (dw, db, dx)
    }
}

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
pub fn maxpool_forward<T: Scalar>(x: &Activation<T>, keep_argmax: bool) -> (Activation<T>, Vec<u32>) {
    let Shape::Spatial { c, n, h, w } = x.shape else {
        panic!("maxpool expects a spatial activation");
    };
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * n * oh * ow);
    let mut arg = Vec::with_capacity(if keep_argmax { c * n * oh * ow } else { 0 });
    for p in 0..c * n {
        let src = &x.data[p * h * w..(p + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = 2 * oy * w + 2 * ox;
                for cand in [best + 1, best + w, best + w + 1] {
                    if src[cand] > src[best] {
                        best = cand;
                    }
                }
                out.push(src[best]);
                if keep_argmax {
                    arg.push(best as u32);
                }
            }
        }
    }
    (Activation::new(Shape::Spatial { c, n, h: oh, w: ow }, out), arg)
}

pub fn maxpool_backward<T: Scalar>(input_shape: Shape, argmax: &[u32], dy: &[T]) -> Vec<T> {
    let Shape::Spatial { c, n, h, w } = input_shape else {
        panic!("maxpool expects a spatial activation");
    };
    let per_plane = (h / 2) * (w / 2);
    let mut dx = vec![T::zero(); input_shape.len()];
    for p in 0..c * n {
        let base = p * h * w;
        for i in 0..per_plane {
            let o = p * per_plane + i;
            let idx = base + argmax[o] as usize;
            dx[idx] = dx[idx] + dy[o];
        }
    }
    dx
}

/// `[C][N][H][W]` to row-major `[N][C*H*W]`.
pub fn flatten_forward<T: Scalar>(x: &Activation<T>) -> Activation<T> {
    match x.shape {
        Shape::Spatial { c, n, h, w } => {
            let plane = h * w;
            let f = c * plane;
            let mut out = vec![T::zero(); n * f];
            for ch in 0..c {
                for img in 0..n {
                    let src = &x.data[(ch * n + img) * plane..][..plane];
                    out[img * f + ch * plane..][..plane].copy_from_slice(src);
                }
            }
            Activation::new(Shape::Flat { n, f }, out)
        }
        Shape::Flat { .. } => x.clone(),
    }
}

pub fn flatten_backward<T: Scalar>(input_shape: Shape, dy: &[T]) -> Vec<T> {
    match input_shape {
        Shape::Spatial { c, n, h, w } => {
            let plane = h * w;
            let f = c * plane;
            let mut dx = vec![T::zero(); dy.len()];
            for ch in 0..c {
                for img in 0..n {
                    dx[(ch * n + img) * plane..][..plane]
                        .copy_from_slice(&dy[img * f + ch * plane..][..plane]);
                }
            }
            dx
        }
        Shape::Flat { .. } => dy.to_vec(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenseActivation {
    Relu,
    /// Softmax over the row; the layer output holds probabilities.
    Softmax,
}

#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `[inputs][outputs]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub activation: DenseActivation,
}

pub fn softmax_rows<T: Scalar>(z: &mut [T], k: usize) {
    for row in z.chunks_exact_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
}

impl<T: Scalar> Dense<T> {
    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &Activation<T>) -> Activation<T> {
        let Shape::Flat { n, f } = x.shape else {
            panic!("dense expects a flat activation");
        };
        assert_eq!(f, self.inputs, "dense input width");
        let mut out: Vec<T> = (0..n).flat_map(|_| self.bias.iter().copied()).collect();
        gemm(
            T::one(),
            MatRef::row_major(&x.data, n, f, f),
            MatRef::row_major(&self.weight, f, self.outputs, self.outputs),
            T::one(),
            &mut out,
            self.outputs,
        );
        match self.activation {
            DenseActivation::Relu => {
                for v in &mut out {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            }
            DenseActivation::Softmax => softmax_rows(&mut out, self.outputs),
        }
        Activation::new(Shape::Flat { n, f: self.outputs }, out)
    }

    /// For a ReLU layer `dy` is the gradient w.r.t. the output; for the
    /// softmax layer it is the gradient w.r.t. the pre-softmax logits.
    pub fn backward(
        &self,
        x: &Activation<T>,
        y: &Activation<T>,
        dy: &[T],
        need_dx: bool,
    ) -> (Vec<T>, Vec<T>, Option<Vec<T>>) {
        let Shape::Flat { n, f } = x.shape else {
            panic!("dense expects a flat activation");
        };
        let o = self.outputs;
        let dz: Vec<T> = match self.activation {
            DenseActivation::Relu => dy
                .iter()
                .zip(&y.data)
                .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                .collect(),
            DenseActivation::Softmax => dy.to_vec(),
        };
        let mut dw = vec![T::zero(); self.weight.len()];
        gemm(
            T::one(),
            MatRef::row_major(&x.data, n, f, f).t(),
            MatRef::row_major(&dz, n, o, o),
            T::zero(),
            &mut dw,
            o,
        );
        let mut db = vec![T::zero(); o];
        for row in dz.chunks_exact(o) {
            for (acc, &g) in db.iter_mut().zip(row) {
                *acc = *acc + g;
            }
        }
        let dx = need_dx.then(|| {
            let mut dx = vec![T::zero(); n * f];
            gemm(
                T::one(),
                MatRef::row_major(&dz, n, o, o),
                MatRef::row_major(&self.weight, f, o, o).t(),
                T::zero(),
                &mut dx,
                f,
            );
            dx
        });
        (dw, db, dx)
    }
}

/// Inverted dropout mask: kept units are scaled by `1 / (1 - rate)`.
pub fn dropout_mask<T: Scalar>(len: usize, rate: f32, rng: &mut impl Rng) -> Vec<T> {
    let scale = T::one() / T::from_f32(1.0 - rate);
    (0..len)
        .map(|_| if rng.gen::<f32>() < rate { T::zero() } else { scale })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct 3x3 convolution used as a reference.
    fn conv_naive(conv: &Conv2d<f64>, x: &Activation<f64>) -> Vec<f64> {
        let Shape::Spatial { c, n, h, w } = x.shape else { unreachable!() };
        let mut out = vec![0.0; conv.out_ch * n * h * w];
        for o in 0..conv.out_ch {
            for img in 0..n {
                for y in 0..h {
                    for xx in 0..w {
                        let mut acc = conv.bias[o];
                        for ci in 0..c {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let sy = y as isize + ky as isize - 1;
                                    let sx = xx as isize + kx as isize - 1;
                                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                        continue;
                                    }
                                    let v = x.data[((ci * n + img) * h + sy as usize) * w + sx as usize];
                                    acc += v * conv.weight[((o * c + ci) * 3 + ky) * 3 + kx];
                                }
                            }
                        }
                        out[((o * n + img) * h + y) * w + xx] = acc.max(0.0);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_convolution() {
        let (c, o, n, h, w) = (2, 3, 2, 4, 5);
        let conv = Conv2d {
            in_ch: c,
            out_ch: o,
            weight: (0..o * c * 9).map(|i| ((i * 7 % 11) as f64 - 5.0) / 7.0).collect(),
            bias: vec![0.1, -0.2, 0.05],
        };
        let x = Activation::new(
            Shape::Spatial { c, n, h, w },
            (0..c * n * h * w).map(|i| ((i * 5 % 13) as f64) / 13.0).collect(),
        );
        let got = conv.forward(&x);
        let want = conv_naive(&conv, &x);
        for (a, b) in got.data.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pool_floors_odd_sizes() {
        let x = Activation::new(Shape::Spatial { c: 1, n: 1, h: 3, w: 5 }, (0..15).map(|v| v as f32).collect());
        let (y, arg) = maxpool_forward(&x, true);
        assert_eq!(y.shape, Shape::Spatial { c: 1, n: 1, h: 1, w: 2 });
        assert_eq!(y.data, vec![6.0, 8.0]);
        let dx = maxpool_backward(x.shape, &arg, &[1.0f32, 2.0]);
        assert_eq!(dx[6], 1.0);
        assert_eq!(dx[8], 2.0);
        assert_eq!(dx.iter().sum::<f32>(), 3.0);
    }

    #[test]
    fn flatten_round_trip() {
        let x = Activation::new(Shape::Spatial { c: 2, n: 3, h: 2, w: 2 }, (0..24).map(|v| v as f32).collect());
        let f = flatten_forward(&x);
        assert_eq!(f.shape, Shape::Flat { n: 3, f: 8 });
        // image 1, channel 1, first pixel
        assert_eq!(f.data[8 + 4], x.data[(3 + 1) * 4]);
        assert_eq!(flatten_backward(x.shape, &f.data), x.data);
    }

    #[test]
    fn batch_slicing_and_concat() {
        let x = Activation::new(Shape::Spatial { c: 2, n: 3, h: 1, w: 2 }, (0..12).map(|v| v as f32).collect());
        let parts = [x.slice_batch(0, 1), x.slice_batch(1, 3)];
        assert_eq!(Activation::concat(&parts), x);
    }

    #[test]
    fn softmax_rows_normalize() {
        let mut z = vec![1000.0f32, 1000.0, -5.0, 0.0, 1.0, 2.0];
        softmax_rows(&mut z, 3);
        assert!((z[0] - 0.5).abs() < 1e-6);
        for row in z.chunks(3) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }
}
