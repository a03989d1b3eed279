//! PNG charts: accuracy and loss curves per epoch, and the confusion-matrix
//! heatmap. Rendering is pure integer rasterization, so identical inputs give
//! identical files.

mod font;

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::eval::EvaluationReport;
use crate::train::TrainingHistory;

pub use font::text_width;

pub const ACCURACY_PLOT: &str = "accuracy.png";
pub const LOSS_PLOT: &str = "loss.png";
pub const CONFUSION_PLOT: &str = "confusion.png";

type Color = Rgb<u8>;

const WHITE: Color = Rgb([255, 255, 255]);
const BLACK: Color = Rgb([0, 0, 0]);
const GRID: Color = Rgb([225, 225, 225]);
const TRAIN_COLOR: Color = Rgb([31, 119, 180]);
const VAL_COLOR: Color = Rgb([255, 127, 14]);

struct Canvas {
    img: RgbImage,
}

impl Canvas {
    fn new(width: u32, height: u32) -> Self {
        Self {
            img: RgbImage::from_pixel(width, height, WHITE),
        }
    }

    fn put(&mut self, x: i64, y: i64, c: Color) {
        if x >= 0 && y >= 0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
            self.img.put_pixel(x as u32, y as u32, c);
        }
    }

    fn fill_rect(&mut self, x: i64, y: i64, w: i64, h: i64, c: Color) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.put(xx, yy, c);
            }
        }
    }

    fn rect_outline(&mut self, x: i64, y: i64, w: i64, h: i64, c: Color) {
        self.line(x, y, x + w, y, c);
        self.line(x, y + h, x + w, y + h, c);
        self.line(x, y, x, y + h, c);
        self.line(x + w, y, x + w, y + h, c);
    }

    /// Bresenham line.
    fn line(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: Color) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.put(x, y, c);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    fn thick_line(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: Color) {
        for (ox, oy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            self.line(x0 + ox, y0 + oy, x1 + ox, y1 + oy, c);
        }
    }

    /// Horizontal text with its top-left corner at `(x, y)`.
    fn text(&mut self, x: i64, y: i64, text: &str, scale: usize, c: Color) {
        let s = scale as i64;
        for (i, ch) in text.chars().enumerate() {
            let g = font::glyph(ch);
            let gx = x + i as i64 * (font::GLYPH_W as i64 + 1) * s;
            for (row, bits) in g.iter().enumerate() {
                for col in 0..font::GLYPH_W {
                    if bits & (0x10 >> col) != 0 {
                        self.fill_rect(gx + col as i64 * s, y + row as i64 * s, s, s, c);
                    }
                }
            }
        }
    }

    /// Text reading bottom-to-top; `(x, y)` is the bottom-left corner.
    fn text_up(&mut self, x: i64, y: i64, text: &str, scale: usize, c: Color) {
        let s = scale as i64;
        for (i, ch) in text.chars().enumerate() {
            let g = font::glyph(ch);
            let gy = y - i as i64 * (font::GLYPH_W as i64 + 1) * s;
            for (row, bits) in g.iter().enumerate() {
                for col in 0..font::GLYPH_W {
                    if bits & (0x10 >> col) != 0 {
                        self.fill_rect(x + row as i64 * s, gy - (col as i64 + 1) * s, s, s, c);
                    }
                }
            }
        }
    }

    fn text_centered(&mut self, cx: i64, y: i64, text: &str, scale: usize, c: Color) {
        self.text(cx - text_width(text, scale) as i64 / 2, y, text, scale, c);
    }

    fn save(&self, path: &Path) -> Result<()> {
        self.img
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(path, io),
                other => Error::io(path, std::io::Error::other(other)),
            })
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Tick label with just enough decimals for the step size.
fn tick_label(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10()).ceil() as usize };
    format!("{v:.decimals$}")
}

fn nice_step(span: f64, target_ticks: f64) -> f64 {
    let raw = span / target_ticks;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

struct Series<'a> {
    name: &'a str,
    color: Color,
    points: Vec<(f64, f64)>,
}

fn line_chart(title: &str, y_label: &str, y_max: f64, series: &[Series<'_>], path: &Path) -> Result<()> {
    let (width, height) = (800i64, 500i64);
    let (left, right, top, bottom) = (80i64, 20i64, 40i64, 60i64);
    let (pw, ph) = (width - left - right, height - top - bottom);
    let mut cv = Canvas::new(width as u32, height as u32);

    let n = series.iter().flat_map(|s| s.points.iter()).map(|p| p.0).fold(1.0, f64::max);
    let (x_lo, x_hi) = if n <= 1.0 { (0.5, 1.5) } else { (1.0, n) };
    let px = |x: f64| left + ((x - x_lo) / (x_hi - x_lo) * pw as f64).round() as i64;
    let py = |y: f64| top + ph - (y / y_max * ph as f64).round() as i64;

    let y_step = nice_step(y_max, 5.0);
    let mut v = 0.0;
    while v <= y_max + 1e-9 {
        let y = py(v);
        cv.line(left, y, left + pw, y, GRID);
        let label = tick_label(v, y_step);
        cv.text(left - 8 - text_width(&label, 1) as i64, y - 3, &label, 1, BLACK);
        v += y_step;
    }
    let x_step = nice_step((x_hi - x_lo).max(1.0), 8.0).max(1.0);
    let mut e = if n <= 1.0 { 1.0 } else { x_step.max(1.0) };
    if n > 1.0 {
        let label = "1";
        cv.line(px(1.0), top + ph, px(1.0), top + ph + 4, BLACK);
        cv.text_centered(px(1.0), top + ph + 8, label, 1, BLACK);
    }
    while e <= x_hi + 1e-9 {
        let x = px(e);
        cv.line(x, top, x, top + ph, GRID);
        cv.line(x, top + ph, x, top + ph + 4, BLACK);
        cv.text_centered(x, top + ph + 8, &tick_label(e, 1.0), 1, BLACK);
        e += x_step;
    }
    cv.rect_outline(left, top, pw, ph, BLACK);

    for s in series {
        let pts: Vec<(i64, i64)> = s.points.iter().map(|&(x, y)| (px(x), py(y.clamp(0.0, y_max)))).collect();
        for w in pts.windows(2) {
            cv.thick_line(w[0].0, w[0].1, w[1].0, w[1].1, s.color);
        }
        for &(x, y) in &pts {
            cv.fill_rect(x - 2, y - 2, 5, 5, s.color);
        }
    }

    cv.text_centered(width / 2, 12, title, 2, BLACK);
    cv.text_centered(left + pw / 2, height - 22, "EPOCH", 1, BLACK);
    cv.text_up(14, top + ph / 2 + text_width(y_label, 1) as i64 / 2, y_label, 1, BLACK);

    // legend
    let lw = series.iter().map(|s| text_width(s.name, 1)).max().unwrap_or(0) as i64 + 34;
    let (lx, ly) = (left + pw - lw - 8, top + 8);
    cv.fill_rect(lx, ly, lw, 14 * series.len() as i64 + 8, WHITE);
    cv.rect_outline(lx, ly, lw, 14 * series.len() as i64 + 8, BLACK);
    for (i, s) in series.iter().enumerate() {
        let y = ly + 8 + 14 * i as i64;
        cv.thick_line(lx + 6, y + 3, lx + 22, y + 3, s.color);
        cv.text(lx + 28, y, s.name, 1, BLACK);
    }
    cv.save(path)
}

/// Writes `accuracy.png` and `loss.png` into `out_dir`, each with a train
/// and a validation curve. Returns the two paths.
pub fn plot_history(history: &TrainingHistory, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if history.is_empty() {
        return Err(Error::config("history", "nothing to plot: no completed epochs"));
    }
    ensure_dir(out_dir)?;
    let pick = |f: fn(&crate::train::EpochMetrics) -> f64| -> Vec<(f64, f64)> {
        history.epochs.iter().map(|m| (m.epoch as f64, f(m))).collect()
    };
    let acc_path = out_dir.join(ACCURACY_PLOT);
    line_chart(
        "TRAINING AND VALIDATION ACCURACY",
        "ACCURACY",
        1.0,
        &[
            Series { name: "TRAIN", color: TRAIN_COLOR, points: pick(|m| m.train_accuracy) },
            Series { name: "VALIDATION", color: VAL_COLOR, points: pick(|m| m.val_accuracy) },
        ],
        &acc_path,
    )?;
    let max_loss = history
        .epochs
        .iter()
        .flat_map(|m| [m.train_loss, m.val_loss])
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let y_max = if max_loss > 0.0 { nice_ceiling(max_loss * 1.05) } else { 1.0 };
    let loss_path = out_dir.join(LOSS_PLOT);
    line_chart(
        "TRAINING AND VALIDATION LOSS",
        "CROSS-ENTROPY",
        y_max,
        &[
            Series { name: "TRAIN", color: TRAIN_COLOR, points: pick(|m| m.train_loss) },
            Series { name: "VALIDATION", color: VAL_COLOR, points: pick(|m| m.val_loss) },
        ],
        &loss_path,
    )?;
    Ok((acc_path, loss_path))
}

fn nice_ceiling(v: f64) -> f64 {
    let step = nice_step(v, 5.0);
    (v / step).ceil() * step
}

fn heat(t: f64) -> Color {
    let t = t.clamp(0.0, 1.0);
    let mix = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    Rgb([mix(247.0, 8.0), mix(251.0, 48.0), mix(255.0, 107.0)])
}

/// Writes `confusion.png`: a K x K heatmap (rows true class, columns
/// predicted class) with counts in every cell.
pub fn plot_confusion(report: &EvaluationReport, out_dir: &Path) -> Result<PathBuf> {
    let k = report.confusion.len();
    if k < 2 {
        return Err(Error::config("report", "confusion plot needs at least 2 classes"));
    }
    ensure_dir(out_dir)?;
    let max = report.confusion.iter().flatten().copied().max().unwrap_or(0).max(1);
    let digits = max.to_string().len();
    let cell = (text_width(&"8".repeat(digits), 1) as i64 + 10).max(28);
    let label_w = report.classes.iter().map(|c| text_width(c, 1)).max().unwrap_or(0) as i64 + 12;
    let (left, top) = (label_w + 24, label_w + 44);
    let width = left + cell * k as i64 + 20;
    let height = top + cell * k as i64 + 20;
    let mut cv = Canvas::new(width as u32, height as u32);

    for (i, row) in report.confusion.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            let (x, y) = (left + j as i64 * cell, top + i as i64 * cell);
            let t = count as f64 / max as f64;
            cv.fill_rect(x, y, cell, cell, heat(t));
            let fg = if t > 0.5 { WHITE } else { BLACK };
            cv.text_centered(x + cell / 2, y + cell / 2 - 3, &count.to_string(), 1, fg);
        }
    }
    for i in 0..=k as i64 {
        cv.line(left, top + i * cell, left + k as i64 * cell, top + i * cell, GRID);
        cv.line(left + i * cell, top, left + i * cell, top + k as i64 * cell, GRID);
    }
    cv.rect_outline(left, top, k as i64 * cell, k as i64 * cell, BLACK);
    for (i, name) in report.classes.iter().enumerate() {
        let y = top + i as i64 * cell + cell / 2 - 3;
        cv.text(left - 6 - text_width(name, 1) as i64, y, name, 1, BLACK);
        let x = left + i as i64 * cell + cell / 2 - 3;
        cv.text_up(x, top - 6, name, 1, BLACK);
    }
    cv.text(6, 6, "TRUE (ROWS) / PREDICTED (COLUMNS)", 1, BLACK);
    let path = out_dir.join(CONFUSION_PLOT);
    cv.save(&path)?;
    Ok(path)
}
