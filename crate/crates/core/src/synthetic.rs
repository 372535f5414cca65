//! Deterministic synthetic digit-like glyphs in the MNIST raster format.
//!
//! Each class owns a template of quadratic Bézier strokes. Instances are drawn
//! by jittering control points, applying a small random affine transform and
//! rasterizing with anti-aliased strokes. A fraction of instances is morphed
//! toward another class's template so a trained classifier makes genuine
//! errors.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, Split, CLASS_UNIVERSE};
use crate::error::Result;
use crate::rng::stream_rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub rows: usize,
    pub cols: usize,
    /// Seed for the class templates; shared by both splits.
    pub template_seed: u64,
    pub seed: u64,
    /// Probability that an instance is morphed toward a confusable class.
    pub confusion: f64,
    /// Standard deviation of control-point jitter in pixels.
    pub jitter: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            train_per_class: 600,
            test_per_class: 100,
            rows: 28,
            cols: 28,
            template_seed: 20_250_801,
            seed: 1,
            confusion: 0.12,
            jitter: 1.1,
        }
    }
}

type Point = (f64, f64);

#[derive(Debug, Clone)]
struct Stroke {
    p0: Point,
    p1: Point,
    p2: Point,
}

fn template(template_seed: u64, class: usize, rows: usize, cols: usize) -> Vec<Stroke> {
    let mut rng = stream_rng(template_seed, "template", class as u64);
    let n = rng.random_range(2..=3);
    let (lo_r, hi_r) = (rows as f64 * 0.2, rows as f64 * 0.8);
    let (lo_c, hi_c) = (cols as f64 * 0.22, cols as f64 * 0.78);
    let pt = |rng: &mut ChaCha8Rng| (rng.random_range(lo_r..hi_r), rng.random_range(lo_c..hi_c));
    let mut strokes = Vec::with_capacity(n);
    let mut start = pt(&mut rng);
    for _ in 0..n {
        let p1 = pt(&mut rng);
        let p2 = pt(&mut rng);
        strokes.push(Stroke { p0: start, p1, p2 });
        // strokes chain like a pen path
        start = p2;
    }
    strokes
}

fn lerp(a: Point, b: Point, t: f64) -> Point {
    (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t)
}

fn rasterize(strokes: &[Stroke], rows: usize, cols: usize, width: f64, intensity: f64) -> Vec<u8> {
    let mut img = vec![0.0f64; rows * cols];
    let radius = width / 2.0;
    for s in strokes {
        let len = {
            let a = (s.p1.0 - s.p0.0).hypot(s.p1.1 - s.p0.1);
            let b = (s.p2.0 - s.p1.0).hypot(s.p2.1 - s.p1.1);
            a + b
        };
        let steps = (len * 3.0).ceil().max(2.0) as usize;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            let q = lerp(lerp(s.p0, s.p1, t), lerp(s.p1, s.p2, t), t);
            let r0 = (q.0 - radius - 1.0).floor().max(0.0) as usize;
            let r1 = ((q.0 + radius + 1.0).ceil() as usize).min(rows - 1);
            let c0 = (q.1 - radius - 1.0).floor().max(0.0) as usize;
            let c1 = ((q.1 + radius + 1.0).ceil() as usize).min(cols - 1);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    let d = (r as f64 + 0.5 - q.0).hypot(c as f64 + 0.5 - q.1);
                    let v = (radius + 0.5 - d).clamp(0.0, 1.0) * intensity;
                    let cell = &mut img[r * cols + c];
                    if v > *cell {
                        *cell = v;
                    }
                }
            }
        }
    }
    img.iter().map(|v| (v * 255.0).round() as u8).collect()
}

fn draw_instance(
    templates: &[Vec<Stroke>],
    class: usize,
    cfg: &SyntheticConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<u8> {
    let (rows, cols) = (cfg.rows, cfg.cols);
    let jitter = Normal::new(0.0, cfg.jitter).expect("jitter must be finite and non-negative");
    let mut strokes = templates[class].clone();

    if rng.random_bool(cfg.confusion) {
        // morph toward a neighbouring class so the pair becomes confusable
        let other = (class + rng.random_range(1..CLASS_UNIVERSE)) % CLASS_UNIVERSE;
        let t = rng.random_range(0.35..0.6);
        for (s, o) in strokes.iter_mut().zip(&templates[other]) {
            s.p0 = lerp(s.p0, o.p0, t);
            s.p1 = lerp(s.p1, o.p1, t);
            s.p2 = lerp(s.p2, o.p2, t);
        }
    }

    let angle: f64 = rng.random_range(-0.2..0.2);
    let scale: f64 = rng.random_range(0.88..1.12);
    let shift = (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
    let centre = (rows as f64 / 2.0, cols as f64 / 2.0);
    let (sin, cos) = angle.sin_cos();
    let mut warp = |p: Point| -> Point {
        let p = (p.0 + jitter.sample(rng), p.1 + jitter.sample(rng));
        let (dy, dx) = (p.0 - centre.0, p.1 - centre.1);
        (
            centre.0 + scale * (cos * dy - sin * dx) + shift.0,
            centre.1 + scale * (sin * dy + cos * dx) + shift.1,
        )
    };
    for s in strokes.iter_mut() {
        s.p0 = warp(s.p0);
        s.p1 = warp(s.p1);
        s.p2 = warp(s.p2);
    }
    let width = rng.random_range(1.6..2.8);
    let intensity = rng.random_range(0.85..1.0);
    rasterize(&strokes, rows, cols, width, intensity)
}

fn generate_split(cfg: &SyntheticConfig, split: Split, per_class: usize) -> Result<LabeledDataset> {
    let templates: Vec<Vec<Stroke>> = (0..CLASS_UNIVERSE)
        .map(|c| template(cfg.template_seed, c, cfg.rows, cfg.cols))
        .collect();
    let stream = match split {
        Split::Train => "synthetic_train",
        Split::Test => "synthetic_test",
    };
    let n = per_class * CLASS_UNIVERSE;
    let mut raw = Vec::with_capacity(n * cfg.rows * cfg.cols);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        // interleave classes like a shuffled file
        let class = i % CLASS_UNIVERSE;
        let mut rng = stream_rng(cfg.seed, stream, i as u64);
        raw.extend(draw_instance(&templates, class, cfg, &mut rng));
        labels.push(class as u8);
    }
    LabeledDataset::from_raw(split, cfg.rows, cfg.cols, raw, labels)
}

/// Generate `(train, test)` splits.
pub fn generate(cfg: &SyntheticConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    Ok((
        generate_split(cfg, Split::Train, cfg.train_per_class)?,
        generate_split(cfg, Split::Test, cfg.test_per_class)?,
    ))
}
