//! Fixed grid superpixels and LIME-style local attribution over them.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::ProbabilisticClassifier;
use crate::dataset::Image;
use crate::error::{FgnsError, Result};
use crate::mask::Mask;
use crate::rng::stream_rng;

/// A partition of the raster into axis-aligned grid cells, shared by every
/// image of the same shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    pub rows: usize,
    pub cols: usize,
    pub cell: usize,
    grid_rows: usize,
    grid_cols: usize,
    assignment: Vec<u32>,
}

pub fn grid_segmentation(rows: usize, cols: usize, cell: usize) -> Result<Segmentation> {
    if cell == 0 {
        return Err(FgnsError::arg("cell size must be at least 1"));
    }
    if cell > rows || cell > cols {
        return Err(FgnsError::arg(format!(
            "cell size {cell} exceeds {rows}x{cols} raster"
        )));
    }
    let grid_rows = rows.div_ceil(cell);
    let grid_cols = cols.div_ceil(cell);
    let assignment = (0..rows * cols)
        .map(|p| ((p / cols / cell) * grid_cols + (p % cols) / cell) as u32)
        .collect();
    Ok(Segmentation {
        rows,
        cols,
        cell,
        grid_rows,
        grid_cols,
        assignment,
    })
}

impl Segmentation {
    pub fn count(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (self.grid_rows, self.grid_cols)
    }

    pub fn superpixel_of(&self, pixel: usize) -> usize {
        self.assignment[pixel] as usize
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    pub fn superpixel_mask(&self, s: usize) -> Mask {
        Mask::from_bits(
            self.rows,
            self.cols,
            self.assignment.iter().map(|&a| a as usize == s).collect(),
        )
    }

    /// Copy of `pixels` with every "off" superpixel replaced by `baseline`.
    pub fn perturb(&self, pixels: &[f64], on: &[bool], baseline: f64) -> Vec<f64> {
        pixels
            .iter()
            .zip(&self.assignment)
            .map(|(&p, &s)| if on[s as usize] { p } else { baseline })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimeParams {
    pub n_perturb: usize,
    /// Width σ of the exponential kernel over the fraction of "off" cells.
    pub kernel_width: f64,
    pub ridge: f64,
    /// Replacement intensity for "off" superpixels.
    pub baseline: f64,
    /// How many positive-coefficient superpixels to keep per image.
    pub top_k: usize,
}

impl Default for LimeParams {
    fn default() -> Self {
        LimeParams {
            n_perturb: 500,
            kernel_width: 0.25,
            ridge: 1e-3,
            baseline: 0.0,
            top_k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalAttribution {
    pub image_id: usize,
    pub class: u8,
    pub coefficients: Vec<f64>,
    /// Up to `top_k` superpixels with positive coefficients, strongest first.
    pub selected: Vec<usize>,
}

/// Fit `min Σ wᵢ (yᵢ − β₀ − zᵢ·β)² + λ‖β‖²`; the intercept is unpenalized.
/// Returns `β` without the intercept.
pub fn weighted_ridge(z: &[Vec<bool>], y: &[f64], w: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let s = z.first().map_or(0, Vec::len);
    let d = s + 1;
    let mut ata = DMatrix::<f64>::zeros(d, d);
    let mut aty = DVector::<f64>::zeros(d);
    let mut row = vec![0.0; d];
    for ((zi, &yi), &wi) in z.iter().zip(y).zip(w) {
        row[0] = 1.0;
        for (dst, &b) in row[1..].iter_mut().zip(zi) {
            *dst = if b { 1.0 } else { 0.0 };
        }
        for a in 0..d {
            if row[a] == 0.0 {
                continue;
            }
            aty[a] += wi * row[a] * yi;
            for b in a..d {
                ata[(a, b)] += wi * row[a] * row[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            ata[(a, b)] = ata[(b, a)];
        }
    }
    for a in 1..d {
        ata[(a, a)] += lambda;
    }
    let sol = match ata.clone().cholesky() {
        Some(ch) => ch.solve(&aty),
        None => ata
            .lu()
            .solve(&aty)
            .ok_or_else(|| FgnsError::DegenerateInput("singular surrogate system".into()))?,
    };
    Ok(sol.iter().skip(1).copied().collect())
}

/// Coefficients at or below this are solver round-off, not evidence.
pub const POSITIVE_EPS: f64 = 1e-12;

/// Ids of the `k` largest positive coefficients, descending; ties go to the
/// lower id.
pub fn top_positive(coefficients: &[f64], k: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..coefficients.len())
        .filter(|&i| coefficients[i] > POSITIVE_EPS)
        .collect();
    ids.sort_by(|&a, &b| coefficients[b].total_cmp(&coefficients[a]).then(a.cmp(&b)));
    ids.truncate(k);
    ids
}

/// Attribute `model`'s class-`class` probability on `x` to superpixels.
///
/// The perturbation stream is keyed by `(seed, x.id)`, so attributions of
/// different images can run in any order or in parallel.
pub fn lime_attribute<M: ProbabilisticClassifier + ?Sized>(
    model: &M,
    x: &Image,
    seg: &Segmentation,
    class: u8,
    params: &LimeParams,
    seed: u64,
) -> Result<LocalAttribution> {
    let s = seg.count();
    if s == 0 || params.n_perturb == 0 {
        return Err(FgnsError::DegenerateInput(
            "no superpixels or no perturbations".into(),
        ));
    }
    if x.len() != seg.rows * seg.cols || x.len() != model.input_len() {
        return Err(FgnsError::arg("image shape does not match segmentation/model"));
    }
    if usize::from(class) >= model.num_classes() {
        return Err(FgnsError::arg(format!("class {class} outside model classes")));
    }
    if params.n_perturb < s {
        tracing::warn!(
            n_perturb = params.n_perturb,
            superpixels = s,
            "fewer perturbations than superpixels; surrogate is underdetermined"
        );
    }

    let mut rng = stream_rng(seed, "lime", x.id as u64);
    let z: Vec<Vec<bool>> = (0..params.n_perturb)
        .map(|_| (0..s).map(|_| rng.random_bool(0.5)).collect())
        .collect();
    if z.iter().all(|v| v == &z[0]) {
        return Err(FgnsError::DegenerateInput(
            "all perturbation vectors are identical".into(),
        ));
    }

    let n_px = x.len();
    let mut batch = Array2::<f64>::zeros((z.len(), n_px));
    for (mut row, on) in batch.rows_mut().into_iter().zip(&z) {
        for ((dst, &p), &sp) in row.iter_mut().zip(&x.pixels).zip(seg.assignment()) {
            *dst = if on[sp as usize] { p } else { params.baseline };
        }
    }
    let probs = model.predict_proba_batch(batch.view());
    let y: Vec<f64> = probs.column(usize::from(class)).to_vec();

    let sigma2 = params.kernel_width * params.kernel_width;
    let w: Vec<f64> = z
        .iter()
        .map(|on| {
            let off = on.iter().filter(|&&b| !b).count() as f64 / s as f64;
            (-(off * off) / sigma2).exp()
        })
        .collect();

    let coefficients = weighted_ridge(&z, &y, &w, params.ridge)?;
    let selected = top_positive(&coefficients, params.top_k);
    Ok(LocalAttribution {
        image_id: x.id,
        class,
        coefficients,
        selected,
    })
}
