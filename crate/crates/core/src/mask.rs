//! Binary pixel masks.

use serde::{Deserialize, Serialize};

use crate::error::{FgnsError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Mask {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn from_bits(rows: usize, cols: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), rows * cols, "mask size must match shape");
        Mask { rows, cols, bits }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Indices of set pixels.
    pub fn ones(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    fn check_shape(&self, other: &Mask) -> Result<()> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(FgnsError::arg(format!(
                "mask shapes differ: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn is_disjoint(&self, other: &Mask) -> bool {
        !self.bits.iter().zip(&other.bits).any(|(&a, &b)| a && b)
    }

    /// Run lengths alternating zeros/ones, row-major, starting with a
    /// (possibly empty) zero run.
    pub fn to_rle(&self) -> Vec<u32> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u32;
        for &b in &self.bits {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }

    pub fn from_rle(rows: usize, cols: usize, runs: &[u32]) -> Result<Self> {
        let mut bits = Vec::with_capacity(rows * cols);
        let mut value = false;
        for &r in runs {
            bits.extend(std::iter::repeat_n(value, r as usize));
            value = !value;
        }
        if bits.len() != rows * cols {
            return Err(FgnsError::Format(format!(
                "run-length encoding covers {} pixels, expected {}",
                bits.len(),
                rows * cols
            )));
        }
        Ok(Mask { rows, cols, bits })
    }
}

/// Intersection over union; 0 when both masks are empty.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64> {
    a.check_shape(b)?;
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

/// Serialized form used in catalog files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub rows: usize,
    pub cols: usize,
    pub runs: Vec<u32>,
}

impl From<&Mask> for RleMask {
    fn from(m: &Mask) -> Self {
        RleMask {
            rows: m.rows,
            cols: m.cols,
            runs: m.to_rle(),
        }
    }
}
