//! Per-class pixel-wise median prototypes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Image, LabeledDataset};
use crate::error::{FgnsError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub class: u8,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f64>,
    pub n_source: usize,
}

impl Prototype {
    pub fn as_image(&self, id: usize) -> Image {
        Image {
            id,
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels.clone(),
        }
    }
}

/// Median with the even-count convention: midpoint of the two central order
/// statistics. Reorders `values`.
pub fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    assert!(n > 0, "median of empty set");
    let mid = n / 2;
    let (_, &mut upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lower + upper) / 2.0
    }
}

/// Pixel-wise median of equally shaped pixel vectors.
pub fn pixelwise_median<'a, I>(sources: I) -> Result<(Vec<f64>, usize)>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let sources: Vec<&[f64]> = sources.into_iter().collect();
    let first = sources
        .first()
        .ok_or_else(|| FgnsError::arg("no source images"))?;
    let len = first.len();
    if sources.iter().any(|s| s.len() != len) {
        return Err(FgnsError::arg("source images differ in size"));
    }
    let mut column = vec![0.0; sources.len()];
    let pixels = (0..len)
        .map(|p| {
            for (dst, s) in column.iter_mut().zip(&sources) {
                *dst = s[p];
            }
            median_in_place(&mut column)
        })
        .collect();
    Ok((pixels, sources.len()))
}

pub fn prototype_from_images(class: u8, images: &[Image]) -> Result<Prototype> {
    let first = images.first().ok_or_else(|| FgnsError::arg(format!("class {class} has no instances")))?;
    let (pixels, n_source) = pixelwise_median(images.iter().map(|i| i.pixels.as_slice()))?;
    Ok(Prototype {
        class,
        rows: first.rows,
        cols: first.cols,
        pixels,
        n_source,
    })
}

/// Prototype of class `class` over every training instance of that class.
pub fn build_prototype(train: &LabeledDataset, class: u8) -> Result<Prototype> {
    let idx = train.indices_of_class(class);
    if idx.is_empty() {
        return Err(FgnsError::arg(format!("class {class} has no training instances")));
    }
    // order statistics of byte values; x/255 is monotone so they pick the same
    // elements, and the midpoint is taken after normalizing to match the
    // sort-based path bit for bit
    let per = train.pixels_per_image();
    let mut hist = vec![[0u32; 256]; per];
    for &i in &idx {
        for (h, &b) in hist.iter_mut().zip(train.raw(i)) {
            h[usize::from(b)] += 1;
        }
    }
    let n = idx.len();
    let order_stat = |h: &[u32; 256], k: usize| -> f64 {
        let mut seen = 0usize;
        for (v, &c) in h.iter().enumerate() {
            seen += c as usize;
            if seen > k {
                return v as f64 / 255.0;
            }
        }
        1.0
    };
    let pixels = hist
        .iter()
        .map(|h| {
            if n % 2 == 1 {
                order_stat(h, n / 2)
            } else {
                (order_stat(h, n / 2 - 1) + order_stat(h, n / 2)) / 2.0
            }
        })
        .collect();
    Ok(Prototype {
        class,
        rows: train.rows(),
        cols: train.cols(),
        pixels,
        n_source: n,
    })
}

pub fn build_prototypes(train: &LabeledDataset, classes: &[u8]) -> Result<BTreeMap<u8, Prototype>> {
    classes
        .iter()
        .map(|&c| Ok((c, build_prototype(train, c)?)))
        .collect()
}

/// Standalone prototype file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeFile {
    pub version: u32,
    pub dataset_checksum: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub prototypes: BTreeMap<u8, Prototype>,
}

impl PrototypeFile {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
