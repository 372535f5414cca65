//! Declarative run configuration. Every pipeline constant is a key, unknown
//! keys are rejected, and `key=value` overrides are applied on top of the
//! parsed TOML before validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::CatalogConfig;
use crate::classifier::TrainConfig;
use crate::dataset::CLASS_UNIVERSE;
use crate::error::{FgnsError, Result};
use crate::evaluation::EvalConfig;
use crate::neighbors::NeighborConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    /// Classes the classifier is trained on and catalogs are built for.
    pub train_classes: Vec<u8>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train_images: "data/kannada-mnist/train-images-idx3-ubyte.gz".into(),
            train_labels: "data/kannada-mnist/train-labels-idx1-ubyte.gz".into(),
            test_images: "data/kannada-mnist/t10k-images-idx3-ubyte.gz".into(),
            test_labels: "data/kannada-mnist/t10k-labels-idx1-ubyte.gz".into(),
            train_classes: (0..CLASS_UNIVERSE as u8).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub train: u64,
    pub features: u64,
    pub evaluation: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            train: 42,
            features: 7,
            evaluation: 2025,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Worker threads for parallel sections; never changes results.
    /// `0` uses every available core.
    pub workers: usize,
    pub data: DataConfig,
    pub classifier: TrainConfig,
    pub features: CatalogConfig,
    pub neighbors: NeighborConfig,
    pub evaluation: EvalConfig,
    pub seeds: Seeds,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: "out".into(),
            workers: 0,
            data: DataConfig::default(),
            classifier: TrainConfig::default(),
            features: CatalogConfig::default(),
            neighbors: NeighborConfig::default(),
            evaluation: EvalConfig::default(),
            seeds: Seeds::default(),
        }
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    // Reuse TOML's own literal grammar; bare words become strings.
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

impl RunConfig {
    /// Parse TOML text, apply `section.key=value` overrides, and validate.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| FgnsError::arg(format!("config: {e}")))?;
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| FgnsError::arg(format!("override {o:?} is not key=value")))?;
            let path: Vec<&str> = key.trim().split('.').collect();
            let mut cursor = &mut table;
            for part in &path[..path.len() - 1] {
                cursor = cursor
                    .entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| FgnsError::arg(format!("override {key:?}: {part} is not a section")))?;
            }
            cursor.insert(path[path.len() - 1].to_string(), parse_scalar(value.trim()));
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| FgnsError::arg(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)?,
            None => String::new(),
        };
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.train_classes.is_empty()
            || self
                .data
                .train_classes
                .iter()
                .any(|&c| usize::from(c) >= CLASS_UNIVERSE)
        {
            return Err(FgnsError::arg("data.train_classes must be a non-empty subset of 0..=9"));
        }
        if self.evaluation.eval_classes.is_empty()
            || self
                .evaluation
                .eval_classes
                .iter()
                .any(|&c| usize::from(c) >= CLASS_UNIVERSE)
        {
            return Err(FgnsError::arg("evaluation.eval_classes must be a non-empty subset of 0..=9"));
        }
        if self.classifier.epochs == 0 || self.classifier.batch_size == 0 || self.classifier.hidden == 0 {
            return Err(FgnsError::arg("classifier epochs, batch_size and hidden must be ≥ 1"));
        }
        if !(self.classifier.learning_rate > 0.0) {
            return Err(FgnsError::arg("classifier.learning_rate must be positive"));
        }
        if self.evaluation.histogram_bins == 0 {
            return Err(FgnsError::arg("evaluation.histogram_bins must be ≥ 1"));
        }
        self.features.validate()?;
        self.neighbors.validate()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| FgnsError::Serialization(e.to_string()))
    }

    /// Short hash of the canonical serialized configuration. Keys that cannot
    /// change results (`workers`, `output_dir`) are left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = 0;
        c.output_dir = PathBuf::new();
        let canonical = serde_json::to_string(&c).expect("config serializes");
        hex::encode(&Sha256::digest(canonical.as_bytes())[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_defaults() {
        let c = RunConfig::from_toml_with_overrides("", &[]).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.features.k_masks, 7);
        assert_eq!(c.neighbors.rho, 1.0);
        assert_eq!(c.neighbors.n_neighbors, 3);
        assert_eq!(c.evaluation.eval_classes, vec![1, 2, 4, 5, 6, 7]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml_with_overrides("[features]\nkmasks = 3\n", &[]).is_err());
        assert!(RunConfig::from_toml_with_overrides("bogus = 1\n", &[]).is_err());
    }

    #[test]
    fn overrides_apply_and_validate() {
        let c = RunConfig::from_toml_with_overrides(
            "[features]\ntau_g = 0.02\n",
            &["features.tau_g=0.5".into(), "neighbors.rho=2".into(), "output_dir=elsewhere".into()],
        )
        .unwrap();
        assert_eq!(c.features.tau_g, 0.5);
        assert_eq!(c.neighbors.rho, 2.0);
        assert_eq!(c.output_dir, PathBuf::from("elsewhere"));
        assert!(RunConfig::from_toml_with_overrides("", &["features.iou_dedup=1.5".into()]).is_err());
        assert!(RunConfig::from_toml_with_overrides("", &["neighbors.rho=0".into()]).is_err());
        assert!(RunConfig::from_toml_with_overrides("", &["nonsense".into()]).is_err());
        let c = RunConfig::from_toml_with_overrides("", &["classifier.epochs=2".into()]).unwrap();
        assert_eq!(c.classifier.epochs, 2);
        assert_eq!(c.classifier.batch_size, 64);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.workers = 7;
        b.output_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.features.tau_g = 0.3;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn toml_round_trip() {
        let a = RunConfig::default();
        let b = RunConfig::from_toml_with_overrides(&a.to_toml().unwrap(), &[]).unwrap();
        assert_eq!(a, b);
    }
}
