//! Class feature catalog: per-class validated masks built from local
//! attributions, scored by how much neutralizing them lowers the model's
//! confidence, then diversified with k-means and IoU de-duplication.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{ClassifierModel, ProbabilisticClassifier};
use crate::dataset::{Image, LabeledDataset};
use crate::error::{FgnsError, Result};
use crate::kmeans::kmeans;
use crate::mask::{iou, Mask};
use crate::segmentation::{grid_segmentation, lime_attribute, LimeParams, LocalAttribution, Segmentation};

pub const CATALOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMask {
    pub mask: Mask,
    /// Number of sampled images that voted for this region.
    pub frequency: usize,
    /// Mean drop in class probability when the region is neutralized.
    pub sage_score: f64,
    /// Superpixel ids that were grouped into this mask.
    pub provenance: Vec<usize>,
}

/// Hyperparameters of the catalog build. Every constant of the mask selection
/// loop lives here so ablations need no code changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalogConfig {
    pub n_samples: usize,
    pub n_perturb: usize,
    pub cell: usize,
    pub k_local: usize,
    pub kernel_width: f64,
    pub ridge: f64,
    pub baseline: f64,
    pub min_freq: f64,
    pub tau_g: f64,
    pub k_masks: usize,
    pub iou_group: f64,
    pub iou_dedup: f64,
    pub sage_early_stop: bool,
    pub sage_se_threshold: f64,
    pub sage_min_n: usize,
    pub kmeans_max_iter: usize,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        CatalogConfig {
            n_samples: 1000,
            n_perturb: 500,
            cell: 4,
            k_local: 5,
            kernel_width: 0.25,
            ridge: 1e-3,
            baseline: 0.0,
            min_freq: 0.05,
            tau_g: 0.01,
            k_masks: 7,
            iou_group: 0.5,
            iou_dedup: 0.8,
            sage_early_stop: true,
            sage_se_threshold: 0.01,
            sage_min_n: 50,
            kmeans_max_iter: 100,
        }
    }
}

impl CatalogConfig {
    pub fn lime(&self) -> LimeParams {
        LimeParams {
            n_perturb: self.n_perturb,
            kernel_width: self.kernel_width,
            ridge: self.ridge,
            baseline: self.baseline,
            top_k: self.k_local,
        }
    }

    pub fn early_stop(&self) -> Option<EarlyStop> {
        self.sage_early_stop.then_some(EarlyStop {
            se_threshold: self.sage_se_threshold,
            min_n: self.sage_min_n,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64, open_low: bool| -> Result<()> {
            let ok = if open_low {
                v > 0.0 && v <= 1.0
            } else {
                (0.0..=1.0).contains(&v)
            };
            if ok {
                Ok(())
            } else {
                Err(FgnsError::arg(format!("{name} = {v} outside its valid range")))
            }
        };
        unit("min_freq", self.min_freq, false)?;
        unit("iou_group", self.iou_group, true)?;
        unit("iou_dedup", self.iou_dedup, true)?;
        unit("baseline", self.baseline, false)?;
        if self.n_samples == 0 || self.n_perturb == 0 || self.cell == 0 || self.k_masks == 0 {
            return Err(FgnsError::arg(
                "n_samples, n_perturb, cell and k_masks must be at least 1",
            ));
        }
        if !(self.kernel_width > 0.0) || !(self.ridge >= 0.0) || !self.tau_g.is_finite() {
            return Err(FgnsError::arg("kernel_width must be > 0, ridge ≥ 0, tau_g finite"));
        }
        if !(self.sage_se_threshold > 0.0) || self.kmeans_max_iter == 0 {
            return Err(FgnsError::arg("sage_se_threshold must be > 0 and kmeans_max_iter ≥ 1"));
        }
        Ok(())
    }
}

/// Group selected superpixels across images into candidate masks.
///
/// Each selection is an independent vote. A vote joins the first group whose
/// seed mask overlaps it with IoU ≥ `iou_group`; on a fixed grid that makes
/// groups exact-duplicate bins. Groups supported by fewer than
/// `min_freq × attrs.len()` images are dropped.
pub fn aggregate(
    attrs: &[LocalAttribution],
    seg: &Segmentation,
    iou_group: f64,
    min_freq: f64,
) -> Result<Vec<FeatureMask>> {
    if attrs.is_empty() {
        return Err(FgnsError::arg("no attributions to aggregate"));
    }
    if !(iou_group > 0.0 && iou_group <= 1.0) || !(0.0..=1.0).contains(&min_freq) {
        return Err(FgnsError::arg("iou_group must be in (0, 1], min_freq in [0, 1]"));
    }
    struct Group {
        seed: Mask,
        members: Vec<usize>,
    }
    let cell_masks: Vec<Mask> = (0..seg.count()).map(|s| seg.superpixel_mask(s)).collect();
    let mut groups: Vec<Group> = Vec::new();
    for a in attrs {
        for &sp in &a.selected {
            let m = &cell_masks[sp];
            let mut joined = false;
            for g in groups.iter_mut() {
                if iou(&g.seed, m)? >= iou_group {
                    g.members.push(sp);
                    joined = true;
                    break;
                }
            }
            if !joined {
                groups.push(Group {
                    seed: m.clone(),
                    members: vec![sp],
                });
            }
        }
    }

    let floor = min_freq * attrs.len() as f64;
    let mut out = Vec::new();
    for g in groups {
        let n = g.members.len();
        if (n as f64) < floor {
            continue;
        }
        let mut votes = vec![0usize; seg.rows * seg.cols];
        for &sp in &g.members {
            for p in cell_masks[sp].ones() {
                votes[p] += 1;
            }
        }
        let mut majority = Mask::from_bits(seg.rows, seg.cols, votes.iter().map(|&v| 2 * v > n).collect());
        if majority.is_empty() {
            majority = g.seed.clone();
        }
        let mut provenance = g.members.clone();
        provenance.sort_unstable();
        provenance.dedup();
        out.push(FeatureMask {
            mask: majority,
            frequency: n,
            sage_score: 0.0,
            provenance,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub se_threshold: f64,
    pub min_n: usize,
}

impl Default for EarlyStop {
    fn default() -> Self {
        EarlyStop {
            se_threshold: 0.01,
            min_n: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SageEstimate {
    pub score: f64,
    pub std_error: f64,
    pub n_evaluated: usize,
}

/// Mean drop in class-`class` probability when `mask` is set to `baseline`,
/// over `samples` in order. With `early_stop`, evaluation halts as soon as at
/// least `min_n` samples have been seen and the running standard error falls
/// below `se_threshold`.
pub fn sage_score<M: ProbabilisticClassifier + ?Sized>(
    model: &M,
    mask: &Mask,
    samples: &[Image],
    class: u8,
    baseline: f64,
    early_stop: Option<EarlyStop>,
) -> Result<SageEstimate> {
    if samples.is_empty() {
        return Err(FgnsError::arg("no samples to score against"));
    }
    let n_px = mask.bits().len();
    if samples.iter().any(|s| s.len() != n_px) || n_px != model.input_len() {
        return Err(FgnsError::arg("sample/mask/model shapes disagree"));
    }
    let c = usize::from(class);
    if c >= model.num_classes() {
        return Err(FgnsError::arg(format!("class {class} outside model classes")));
    }
    const CHUNK: usize = 32;
    let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
    let se = |n: usize, m2: f64| {
        if n < 2 {
            f64::INFINITY
        } else {
            (m2 / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        }
    };
    'outer: for chunk in samples.chunks(CHUNK) {
        let mut xs = Array2::<f64>::zeros((2 * chunk.len(), n_px));
        for (i, s) in chunk.iter().enumerate() {
            for (p, (&v, &on)) in s.pixels.iter().zip(mask.bits()).enumerate() {
                xs[[2 * i, p]] = v;
                xs[[2 * i + 1, p]] = if on { baseline } else { v };
            }
        }
        let probs = model.predict_proba_batch(xs.view());
        for i in 0..chunk.len() {
            let delta = probs[[2 * i, c]] - probs[[2 * i + 1, c]];
            // Welford update
            n += 1;
            let d = delta - mean;
            mean += d / n as f64;
            m2 += d * (delta - mean);
            if let Some(es) = early_stop {
                if n >= es.min_n && se(n, m2) < es.se_threshold {
                    break 'outer;
                }
            }
        }
    }
    Ok(SageEstimate {
        score: mean,
        std_error: se(n, m2),
        n_evaluated: n,
    })
}

/// Keep candidates whose global score reaches `tau_g`.
pub fn retain(candidates: Vec<FeatureMask>, tau_g: f64) -> Vec<FeatureMask> {
    candidates.into_iter().filter(|m| m.sage_score >= tau_g).collect()
}

fn by_score_desc(a: &(usize, &FeatureMask), b: &(usize, &FeatureMask)) -> std::cmp::Ordering {
    b.1.sage_score.total_cmp(&a.1.sage_score).then(a.0.cmp(&b.0))
}

/// Cluster masks by shape, keep the best-scoring mask per cluster, then drop
/// any kept mask overlapping a better one with IoU ≥ `iou_dedup`.
pub fn diversify(
    candidates: &[FeatureMask],
    k_clusters: usize,
    iou_dedup: f64,
    seed: u64,
    max_iter: usize,
) -> Result<Vec<FeatureMask>> {
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    if k_clusters == 0 {
        return Err(FgnsError::arg("k_clusters must be at least 1"));
    }
    let points: Vec<Vec<f64>> = candidates.iter().map(|c| c.mask.as_f64()).collect();
    let km = kmeans(&points, k_clusters, seed, max_iter)?;
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, &cluster) in km.assignments.iter().enumerate() {
        let entry = best.entry(cluster).or_insert(i);
        if by_score_desc(&(i, &candidates[i]), &(*entry, &candidates[*entry])).is_lt() {
            *entry = i;
        }
    }
    let mut kept: Vec<(usize, &FeatureMask)> = best.values().map(|&i| (i, &candidates[i])).collect();
    kept.sort_by(by_score_desc);
    let mut survivors: Vec<FeatureMask> = Vec::new();
    for (_, m) in kept {
        let mut redundant = false;
        for s in &survivors {
            if iou(&s.mask, &m.mask)? >= iou_dedup {
                redundant = true;
                break;
            }
        }
        if !redundant {
            survivors.push(m.clone());
        }
    }
    Ok(survivors)
}

/// Per-class validated masks plus the metadata needed to reproduce them.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassFeatureCatalog {
    pub seed: u64,
    pub hyperparameters: CatalogConfig,
    pub model_checksum: String,
    pub dataset_checksum: String,
    pub rows: usize,
    pub cols: usize,
    pub classes: BTreeMap<u8, Vec<FeatureMask>>,
}

impl ClassFeatureCatalog {
    pub fn masks(&self, class: u8) -> &[FeatureMask] {
        self.classes.get(&class).map_or(&[], Vec::as_slice)
    }

    /// Classes that were built but retained no masks; explanations for them
    /// fall back to the Hadamard baseline.
    pub fn fallback_classes(&self) -> Vec<u8> {
        self.classes
            .iter()
            .filter_map(|(&c, m)| m.is_empty().then_some(c))
            .collect()
    }

    pub fn to_file(&self, config_hash: Option<&str>) -> CatalogFile {
        CatalogFile {
            version: CATALOG_VERSION,
            seed: self.seed,
            hyperparameters: self.hyperparameters.clone(),
            model_checksum: self.model_checksum.clone(),
            dataset_checksum: self.dataset_checksum.clone(),
            config_hash: config_hash.map(str::to_string),
            rows: self.rows,
            cols: self.cols,
            fallback_classes: self.fallback_classes(),
            classes: self
                .classes
                .iter()
                .map(|(&c, masks)| {
                    (
                        c,
                        masks
                            .iter()
                            .map(|m| MaskRecord {
                                mask_rle: m.mask.to_rle(),
                                frequency: m.frequency,
                                sage_score: m.sage_score,
                                provenance: m.provenance.clone(),
                            })
                            .collect(),
                    )
                })
                .collect(),
        }
    }

    pub fn to_json(&self, config_hash: Option<&str>) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file(config_hash))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: CatalogFile = serde_json::from_str(s)?;
        if f.version != CATALOG_VERSION {
            return Err(FgnsError::Format(format!("unsupported catalog version {}", f.version)));
        }
        let mut classes = BTreeMap::new();
        for (c, records) in f.classes {
            let mut masks = Vec::with_capacity(records.len());
            for r in records {
                masks.push(FeatureMask {
                    mask: Mask::from_rle(f.rows, f.cols, &r.mask_rle)?,
                    frequency: r.frequency,
                    sage_score: r.sage_score,
                    provenance: r.provenance,
                });
            }
            classes.insert(c, masks);
        }
        Ok(ClassFeatureCatalog {
            seed: f.seed,
            hyperparameters: f.hyperparameters,
            model_checksum: f.model_checksum,
            dataset_checksum: f.dataset_checksum,
            rows: f.rows,
            cols: f.cols,
            classes,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn checksum(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json(None)?.as_bytes())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub mask_rle: Vec<u32>,
    pub frequency: usize,
    pub sage_score: f64,
    #[serde(default)]
    pub provenance: Vec<usize>,
}

/// On-disk catalog document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogFile {
    pub version: u32,
    pub seed: u64,
    pub hyperparameters: CatalogConfig,
    pub model_checksum: String,
    pub dataset_checksum: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub fallback_classes: Vec<u8>,
    pub classes: BTreeMap<u8, Vec<MaskRecord>>,
}

/// Everything produced for one class, kept for inspection and debugging.
#[derive(Debug, Clone)]
pub struct ClassBuild {
    pub class: u8,
    pub attributions: Vec<LocalAttribution>,
    pub candidates: Vec<FeatureMask>,
    pub retained: Vec<FeatureMask>,
    pub masks: Vec<FeatureMask>,
}

/// Run sample → attribute → aggregate → score → retain → diversify for one class.
pub fn build_class<M: ProbabilisticClassifier + ?Sized>(
    model: &M,
    train: &LabeledDataset,
    class: u8,
    config: &CatalogConfig,
    seed: u64,
) -> Result<ClassBuild> {
    let seg = grid_segmentation(train.rows(), train.cols(), config.cell)?;
    let samples = train.sample_class(class, config.n_samples, seed)?;
    let lime = config.lime();
    let attributions = samples
        .par_iter()
        .map(|x| lime_attribute(model, x, &seg, class, &lime, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut candidates = aggregate(&attributions, &seg, config.iou_group, config.min_freq)?;
    let scores = candidates
        .par_iter()
        .map(|c| sage_score(model, &c.mask, &samples, class, config.baseline, config.early_stop()))
        .collect::<Result<Vec<_>>>()?;
    for (c, s) in candidates.iter_mut().zip(scores) {
        c.sage_score = s.score;
    }
    let retained = retain(candidates.clone(), config.tau_g);
    let masks = diversify(
        &retained,
        config.k_masks,
        config.iou_dedup,
        crate::rng::derive_seed(seed, "diversify", u64::from(class)),
        config.kmeans_max_iter,
    )?;
    if masks.is_empty() {
        tracing::warn!(class, "no masks retained; explanations will fall back to the baseline");
    }
    Ok(ClassBuild {
        class,
        attributions,
        candidates,
        retained,
        masks,
    })
}

/// Build the catalog for `classes` (every class present in `train` when
/// `None`). Reproducible from `(model, train, config, seed)`.
pub fn build_catalog(
    model: &ClassifierModel,
    train: &LabeledDataset,
    classes: Option<&[u8]>,
    config: &CatalogConfig,
    seed: u64,
) -> Result<ClassFeatureCatalog> {
    config.validate()?;
    let classes: Vec<u8> = match classes {
        Some(c) => c.to_vec(),
        None => train.classes_present().into_iter().collect(),
    };
    let mut out = BTreeMap::new();
    for c in classes {
        let build = build_class(model, train, c, config, seed).map_err(FgnsError::in_class(c))?;
        tracing::info!(
            class = c,
            candidates = build.candidates.len(),
            retained = build.retained.len(),
            masks = build.masks.len(),
            scores = ?build.masks.iter().map(|m| m.sage_score).collect::<Vec<_>>(),
            "class catalog built"
        );
        out.insert(c, build.masks);
    }
    Ok(ClassFeatureCatalog {
        seed,
        hyperparameters: config.clone(),
        model_checksum: model.checksum()?,
        dataset_checksum: train.checksum().to_string(),
        rows: train.rows(),
        cols: train.cols(),
        classes: out,
    })
}
