//! Neighbor ranking: the feature-guided loss against a class prototype, and
//! the Hadamard-contribution k-NN baseline.
//!
//! Both rankings break score ties by ascending training id, so results are
//! reproducible regardless of how candidate scoring is scheduled.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{ClassFeatureCatalog, FeatureMask};
use crate::classifier::{argmax, batch_matrix, ClassifierModel, ProbabilisticClassifier};
use crate::dataset::{Image, LabeledDataset};
use crate::error::{FgnsError, Result};
use crate::prototypes::Prototype;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fgns,
    KnnBaseline,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fgns => "fgns",
            Method::KnnBaseline => "knn_baseline",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = FgnsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fgns" => Ok(Method::Fgns),
            "knn" | "knn_baseline" => Ok(Method::KnnBaseline),
            other => Err(FgnsError::arg(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub train_id: usize,
    /// Feature loss for FGNS, Hadamard-space L2 distance for the baseline.
    pub score: f64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub query_id: usize,
    pub predicted_class: u8,
    #[serde(default)]
    pub true_class: Option<u8>,
    pub method: Method,
    /// True when FGNS had no masks for the predicted class and the baseline
    /// ranking was used instead.
    pub fallback: bool,
    pub neighbors: Vec<Neighbor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeighborConfig {
    pub rho: f64,
    pub n_neighbors: usize,
    /// Restrict FGNS to the baseline's top-m candidates before re-ranking.
    pub prefilter_top_m: Option<usize>,
    /// Baseline searches every class instead of the predicted one (ablation).
    pub knn_all_classes: bool,
}

impl Default for NeighborConfig {
    fn default() -> Self {
        NeighborConfig {
            rho: 1.0,
            n_neighbors: 3,
            prefilter_top_m: None,
            knn_all_classes: false,
        }
    }
}

impl NeighborConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(FgnsError::arg(format!("rho = {} must be positive", self.rho)));
        }
        if self.n_neighbors == 0 || self.prefilter_top_m == Some(0) {
            return Err(FgnsError::arg("n_neighbors and prefilter_top_m must be at least 1"));
        }
        Ok(())
    }
}

/// `ρ · Σᵢ ‖Mⁱ ⊙ (candidate − prototype)‖²`, summed mask by mask.
pub fn feature_loss(candidate: &[f64], proto: &[f64], masks: &[FeatureMask], rho: f64) -> Result<f64> {
    if masks.is_empty() {
        return Err(FgnsError::arg("feature loss needs at least one mask"));
    }
    if candidate.len() != proto.len() || masks.iter().any(|m| m.mask.bits().len() != proto.len()) {
        return Err(FgnsError::arg("candidate, prototype and mask shapes disagree"));
    }
    if !(rho > 0.0) {
        return Err(FgnsError::arg("rho must be positive"));
    }
    Ok(rho * masked_sq_sum(candidate, proto, masks))
}

fn masked_sq_sum(candidate: &[f64], proto: &[f64], masks: &[FeatureMask]) -> f64 {
    let mut total = 0.0;
    for m in masks {
        let mut s = 0.0;
        for ((&on, &c), &p) in m.mask.bits().iter().zip(candidate).zip(proto) {
            if on {
                let d = c - p;
                s += d * d;
            }
        }
        total += s;
    }
    total
}

/// The `n` lowest `(score, id)` pairs, ascending.
pub fn lowest_n(mut scored: Vec<(f64, usize, u8)>, n: usize) -> Vec<Neighbor> {
    let cmp = |a: &(f64, usize, u8), b: &(f64, usize, u8)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if n < scored.len() {
        scored.select_nth_unstable_by(n, cmp);
        scored.truncate(n);
    }
    scored.sort_by(cmp);
    scored
        .into_iter()
        .map(|(score, train_id, label)| Neighbor {
            train_id,
            score,
            label,
        })
        .collect()
}

/// Cached penultimate activations of training instances, per class.
pub struct HadamardIndex<'a> {
    model: &'a ClassifierModel,
    train: &'a LabeledDataset,
    by_class: BTreeMap<u8, (Vec<usize>, OnceLock<Vec<f64>>)>,
    everything: (Vec<usize>, OnceLock<Vec<f64>>),
}

impl<'a> HadamardIndex<'a> {
    pub fn new(model: &'a ClassifierModel, train: &'a LabeledDataset) -> Self {
        let by_class = train
            .classes_present()
            .into_iter()
            .map(|c| (c, (train.indices_of_class(c), OnceLock::new())))
            .collect();
        HadamardIndex {
            model,
            train,
            by_class,
            everything: ((0..train.len()).collect(), OnceLock::new()),
        }
    }

    fn activations<'s>(&self, positions: &[usize], cell: &'s OnceLock<Vec<f64>>) -> &'s [f64] {
        cell.get_or_init(|| {
            let mut out = Vec::with_capacity(positions.len() * self.model.hidden);
            for chunk in positions.chunks(512) {
                let h = self.model.hidden_batch(batch_matrix(self.train, chunk).view());
                out.extend(h.iter());
            }
            out
        })
    }

    /// Baseline ranking of the pool (predicted class, or every class when
    /// `all_classes`) by L2 distance between class-`class` contribution vectors.
    pub fn rank(&self, query: &Image, class: u8, n: usize, all_classes: bool) -> Result<Vec<Neighbor>> {
        let scored = self.scored(query, class, all_classes)?;
        Ok(lowest_n(scored, n))
    }

    fn scored(&self, query: &Image, class: u8, all_classes: bool) -> Result<Vec<(f64, usize, u8)>> {
        let q = self.model.contribution_vector(&query.pixels, class)?.values;
        let (positions, cell) = if all_classes {
            (&self.everything.0, &self.everything.1)
        } else {
            let (p, c) = self
                .by_class
                .get(&class)
                .ok_or_else(|| FgnsError::arg(format!("no training instances of class {class}")))?;
            (p, c)
        };
        if positions.is_empty() {
            return Err(FgnsError::arg(format!("no training instances of class {class}")));
        }
        let acts = self.activations(positions, cell);
        let width = self.model.hidden;
        let w = self.model.w2.row(usize::from(class));
        let w: Vec<f64> = w.iter().copied().collect();
        Ok(positions
            .par_iter()
            .enumerate()
            .map(|(k, &pos)| {
                let h = &acts[k * width..(k + 1) * width];
                let d2: f64 = h
                    .iter()
                    .zip(&w)
                    .zip(&q)
                    .map(|((a, wj), qj)| {
                        let d = qj - a * wj;
                        d * d
                    })
                    .sum();
                (d2.sqrt(), self.train.id(pos), self.train.label(pos))
            })
            .collect())
    }
}

/// Hadamard-contribution k-NN over the predicted class.
pub fn rank_knn(
    query: &Image,
    class: u8,
    model: &ClassifierModel,
    train: &LabeledDataset,
    n: usize,
) -> Result<Explanation> {
    let neighbors = HadamardIndex::new(model, train).rank(query, class, n, false)?;
    Ok(Explanation {
        query_id: query.id,
        predicted_class: class,
        true_class: None,
        method: Method::KnnBaseline,
        fallback: false,
        neighbors,
    })
}

/// Feature-guided ranking of training instances of `class` against its
/// prototype. `pool` restricts the candidates (dataset positions); `None`
/// scores the whole class.
pub fn rank_fgns_pool(
    query_id: usize,
    class: u8,
    train: &LabeledDataset,
    masks: &[FeatureMask],
    proto: &Prototype,
    rho: f64,
    n: usize,
    pool: Option<&[usize]>,
) -> Result<Explanation> {
    let owned;
    let pool = match pool {
        Some(p) => p,
        None => {
            owned = train.indices_of_class(class);
            &owned
        }
    };
    if pool.is_empty() {
        return Err(FgnsError::arg(format!("no training instances of class {class}")));
    }
    if proto.pixels.len() != train.pixels_per_image() {
        return Err(FgnsError::arg("prototype shape does not match dataset"));
    }
    // validates masks/rho once; per-candidate scoring below cannot fail
    feature_loss(&proto.pixels, &proto.pixels, masks, rho)?;
    let scored: Vec<(f64, usize, u8)> = pool
        .par_iter()
        .map_init(
            || vec![0.0; train.pixels_per_image()],
            |buf, &pos| {
                train.fill_pixels(pos, buf);
                let loss = rho * masked_sq_sum(buf, &proto.pixels, masks);
                (loss, train.id(pos), train.label(pos))
            },
        )
        .collect();
    Ok(Explanation {
        query_id,
        predicted_class: class,
        true_class: None,
        method: Method::Fgns,
        fallback: false,
        neighbors: lowest_n(scored, n),
    })
}

/// FGNS ranking for a query predicted as `class`. Falls back to the baseline
/// (and flags it) when the catalog holds no masks for the class.
#[allow(clippy::too_many_arguments)]
pub fn rank_fgns(
    query: &Image,
    class: u8,
    model: &ClassifierModel,
    train: &LabeledDataset,
    catalog: &ClassFeatureCatalog,
    protos: &BTreeMap<u8, Prototype>,
    config: &NeighborConfig,
    index: Option<&HadamardIndex<'_>>,
) -> Result<Explanation> {
    let masks = catalog.masks(class);
    let local_index;
    let index = match index {
        Some(i) => i,
        None => {
            local_index = HadamardIndex::new(model, train);
            &local_index
        }
    };
    if masks.is_empty() {
        let neighbors = index.rank(query, class, config.n_neighbors, false)?;
        return Ok(Explanation {
            query_id: query.id,
            predicted_class: class,
            true_class: None,
            method: Method::Fgns,
            fallback: true,
            neighbors,
        });
    }
    let proto = protos
        .get(&class)
        .ok_or_else(|| FgnsError::arg(format!("no prototype for class {class}")))?;
    let prefiltered: Option<Vec<usize>> = match config.prefilter_top_m {
        Some(m) => Some(
            index
                .rank(query, class, m, false)?
                .iter()
                .filter_map(|nb| train.index_of_id(nb.train_id))
                .collect(),
        ),
        None => None,
    };
    rank_fgns_pool(
        query.id,
        class,
        train,
        masks,
        proto,
        config.rho,
        config.n_neighbors,
        prefiltered.as_deref(),
    )
}

/// Shared, immutable artifacts needed to explain predictions.
pub struct Explainer<'a> {
    pub model: &'a ClassifierModel,
    pub train: &'a LabeledDataset,
    pub catalog: &'a ClassFeatureCatalog,
    pub prototypes: &'a BTreeMap<u8, Prototype>,
    pub config: NeighborConfig,
    index: HadamardIndex<'a>,
}

impl<'a> Explainer<'a> {
    pub fn new(
        model: &'a ClassifierModel,
        train: &'a LabeledDataset,
        catalog: &'a ClassFeatureCatalog,
        prototypes: &'a BTreeMap<u8, Prototype>,
        config: NeighborConfig,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Explainer {
            model,
            train,
            catalog,
            prototypes,
            config,
            index: HadamardIndex::new(model, train),
        })
    }

    /// Predict `query`, then rank neighbors from the predicted class.
    pub fn explain(&self, query: &Image, true_class: Option<u8>, method: Method) -> Result<Explanation> {
        let probs = self.model.predict_proba(&query.pixels)?;
        let predicted = argmax(&probs) as u8;
        let mut e = match method {
            Method::Fgns => rank_fgns(
                query,
                predicted,
                self.model,
                self.train,
                self.catalog,
                self.prototypes,
                &self.config,
                Some(&self.index),
            )?,
            Method::KnnBaseline => Explanation {
                query_id: query.id,
                predicted_class: predicted,
                true_class: None,
                method,
                fallback: false,
                neighbors: self
                    .index
                    .rank(query, predicted, self.config.n_neighbors, self.config.knn_all_classes)?,
            },
        };
        e.true_class = true_class;
        Ok(e)
    }
}
