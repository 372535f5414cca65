//! Reference classifier: flatten → dense(256) → ReLU → dense(C) → softmax,
//! trained with mini-batch SGD on cross-entropy.
//!
//! The ReLU output is the penultimate layer; the rows of the final weight
//! matrix are the per-class classification weights used by the Hadamard
//! contribution baseline.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::LabeledDataset;
use crate::error::{FgnsError, Result};
use crate::rng::stream_rng;

/// Anything that maps flattened images to class probabilities.
///
/// Attribution and global scoring are written against this trait so they stay
/// model-agnostic.
pub trait ProbabilisticClassifier: Sync {
    fn num_classes(&self) -> usize;

    fn input_len(&self) -> usize;

    /// Row-wise class probabilities for a batch of flattened images.
    fn predict_proba_batch(&self, xs: ArrayView2<'_, f64>) -> Array2<f64>;

    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_len() {
            return Err(FgnsError::arg(format!(
                "input has {} values, model expects {}",
                x.len(),
                self.input_len()
            )));
        }
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("shape checked");
        Ok(self.predict_proba_batch(xs).row(0).to_vec())
    }

    fn predict(&self, x: &[f64]) -> Result<u8> {
        Ok(argmax(&self.predict_proba(x)?) as u8)
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 256,
            batch_size: 64,
            learning_rate: 0.1,
            epochs: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub config: TrainConfig,
    pub seed: u64,
    pub dataset_checksum: String,
    pub train_size: usize,
    /// Mean cross-entropy over each epoch's mini-batches.
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub format: String,
    pub rows: usize,
    pub cols: usize,
    pub hidden: usize,
    pub classes: usize,
    /// `hidden × input`
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `classes × hidden`
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub metadata: Option<TrainingMetadata>,
}

pub const MODEL_FORMAT: &str = "fgns-mlp-v1";

/// Parameter gradients, same shapes as the model's tensors.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionVector {
    pub class: u8,
    pub values: Vec<f64>,
}

fn softmax_rows(mut z: Array2<f64>) -> Array2<f64> {
    for mut row in z.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    z
}

impl ClassifierModel {
    /// Seeded uniform initialization in `±1/sqrt(fan_in)`, zero biases.
    pub fn init(rows: usize, cols: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let input = rows * cols;
        let mut rng = stream_rng(seed, "init", 0);
        let b_in = 1.0 / (input as f64).sqrt();
        let b_hid = 1.0 / (hidden as f64).sqrt();
        let w1 = Array2::from_shape_fn((hidden, input), |_| rng.random_range(-b_in..=b_in));
        let w2 = Array2::from_shape_fn((classes, hidden), |_| rng.random_range(-b_hid..=b_hid));
        ClassifierModel {
            format: MODEL_FORMAT.into(),
            rows,
            cols,
            hidden,
            classes,
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: Array1::zeros(classes),
            metadata: None,
        }
    }

    pub fn zeros(rows: usize, cols: usize, hidden: usize, classes: usize) -> Self {
        ClassifierModel {
            format: MODEL_FORMAT.into(),
            rows,
            cols,
            hidden,
            classes,
            w1: Array2::zeros((hidden, rows * cols)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((classes, hidden)),
            b2: Array1::zeros(classes),
            metadata: None,
        }
    }

    pub fn penultimate_width(&self) -> usize {
        self.hidden
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.rows * self.cols {
            return Err(FgnsError::arg(format!(
                "input has {} values, model expects {}x{}",
                x.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(())
    }

    /// ReLU activations for a batch, `n × hidden`.
    pub fn hidden_batch(&self, xs: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = xs.dot(&self.w1.t());
        z += &self.b1;
        z.mapv_inplace(|v| v.max(0.0));
        z
    }

    pub fn hidden(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("shape checked");
        Ok(self.hidden_batch(xs).row(0).to_vec())
    }

    pub fn logits_batch(&self, xs: ArrayView2<'_, f64>) -> Array2<f64> {
        let h = self.hidden_batch(xs);
        let mut z = h.dot(&self.w2.t());
        z += &self.b2;
        z
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("shape checked");
        Ok(self.logits_batch(xs).row(0).to_vec())
    }

    /// Element-wise product of penultimate activations and the class-`c`
    /// weight row.
    pub fn contribution_vector(&self, x: &[f64], class: u8) -> Result<ContributionVector> {
        let h = self.hidden(x)?;
        self.contribution_from_hidden(&h, class)
    }

    pub fn contribution_from_hidden(&self, h: &[f64], class: u8) -> Result<ContributionVector> {
        let c = usize::from(class);
        if c >= self.classes {
            return Err(FgnsError::arg(format!(
                "class {class} outside model's {} classes",
                self.classes
            )));
        }
        if h.len() != self.hidden {
            return Err(FgnsError::arg("activation width mismatch"));
        }
        let row = self.w2.row(c);
        Ok(ContributionVector {
            class,
            values: h.iter().zip(row.iter()).map(|(a, w)| a * w).collect(),
        })
    }

    /// Mean cross-entropy and its parameter gradients over a batch.
    pub fn loss_and_gradients(&self, xs: ArrayView2<'_, f64>, ys: &[u8]) -> (f64, Gradients) {
        let n = xs.nrows() as f64;
        let mut z1 = xs.dot(&self.w1.t());
        z1 += &self.b1;
        let h = z1.mapv(|v| v.max(0.0));
        let mut z2 = h.dot(&self.w2.t());
        z2 += &self.b2;
        let p = softmax_rows(z2);

        let mut loss = 0.0;
        let mut dz2 = p;
        for (i, &y) in ys.iter().enumerate() {
            let y = usize::from(y);
            loss -= dz2[[i, y]].max(f64::MIN_POSITIVE).ln();
            dz2[[i, y]] -= 1.0;
        }
        loss /= n;
        dz2.mapv_inplace(|v| v / n);

        let gw2 = dz2.t().dot(&h);
        let gb2 = dz2.sum_axis(Axis(0));
        let mut dz1 = dz2.dot(&self.w2);
        ndarray::Zip::from(&mut dz1)
            .and(&z1)
            .for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
        let gw1 = dz1.t().dot(&xs);
        let gb1 = dz1.sum_axis(Axis(0));
        (
            loss,
            Gradients {
                w1: gw1,
                b1: gb1,
                w2: gw2,
                b2: gb2,
            },
        )
    }

    /// Mean cross-entropy only.
    pub fn loss(&self, xs: ArrayView2<'_, f64>, ys: &[u8]) -> f64 {
        let p = self.predict_proba_batch(xs);
        let total: f64 = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| -p[[i, usize::from(y)]].max(f64::MIN_POSITIVE).ln())
            .sum();
        total / xs.nrows() as f64
    }

    fn apply(&mut self, g: &Gradients, lr: f64) {
        self.w1.scaled_add(-lr, &g.w1);
        self.b1.scaled_add(-lr, &g.b1);
        self.w2.scaled_add(-lr, &g.w2);
        self.b2.scaled_add(-lr, &g.b2);
    }

    /// Fraction of `ds` whose argmax prediction matches its label.
    pub fn accuracy(&self, ds: &LabeledDataset) -> f64 {
        if ds.is_empty() {
            return 0.0;
        }
        let preds = predict_dataset(self, ds);
        let hits = preds
            .iter()
            .zip(ds.labels())
            .filter(|(p, l)| p == l)
            .count();
        hits as f64 / ds.len() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: ClassifierModel = serde_json::from_str(s)?;
        if m.format != MODEL_FORMAT {
            return Err(FgnsError::Format(format!("unknown model format {:?}", m.format)));
        }
        if m.w1.dim() != (m.hidden, m.rows * m.cols)
            || m.b1.len() != m.hidden
            || m.w2.dim() != (m.classes, m.hidden)
            || m.b2.len() != m.classes
        {
            return Err(FgnsError::Consistency("model tensor shapes disagree with header".into()));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn checksum(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }
}

impl ProbabilisticClassifier for ClassifierModel {
    fn num_classes(&self) -> usize {
        self.classes
    }

    fn input_len(&self) -> usize {
        self.rows * self.cols
    }

    fn predict_proba_batch(&self, xs: ArrayView2<'_, f64>) -> Array2<f64> {
        softmax_rows(self.logits_batch(xs))
    }
}

/// The given dataset positions as a normalized `n × pixels` matrix.
pub fn batch_matrix(ds: &LabeledDataset, indices: &[usize]) -> Array2<f64> {
    let per = ds.pixels_per_image();
    let mut xs = Array2::zeros((indices.len(), per));
    for (mut row, &i) in xs.rows_mut().into_iter().zip(indices) {
        for (dst, &b) in row.iter_mut().zip(ds.raw(i)) {
            *dst = f64::from(b) / 255.0;
        }
    }
    xs
}

/// Argmax predictions for every instance of `ds`, in order.
pub fn predict_dataset<M: ProbabilisticClassifier + ?Sized>(m: &M, ds: &LabeledDataset) -> Vec<u8> {
    let all: Vec<usize> = (0..ds.len()).collect();
    let mut out = Vec::with_capacity(ds.len());
    for chunk in all.chunks(512) {
        let p = m.predict_proba_batch(batch_matrix(ds, chunk).view());
        out.extend(p.rows().into_iter().map(|r| argmax(&r.to_vec()) as u8));
    }
    out
}

/// Train the reference classifier. Shuffling and initialization derive from
/// `seed` only, so identical inputs produce bit-identical models.
pub fn train(
    train: &LabeledDataset,
    held_out: Option<&LabeledDataset>,
    classes: usize,
    config: &TrainConfig,
    seed: u64,
) -> Result<ClassifierModel> {
    if train.is_empty() {
        return Err(FgnsError::arg("training set is empty"));
    }
    if config.epochs == 0 || config.batch_size == 0 || config.hidden == 0 {
        return Err(FgnsError::arg("epochs, batch size and hidden width must be ≥ 1"));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(FgnsError::arg("learning rate must be positive and finite"));
    }
    if let Some(&l) = train.labels().iter().find(|&&l| usize::from(l) >= classes) {
        return Err(FgnsError::arg(format!("label {l} outside {classes} classes")));
    }
    let mut model = ClassifierModel::init(train.rows(), train.cols(), config.hidden, classes, seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut rng = stream_rng(seed, "shuffle", epoch as u64);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let xs = batch_matrix(train, chunk);
            let ys: Vec<u8> = chunk.iter().map(|&i| train.label(i)).collect();
            let (loss, grads) = model.loss_and_gradients(xs.view(), &ys);
            if !loss.is_finite() {
                return Err(FgnsError::Divergence { epoch: epoch + 1 });
            }
            model.apply(&grads, config.learning_rate);
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        tracing::debug!(epoch = epoch + 1, loss = mean, "epoch finished");
        epoch_losses.push(mean);
    }
    if model.w1.iter().chain(model.w2.iter()).any(|v| !v.is_finite()) {
        return Err(FgnsError::Divergence {
            epoch: config.epochs,
        });
    }
    let train_accuracy = model.accuracy(train);
    let test_accuracy = held_out.map(|t| model.accuracy(t));
    model.metadata = Some(TrainingMetadata {
        config: config.clone(),
        seed,
        dataset_checksum: train.checksum().to_string(),
        train_size: train.len(),
        epoch_losses,
        train_accuracy,
        test_accuracy,
        config_hash: None,
    });
    Ok(model)
}
