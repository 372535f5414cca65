//! Feature-guided neighbor selection (FGNS) for example-based explanations of
//! image classifiers.
//!
//! The pipeline:
//!
//! 1. [`segmentation`]: LIME-style attribution over a fixed superpixel grid.
//! 2. [`catalog`]: aggregate per-image superpixels into class-level masks,
//!    validate them by how much neutralizing them lowers the model's
//!    confidence, and diversify with k-means plus IoU de-duplication.
//! 3. [`prototypes`]: pixel-wise median image per class.
//! 4. [`neighbors`]: rank same-class training instances by the masked squared
//!    distance to the prototype, or by the Hadamard contribution baseline.
//! 5. [`evaluation`]: distance, dispersion and variance comparisons with
//!    two-sample t-tests.

pub mod catalog;
pub mod classifier;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod kmeans;
pub mod mask;
pub mod neighbors;
pub mod prototypes;
pub mod rng;
pub mod segmentation;
pub mod synthetic;

pub use catalog::{build_catalog, ClassFeatureCatalog, FeatureMask};
pub use classifier::{ClassifierModel, ProbabilisticClassifier};
pub use config::RunConfig;
pub use dataset::{load_idx, Image, LabeledDataset, Split};
pub use error::{FgnsError, Result};
pub use mask::{iou, Mask};
pub use neighbors::{Explainer, Explanation, Method};
pub use prototypes::{build_prototype, Prototype};
