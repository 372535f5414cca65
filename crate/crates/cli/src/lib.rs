//! Pipeline commands behind the `fgns` binary. Each command reads its inputs
//! from the run configuration and writes artifacts into `output_dir` with
//! write-then-rename, so an interrupted run never leaves a truncated file.

pub mod panel;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use fgns::catalog::build_catalog;
use fgns::classifier::{self, ClassifierModel};
use fgns::dataset::{load_idx, write_idx, Image, LabeledDataset, Split, CLASS_UNIVERSE};
use fgns::evaluation::{histogram_csv, run_quant_eval};
use fgns::neighbors::{Explainer, Explanation, Method};
use fgns::prototypes::{build_prototypes, Prototype, PrototypeFile};
use fgns::synthetic::{self, SyntheticConfig};
use fgns::{ClassFeatureCatalog, FgnsError, Mask, Result, RunConfig};
use serde::{Deserialize, Serialize};

use panel::Format;

pub const MODEL_FILE: &str = "model.json";
pub const CATALOG_FILE: &str = "catalog.json";
pub const PROTOTYPES_FILE: &str = "prototypes.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const HISTOGRAM_CSV: &str = "histogram.csv";
pub const EVAL_EXPLANATIONS: &str = "eval_explanations.json";

/// Process exit code for an error.
pub fn exit_code(e: &FgnsError) -> i32 {
    match e.root() {
        FgnsError::Divergence { .. } => 3,
        FgnsError::ChecksumMismatch { .. } => 4,
        FgnsError::InsufficientData(_) => 5,
        _ => 2,
    }
}

/// Write `bytes` to a sibling temporary file, then rename it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| FgnsError::Io(e.error))?;
    Ok(())
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn train_classes(cfg: &RunConfig) -> BTreeSet<u8> {
    cfg.data.train_classes.iter().copied().collect()
}

pub fn load_train(cfg: &RunConfig) -> Result<LabeledDataset> {
    load_idx(&cfg.data.train_images, &cfg.data.train_labels, Split::Train)?.filter_classes(&train_classes(cfg))
}

/// Full test split; evaluation picks its own class subset.
pub fn load_test(cfg: &RunConfig) -> Result<LabeledDataset> {
    load_idx(&cfg.data.test_images, &cfg.data.test_labels, Split::Test)
}

pub fn load_model(cfg: &RunConfig) -> Result<ClassifierModel> {
    ClassifierModel::load(&out_path(cfg, MODEL_FILE))
}

fn require_same(expected: &str, found: &str) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(FgnsError::ChecksumMismatch {
            expected: expected.into(),
            found: found.into(),
        })
    }
}

/// Reject a model that was trained on different data.
pub fn check_model_dataset(model: &ClassifierModel, train: &LabeledDataset) -> Result<()> {
    let meta = model
        .metadata
        .as_ref()
        .ok_or_else(|| FgnsError::Format("model has no training metadata".into()))?;
    require_same(&meta.dataset_checksum, train.checksum())
}

pub struct Artifacts {
    pub model: ClassifierModel,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub catalog: ClassFeatureCatalog,
    pub prototypes: BTreeMap<u8, Prototype>,
}

/// Load every artifact and verify they were built from one another.
pub fn load_artifacts(cfg: &RunConfig) -> Result<Artifacts> {
    let train = load_train(cfg)?;
    let test = load_test(cfg)?;
    let model = load_model(cfg)?;
    check_model_dataset(&model, &train)?;
    let catalog = ClassFeatureCatalog::load(&out_path(cfg, CATALOG_FILE))?;
    require_same(&catalog.model_checksum, &model.checksum()?)?;
    require_same(&catalog.dataset_checksum, train.checksum())?;
    let protos = PrototypeFile::load(&out_path(cfg, PROTOTYPES_FILE))?;
    require_same(&protos.dataset_checksum, train.checksum())?;
    Ok(Artifacts {
        model,
        train,
        test,
        catalog,
        prototypes: protos.prototypes,
    })
}

pub fn cmd_train(cfg: &RunConfig) -> Result<PathBuf> {
    let train = load_train(cfg)?;
    let test = load_test(cfg)?.filter_classes(&train_classes(cfg))?;
    let mut model = classifier::train(&train, Some(&test), CLASS_UNIVERSE, &cfg.classifier, cfg.seeds.train)?;
    let meta = model.metadata.as_mut().expect("train sets metadata");
    meta.config_hash = Some(cfg.hash());
    let (train_acc, test_acc) = (meta.train_accuracy, meta.test_accuracy.unwrap_or(f64::NAN));
    let path = out_path(cfg, MODEL_FILE);
    write_atomic(&path, model.to_json()?.as_bytes())?;
    println!(
        "accuracy: train {train_acc:.4} test {test_acc:.4} (n_train {}, n_test {})",
        train.len(),
        test.len()
    );
    println!("model: {} sha256 {}", path.display(), model.checksum()?);
    Ok(path)
}

pub fn cmd_build_features(cfg: &RunConfig) -> Result<(PathBuf, PathBuf)> {
    let train = load_train(cfg)?;
    let model = load_model(cfg)?;
    check_model_dataset(&model, &train)?;
    let hash = cfg.hash();
    let classes: Vec<u8> = train_classes(cfg).into_iter().collect();
    let catalog = build_catalog(&model, &train, Some(&classes), &cfg.features, cfg.seeds.features)?;
    for (c, masks) in &catalog.classes {
        let scores: Vec<String> = masks.iter().map(|m| format!("{:.4}", m.sage_score)).collect();
        println!("class {c}: {} masks, scores [{}]", masks.len(), scores.join(", "));
    }
    let fallback = catalog.fallback_classes();
    if !fallback.is_empty() {
        tracing::warn!(?fallback, "classes without masks will use the baseline ranking");
        println!("fallback classes: {fallback:?}");
    }
    let protos = PrototypeFile {
        version: 1,
        dataset_checksum: train.checksum().to_string(),
        config_hash: Some(hash.clone()),
        prototypes: build_prototypes(&train, &classes)?,
    };
    let cat_path = out_path(cfg, CATALOG_FILE);
    let proto_path = out_path(cfg, PROTOTYPES_FILE);
    write_atomic(&cat_path, catalog.to_json(Some(&hash))?.as_bytes())?;
    write_atomic(&proto_path, serde_json::to_string(&protos)?.as_bytes())?;
    println!("catalog: {} sha256 {}", cat_path.display(), catalog.checksum()?);
    Ok((cat_path, proto_path))
}

/// Explanation record as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationFile {
    pub config_hash: String,
    #[serde(flatten)]
    pub explanation: Explanation,
}

impl ExplanationFile {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub fn explanation_stem(query_id: usize, method: Method) -> String {
    format!("explain-{query_id}-{}", method.as_str())
}

/// Union of the predicted class's catalog masks.
fn class_overlay(catalog: &ClassFeatureCatalog, class: u8) -> Mask {
    let mut bits = vec![false; catalog.rows * catalog.cols];
    for m in catalog.masks(class) {
        for (b, &on) in bits.iter_mut().zip(m.mask.bits()) {
            *b |= on;
        }
    }
    Mask::from_bits(catalog.rows, catalog.cols, bits)
}

fn panel_bytes(
    e: &Explanation,
    test: &LabeledDataset,
    train: &LabeledDataset,
    overlay: Option<&Mask>,
    format: Format,
    hash: &str,
) -> Result<Vec<u8>> {
    let unknown = |id: usize| FgnsError::arg(format!("id {id} not found"));
    let query = test
        .index_of_id(e.query_id)
        .map(|i| test.image(i))
        .ok_or_else(|| unknown(e.query_id))?;
    let mut tiles: Vec<Image> = vec![query];
    for nb in &e.neighbors {
        let pos = train.index_of_id(nb.train_id).ok_or_else(|| unknown(nb.train_id))?;
        tiles.push(train.image(pos));
    }
    let views: Vec<&[f64]> = tiles.iter().map(|t| t.pixels.as_slice()).collect();
    let p = panel::render(&views, test.rows(), test.cols(), overlay);
    match format {
        Format::Png => panel::encode_png(&p, hash).map_err(|e| FgnsError::Serialization(e.to_string())),
        Format::Pgm => Ok(panel::encode_pnm(&p, hash)),
    }
}

pub struct ExplainOutputs {
    pub explanation: Explanation,
    pub json: PathBuf,
    pub panel: PathBuf,
}

pub fn cmd_explain(
    cfg: &RunConfig,
    query_id: usize,
    method: Method,
    overlay: bool,
    format: Format,
) -> Result<ExplainOutputs> {
    let a = load_artifacts(cfg)?;
    let pos = a
        .test
        .index_of_id(query_id)
        .ok_or_else(|| FgnsError::arg(format!("unknown query id {query_id}")))?;
    let explainer = Explainer::new(&a.model, &a.train, &a.catalog, &a.prototypes, cfg.neighbors.clone())?;
    let explanation = explainer.explain(&a.test.image(pos), Some(a.test.label(pos)), method)?;
    let hash = cfg.hash();
    let stem = explanation_stem(query_id, method);
    let json = out_path(cfg, &format!("{stem}.json"));
    let file = ExplanationFile {
        config_hash: hash.clone(),
        explanation: explanation.clone(),
    };
    let overlay_mask = overlay.then(|| class_overlay(&a.catalog, explanation.predicted_class));
    let bytes = panel_bytes(&explanation, &a.test, &a.train, overlay_mask.as_ref(), format, &hash)?;
    let panel = out_path(cfg, &format!("{stem}.{}", format.extension()));
    write_atomic(&json, serde_json::to_string_pretty(&file)?.as_bytes())?;
    write_atomic(&panel, &bytes)?;
    let ids: Vec<String> = explanation
        .neighbors
        .iter()
        .map(|n| format!("{} (class {}, score {:.4})", n.train_id, n.label, n.score))
        .collect();
    println!(
        "query {query_id}: true {} predicted {}{}; neighbors {}",
        a.test.label(pos),
        explanation.predicted_class,
        if explanation.fallback { " [fallback]" } else { "" },
        ids.join(", ")
    );
    Ok(ExplainOutputs {
        explanation,
        json,
        panel,
    })
}

/// Re-render the panel of a saved explanation.
pub fn cmd_render(
    cfg: &RunConfig,
    explanation: &Path,
    out: Option<&Path>,
    overlay: bool,
    format: Format,
) -> Result<PathBuf> {
    let file = ExplanationFile::load(explanation)?;
    let train = load_train(cfg)?;
    let test = load_test(cfg)?;
    let overlay_mask = if overlay {
        let catalog = ClassFeatureCatalog::load(&out_path(cfg, CATALOG_FILE))?;
        require_same(&catalog.dataset_checksum, train.checksum())?;
        Some(class_overlay(&catalog, file.explanation.predicted_class))
    } else {
        None
    };
    let bytes = panel_bytes(
        &file.explanation,
        &test,
        &train,
        overlay_mask.as_ref(),
        format,
        &file.config_hash,
    )?;
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => explanation.with_extension(format.extension()),
    };
    write_atomic(&path, &bytes)?;
    println!("panel: {}", path.display());
    Ok(path)
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<fgns::evaluation::MetricReport> {
    let a = load_artifacts(cfg)?;
    let out = run_quant_eval(
        &a.model,
        &a.test,
        &a.train,
        &a.catalog,
        &a.prototypes,
        &cfg.neighbors,
        &cfg.evaluation,
        cfg.seeds.evaluation,
    )?;
    let hash = cfg.hash();
    let mut report = out.report;
    report.config_hash = Some(hash.clone());
    let explanations: Vec<ExplanationFile> = out
        .explanations
        .iter()
        .flat_map(|(f, k)| [f, k])
        .map(|e| ExplanationFile {
            config_hash: hash.clone(),
            explanation: e.clone(),
        })
        .collect();
    let text = report.to_text();
    write_atomic(&out_path(cfg, REPORT_JSON), report.to_json()?.as_bytes())?;
    write_atomic(&out_path(cfg, REPORT_TEXT), text.as_bytes())?;
    write_atomic(
        &out_path(cfg, HISTOGRAM_CSV),
        histogram_csv(&out.histogram, Some(&hash)).as_bytes(),
    )?;
    write_atomic(
        &out_path(cfg, EVAL_EXPLANATIONS),
        serde_json::to_string(&explanations)?.as_bytes(),
    )?;
    print!("{text}");
    Ok(report)
}

/// Write a synthetic dataset as gzip IDX files under `dir`; returns the
/// `[data]` section that points at them.
pub fn cmd_gen_synthetic(dir: &Path, syn: &SyntheticConfig) -> Result<fgns::config::DataConfig> {
    let (train, test) = synthetic::generate(syn)?;
    std::fs::create_dir_all(dir)?;
    let data = fgns::config::DataConfig {
        train_images: dir.join("train-images-idx3-ubyte.gz"),
        train_labels: dir.join("train-labels-idx1-ubyte.gz"),
        test_images: dir.join("t10k-images-idx3-ubyte.gz"),
        test_labels: dir.join("t10k-labels-idx1-ubyte.gz"),
        ..Default::default()
    };
    write_idx(&train, &data.train_images, &data.train_labels, true)?;
    write_idx(&test, &data.test_images, &data.test_labels, true)?;
    println!(
        "synthetic: {} train, {} test images in {}",
        train.len(),
        test.len(),
        dir.display()
    );
    Ok(data)
}
