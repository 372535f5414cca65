//! Frozen outputs on synthetic data. Regenerate with `FGNS_BLESS=1` after an
//! intentional behaviour change and review the diff.

use std::path::PathBuf;

use fgns::catalog::{sage_score, EarlyStop};
use fgns::classifier::{self, ClassifierModel, TrainConfig};
use fgns::evaluation::{select_queries, EvalConfig};
use fgns::segmentation::grid_segmentation;
use fgns::synthetic::{generate, SyntheticConfig};
use fgns::{LabeledDataset, ProbabilisticClassifier};
use serde_json::{json, Value};

const FLOAT_TOL: f64 = 1e-9;

fn golden(name: &str, actual: Value) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.json"));
    if std::env::var_os("FGNS_BLESS").is_some() {
        std::fs::write(&path, serde_json::to_string_pretty(&actual).unwrap() + "\n").unwrap();
        return;
    }
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}; run with FGNS_BLESS=1", path.display()));
    let expected: Value = serde_json::from_str(&text).unwrap();
    assert_close(&expected, &actual, name);
}

fn assert_close(want: &Value, got: &Value, at: &str) {
    match (want, got) {
        (Value::Number(a), Value::Number(b)) if a.is_f64() || b.is_f64() => {
            let (a, b) = (a.as_f64().unwrap(), b.as_f64().unwrap());
            assert!((a - b).abs() <= FLOAT_TOL, "{at}: expected {a}, got {b}");
        }
        (Value::Array(a), Value::Array(b)) => {
            assert_eq!(a.len(), b.len(), "{at}: length");
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                assert_close(x, y, &format!("{at}[{i}]"));
            }
        }
        (Value::Object(a), Value::Object(b)) => {
            assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>(), "{at}: keys");
            for (k, x) in a {
                assert_close(x, &b[k], &format!("{at}.{k}"));
            }
        }
        _ => assert_eq!(want, got, "{at}"),
    }
}

fn fixture() -> (LabeledDataset, LabeledDataset, ClassifierModel) {
    let (train, test) = generate(&SyntheticConfig {
        train_per_class: 80,
        test_per_class: 30,
        ..Default::default()
    })
    .unwrap();
    let cfg = TrainConfig { hidden: 32, epochs: 3, ..Default::default() };
    let model = classifier::train(&train, None, 10, &cfg, 5).unwrap();
    (train, test, model)
}

#[test]
fn frozen_synthetic_outputs() {
    let (train, test, model) = fixture();

    let probs: Vec<Vec<f64>> = (0..3)
        .map(|i| model.predict_proba(&test.image(i).pixels).unwrap())
        .collect();
    for p in &probs {
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    golden(
        "probabilities",
        json!({
            "train_checksum": train.checksum(),
            "test_checksum": test.checksum(),
            "train_accuracy": model.accuracy(&train),
            "probabilities": probs,
        }),
    );

    // centre cell of the 7×7 grid, scored against class-3 training images
    let mask = grid_segmentation(28, 28, 4).unwrap().superpixel_mask(24);
    let images: Vec<_> = (0..train.len())
        .filter(|&i| train.labels()[i] == 3)
        .map(|i| train.image(i))
        .collect();
    let full = sage_score(&model, &mask, &images, 3, 0.0, None).unwrap();
    let early = sage_score(&model, &mask, &images, 3, 0.0, Some(EarlyStop::default())).unwrap();
    assert_eq!(full.n_evaluated, images.len());
    assert!(early.n_evaluated >= 50 && early.n_evaluated <= images.len());
    assert!(
        (early.score - full.score).abs() <= 2.0 * early.std_error.max(1e-12),
        "early {:?} vs full {:?}",
        early,
        full
    );
    golden(
        "sage",
        json!({
            "full_score": full.score,
            "full_std_error": full.std_error,
            "early_score": early.score,
            "early_n": early.n_evaluated,
        }),
    );

    let cfg = EvalConfig { n_correct: 10, n_incorrect: 10, ..Default::default() };
    let sample = select_queries(&model, &test, &cfg, 21).unwrap();
    golden("queries", serde_json::to_value(&sample).unwrap());
}
