//! Quantitative comparison of FGNS and the Hadamard k-NN baseline over a
//! balanced sample of correctly and incorrectly classified test queries.
//!
//! Three families of numbers are produced per method:
//! query→neighbor distances, neighbor→prototype distances, and the spread
//! (standard deviation and variance) of the latter. Both distance families
//! are compared with pooled and Welch two-sample t-tests, at the
//! per-neighbor level and after averaging each query's neighbors.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::catalog::ClassFeatureCatalog;
use crate::classifier::{predict_dataset, ClassifierModel};
use crate::dataset::LabeledDataset;
use crate::error::{FgnsError, Result};
use crate::neighbors::{Explainer, Explanation, Method, NeighborConfig};
use crate::prototypes::Prototype;
use crate::rng::stream_rng;

pub const QUARTILE_CONVENTION: &str =
    "quartiles are medians of the lower and upper halves, each half including the overall median when n is odd";

pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(FgnsError::arg(format!(
            "vectors differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Describe {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub sd: f64,
    pub variance: f64,
    pub min: f64,
    pub max: f64,
}

pub fn describe(xs: &[f64]) -> Result<Describe> {
    if xs.is_empty() {
        return Err(FgnsError::arg("cannot describe an empty sample"));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let variance = if n > 1 {
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let half = n / 2;
    let (lower, upper) = if n % 2 == 1 {
        (&v[..=half], &v[half..])
    } else {
        (&v[..half], &v[half..])
    };
    let (q1, q3) = if n == 1 {
        (v[0], v[0])
    } else {
        (median_sorted(lower), median_sorted(upper))
    };
    let sd = variance.sqrt();
    Ok(Describe {
        n,
        mean,
        median: median_sorted(&v),
        q1,
        q3,
        iqr: q3 - q1,
        sd,
        variance: sd * sd,
        min: v[0],
        max: v[n - 1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSample {
    pub n1: usize,
    pub n2: usize,
    pub mean_diff: f64,
    pub pooled: TTest,
    pub welch: TTest,
}

fn two_sided_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Student's pooled-variance t-test (`df = n₁ + n₂ − 2`) of `mean(xs) −
/// mean(ys)`, with the Welch variant alongside.
pub fn two_sample_t(xs: &[f64], ys: &[f64]) -> Result<TwoSample> {
    let (n1, n2) = (xs.len(), ys.len());
    if n1 < 2 || n2 < 2 {
        return Err(FgnsError::arg("each sample needs at least two observations"));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (m1, m2) = (mean(xs), mean(ys));
    let ss = |v: &[f64], m: f64| v.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    let (ss1, ss2) = (ss(xs, m1), ss(ys, m2));
    let (f1, f2) = (n1 as f64, n2 as f64);
    let diff = m1 - m2;
    let df_pooled = f1 + f2 - 2.0;

    if ss1 == 0.0 && ss2 == 0.0 {
        if diff == 0.0 {
            let zero = |df| TTest { t: 0.0, df, p: 1.0 };
            return Ok(TwoSample {
                n1,
                n2,
                mean_diff: 0.0,
                pooled: zero(df_pooled),
                welch: zero(df_pooled),
            });
        }
        return Err(FgnsError::DegenerateSample(format!(
            "both samples have zero variance but means differ by {diff}"
        )));
    }

    let sp2 = (ss1 + ss2) / df_pooled;
    let t_pooled = diff / (sp2 * (1.0 / f1 + 1.0 / f2)).sqrt();

    let (v1, v2) = (ss1 / (f1 - 1.0) / f1, ss2 / (f2 - 1.0) / f2);
    let t_welch = diff / (v1 + v2).sqrt();
    let df_welch = (v1 + v2).powi(2) / (v1 * v1 / (f1 - 1.0) + v2 * v2 / (f2 - 1.0));

    Ok(TwoSample {
        n1,
        n2,
        mean_diff: diff,
        pooled: TTest {
            t: t_pooled,
            df: df_pooled,
            p: two_sided_p(t_pooled, df_pooled),
        },
        welch: TTest {
            t: t_welch,
            df: df_welch,
            p: two_sided_p(t_welch, df_welch),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceSpace {
    /// Raw normalized pixels.
    Pixel,
    /// Hadamard contribution vectors for the predicted class (ablation).
    Contribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub n_correct: usize,
    pub n_incorrect: usize,
    /// Test classes queries are drawn from.
    pub eval_classes: Vec<u8>,
    pub histogram_bins: usize,
    pub distance_space: DistanceSpace,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_correct: 50,
            n_incorrect: 50,
            eval_classes: vec![1, 2, 4, 5, 6, 7],
            histogram_bins: 20,
            distance_space: DistanceSpace::Pixel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub seed: u64,
    pub requested_correct: usize,
    pub requested_incorrect: usize,
    /// Test-split ids.
    pub correct: Vec<usize>,
    pub incorrect: Vec<usize>,
    /// Misclassifications available in the evaluation subset.
    pub available_incorrect: usize,
}

/// Seeded balanced sample of correct and incorrect predictions among
/// `test` instances whose label is in `eval_classes`.
pub fn select_queries(
    model: &ClassifierModel,
    test: &LabeledDataset,
    config: &EvalConfig,
    seed: u64,
) -> Result<EvalSample> {
    let subset = test.filter_classes(&config.eval_classes.iter().copied().collect())?;
    let preds = predict_dataset(model, &subset);
    let mut correct = Vec::new();
    let mut incorrect = Vec::new();
    for (i, (&p, &l)) in preds.iter().zip(subset.labels()).enumerate() {
        if p == l {
            correct.push(subset.id(i));
        } else {
            incorrect.push(subset.id(i));
        }
    }
    let available_incorrect = incorrect.len();
    if available_incorrect < 2 {
        return Err(FgnsError::InsufficientData(format!(
            "only {available_incorrect} misclassified test instances in classes {:?}; at least 2 are needed",
            config.eval_classes
        )));
    }
    if available_incorrect < config.n_incorrect {
        tracing::warn!(
            available = available_incorrect,
            requested = config.n_incorrect,
            "fewer misclassifications than requested; using all of them"
        );
    }
    correct.shuffle(&mut stream_rng(seed, "eval_correct", 0));
    incorrect.shuffle(&mut stream_rng(seed, "eval_incorrect", 0));
    correct.truncate(config.n_correct);
    incorrect.truncate(config.n_incorrect);
    correct.sort_unstable();
    incorrect.sort_unstable();
    Ok(EvalSample {
        seed,
        requested_correct: config.n_correct,
        requested_incorrect: config.n_incorrect,
        correct,
        incorrect,
        available_incorrect,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub query_to_neighbor: Describe,
    pub neighbor_to_prototype: Describe,
    pub query_to_neighbor_per_query: Describe,
    pub neighbor_to_prototype_per_query: Describe,
    /// Standard deviation of neighbor→prototype distances.
    pub dispersion: f64,
    /// Variance of neighbor→prototype distances.
    pub variance: f64,
    pub fallback_queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub family: String,
    pub level: String,
    pub test: TwoSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Directions {
    pub fgns_farther_from_query: bool,
    pub fgns_closer_to_prototype: bool,
    pub fgns_lower_prototype_variance: bool,
}

/// Published values of the original study, printed for side-by-side reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValues {
    pub query_to_neighbor_fgns_m: f64,
    pub query_to_neighbor_fgns_iqr: f64,
    pub query_to_neighbor_knn_m: f64,
    pub query_to_neighbor_knn_iqr: f64,
    pub query_to_neighbor_t: f64,
    pub neighbor_to_prototype_fgns_m: f64,
    pub neighbor_to_prototype_fgns_iqr: f64,
    pub neighbor_to_prototype_fgns_sd: f64,
    pub neighbor_to_prototype_knn_m: f64,
    pub neighbor_to_prototype_knn_iqr: f64,
    pub neighbor_to_prototype_knn_sd: f64,
    pub neighbor_to_prototype_t: f64,
    pub t_df: f64,
    pub variance_fgns: f64,
    pub variance_knn: f64,
}

impl Default for ReferenceValues {
    fn default() -> Self {
        ReferenceValues {
            query_to_neighbor_fgns_m: 6.87,
            query_to_neighbor_fgns_iqr: 1.52,
            query_to_neighbor_knn_m: 4.92,
            query_to_neighbor_knn_iqr: 1.48,
            query_to_neighbor_t: 23.82,
            neighbor_to_prototype_fgns_m: 4.14,
            neighbor_to_prototype_fgns_iqr: 1.21,
            neighbor_to_prototype_fgns_sd: 0.73,
            neighbor_to_prototype_knn_m: 5.55,
            neighbor_to_prototype_knn_iqr: 1.39,
            neighbor_to_prototype_knn_sd: 1.03,
            neighbor_to_prototype_t: -19.37,
            t_df: 298.0,
            variance_fgns: 0.53,
            variance_knn: 1.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub quartile_convention: String,
    pub distance_space: DistanceSpace,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub n_correct: usize,
    pub n_incorrect: usize,
    pub requested_correct: usize,
    pub requested_incorrect: usize,
    pub available_incorrect: usize,
    pub methods: BTreeMap<Method, MethodStats>,
    pub comparisons: Vec<Comparison>,
    pub directions: Directions,
    pub reference: ReferenceValues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub family: String,
    pub bin_left: f64,
    pub bin_right: f64,
    pub fgns: usize,
    pub knn_baseline: usize,
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub report: MetricReport,
    pub sample: EvalSample,
    pub explanations: Vec<(Explanation, Explanation)>,
    pub histogram: Vec<HistogramRow>,
}

/// Equal-width bins over the pooled range of both samples.
pub fn histogram(family: &str, fgns: &[f64], knn: &[f64], bins: usize) -> Vec<HistogramRow> {
    let bins = bins.max(1);
    let all = fgns.iter().chain(knn);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return Vec::new();
    }
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let bin_of = |x: f64| (((x - lo) / width) as usize).min(bins - 1);
    let mut counts = vec![(0usize, 0usize); bins];
    for &x in fgns {
        counts[bin_of(x)].0 += 1;
    }
    for &x in knn {
        counts[bin_of(x)].1 += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, (f, k))| HistogramRow {
            family: family.to_string(),
            bin_left: lo + b as f64 * width,
            bin_right: lo + (b + 1) as f64 * width,
            fgns: f,
            knn_baseline: k,
        })
        .collect()
}

struct MethodDistances {
    q2n: Vec<f64>,
    n2p: Vec<f64>,
    q2n_per_query: Vec<f64>,
    n2p_per_query: Vec<f64>,
    fallback: usize,
}

fn distances(
    explanations: &[Explanation],
    test: &LabeledDataset,
    train: &LabeledDataset,
    protos: &BTreeMap<u8, Prototype>,
    model: &ClassifierModel,
    space: DistanceSpace,
) -> Result<MethodDistances> {
    let embed = |px: &[f64], class: u8| -> Result<Vec<f64>> {
        match space {
            DistanceSpace::Pixel => Ok(px.to_vec()),
            DistanceSpace::Contribution => Ok(model.contribution_vector(px, class)?.values),
        }
    };
    let mut out = MethodDistances {
        q2n: Vec::new(),
        n2p: Vec::new(),
        q2n_per_query: Vec::new(),
        n2p_per_query: Vec::new(),
        fallback: 0,
    };
    for e in explanations {
        let qpos = test
            .index_of_id(e.query_id)
            .ok_or_else(|| FgnsError::arg(format!("query id {} not in test split", e.query_id)))?;
        let c = e.predicted_class;
        let proto = protos
            .get(&c)
            .ok_or_else(|| FgnsError::arg(format!("no prototype for class {c}")))?;
        let q = embed(&test.image(qpos).pixels, c)?;
        let p = embed(&proto.pixels, c)?;
        let (mut sq, mut sp) = (0.0, 0.0);
        for nb in &e.neighbors {
            let pos = train
                .index_of_id(nb.train_id)
                .ok_or_else(|| FgnsError::arg(format!("train id {} missing", nb.train_id)))?;
            let x = embed(&train.image(pos).pixels, c)?;
            let dq = euclidean(&q, &x)?;
            let dp = euclidean(&x, &p)?;
            out.q2n.push(dq);
            out.n2p.push(dp);
            sq += dq;
            sp += dp;
        }
        if !e.neighbors.is_empty() {
            let k = e.neighbors.len() as f64;
            out.q2n_per_query.push(sq / k);
            out.n2p_per_query.push(sp / k);
        }
        out.fallback += usize::from(e.fallback);
    }
    Ok(out)
}

fn method_stats(d: &MethodDistances) -> Result<MethodStats> {
    let n2p = describe(&d.n2p)?;
    Ok(MethodStats {
        query_to_neighbor: describe(&d.q2n)?,
        query_to_neighbor_per_query: describe(&d.q2n_per_query)?,
        neighbor_to_prototype_per_query: describe(&d.n2p_per_query)?,
        dispersion: n2p.sd,
        variance: n2p.variance,
        neighbor_to_prototype: n2p,
        fallback_queries: d.fallback,
    })
}

/// Run the full quantitative protocol.
#[allow(clippy::too_many_arguments)]
pub fn run_quant_eval(
    model: &ClassifierModel,
    test: &LabeledDataset,
    train: &LabeledDataset,
    catalog: &ClassFeatureCatalog,
    protos: &BTreeMap<u8, Prototype>,
    neighbor_config: &NeighborConfig,
    config: &EvalConfig,
    seed: u64,
) -> Result<EvalOutput> {
    let sample = select_queries(model, test, config, seed)?;
    let explainer = Explainer::new(model, train, catalog, protos, neighbor_config.clone())?;
    let mut explanations = Vec::new();
    for &id in sample.correct.iter().chain(&sample.incorrect) {
        let pos = test.index_of_id(id).expect("sampled from this split");
        let q = test.image(pos);
        let label = Some(test.label(pos));
        explanations.push((
            explainer.explain(&q, label, Method::Fgns)?,
            explainer.explain(&q, label, Method::KnnBaseline)?,
        ));
    }
    let fg: Vec<Explanation> = explanations.iter().map(|(f, _)| f.clone()).collect();
    let kn: Vec<Explanation> = explanations.iter().map(|(_, k)| k.clone()).collect();
    let df = distances(&fg, test, train, protos, model, config.distance_space)?;
    let dk = distances(&kn, test, train, protos, model, config.distance_space)?;

    let mut comparisons = Vec::new();
    for (family, level, a, b) in [
        ("query_to_neighbor", "per_neighbor", &df.q2n, &dk.q2n),
        ("neighbor_to_prototype", "per_neighbor", &df.n2p, &dk.n2p),
        ("query_to_neighbor", "per_query", &df.q2n_per_query, &dk.q2n_per_query),
        ("neighbor_to_prototype", "per_query", &df.n2p_per_query, &dk.n2p_per_query),
    ] {
        comparisons.push(Comparison {
            family: family.into(),
            level: level.into(),
            test: two_sample_t(a, b)?,
        });
    }
    let fgns = method_stats(&df)?;
    let knn = method_stats(&dk)?;
    let directions = Directions {
        fgns_farther_from_query: fgns.query_to_neighbor.mean > knn.query_to_neighbor.mean,
        fgns_closer_to_prototype: fgns.neighbor_to_prototype.mean < knn.neighbor_to_prototype.mean,
        fgns_lower_prototype_variance: fgns.variance < knn.variance,
    };
    let mut histogram_rows = histogram("query_to_neighbor", &df.q2n, &dk.q2n, config.histogram_bins);
    histogram_rows.extend(histogram(
        "neighbor_to_prototype",
        &df.n2p,
        &dk.n2p,
        config.histogram_bins,
    ));
    let report = MetricReport {
        quartile_convention: QUARTILE_CONVENTION.into(),
        distance_space: config.distance_space,
        seed,
        config_hash: None,
        n_correct: sample.correct.len(),
        n_incorrect: sample.incorrect.len(),
        requested_correct: sample.requested_correct,
        requested_incorrect: sample.requested_incorrect,
        available_incorrect: sample.available_incorrect,
        methods: [(Method::Fgns, fgns), (Method::KnnBaseline, knn)].into_iter().collect(),
        comparisons,
        directions,
        reference: ReferenceValues::default(),
    };
    Ok(EvalOutput {
        report,
        sample,
        explanations,
        histogram: histogram_rows,
    })
}

impl MetricReport {
    pub fn comparison(&self, family: &str, level: &str) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.family == family && c.level == level)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Human-readable table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let f = &self.methods[&Method::Fgns];
        let k = &self.methods[&Method::KnnBaseline];
        let r = &self.reference;
        let _ = writeln!(s, "FGNS vs k-NN baseline: quantitative report");
        if let Some(h) = &self.config_hash {
            let _ = writeln!(s, "config hash: {h}");
        }
        let _ = writeln!(s, "quartile convention: {}", self.quartile_convention);
        let _ = writeln!(s, "distance space: {:?}", self.distance_space);
        let _ = writeln!(
            s,
            "queries: {} correct (requested {}), {} incorrect (requested {}, available {}); seed {}",
            self.n_correct,
            self.requested_correct,
            self.n_incorrect,
            self.requested_incorrect,
            self.available_incorrect,
            self.seed
        );
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<26} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}   {:>10}",
            "distance (per neighbor)", "method", "mean", "median", "IQR", "SD", "var", "published"
        );
        let row = |s: &mut String, fam: &str, m: &str, d: &Describe, refm: f64, refiqr: f64| {
            let _ = writeln!(
                s,
                "{:<26} {:>8} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3}   M={:.2} IQR={:.2}",
                fam, m, d.mean, d.median, d.iqr, d.sd, d.variance, refm, refiqr
            );
        };
        row(&mut s, "query -> neighbor", "fgns", &f.query_to_neighbor, r.query_to_neighbor_fgns_m, r.query_to_neighbor_fgns_iqr);
        row(&mut s, "query -> neighbor", "knn", &k.query_to_neighbor, r.query_to_neighbor_knn_m, r.query_to_neighbor_knn_iqr);
        row(&mut s, "neighbor -> prototype", "fgns", &f.neighbor_to_prototype, r.neighbor_to_prototype_fgns_m, r.neighbor_to_prototype_fgns_iqr);
        row(&mut s, "neighbor -> prototype", "knn", &k.neighbor_to_prototype, r.neighbor_to_prototype_knn_m, r.neighbor_to_prototype_knn_iqr);
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "dispersion (SD to prototype): fgns {:.3}  knn {:.3}   published {:.2} / {:.2}",
            f.dispersion, k.dispersion, r.neighbor_to_prototype_fgns_sd, r.neighbor_to_prototype_knn_sd
        );
        let _ = writeln!(
            s,
            "variance (to prototype):      fgns {:.3}  knn {:.3}   published {:.2} / {:.2}",
            f.variance, k.variance, r.variance_fgns, r.variance_knn
        );
        let _ = writeln!(s, "fallback queries: fgns {}", f.fallback_queries);
        let _ = writeln!(s);
        let _ = writeln!(s, "t-tests (fgns - knn):");
        for c in &self.comparisons {
            let _ = writeln!(
                s,
                "  {:<22} {:<12} pooled t({:.0}) = {:>8.3}, p = {:.3e} | welch t({:.1}) = {:>8.3}, p = {:.3e}",
                c.family, c.level, c.test.pooled.df, c.test.pooled.t, c.test.pooled.p, c.test.welch.df, c.test.welch.t, c.test.welch.p
            );
        }
        let _ = writeln!(
            s,
            "  published: query->neighbor t({:.0}) = {:.2}; neighbor->prototype t({:.0}) = {:.2}",
            r.t_df, r.query_to_neighbor_t, r.t_df, r.neighbor_to_prototype_t
        );
        let _ = writeln!(s);
        let d = &self.directions;
        let mark = |b: bool| if b { "yes" } else { "NO" };
        let _ = writeln!(s, "fgns farther from query:          {}", mark(d.fgns_farther_from_query));
        let _ = writeln!(s, "fgns closer to prototype:         {}", mark(d.fgns_closer_to_prototype));
        let _ = writeln!(s, "fgns lower variance to prototype: {}", mark(d.fgns_lower_prototype_variance));
        s
    }
}

pub fn histogram_csv(rows: &[HistogramRow], config_hash: Option<&str>) -> String {
    let mut s = String::new();
    if let Some(h) = config_hash {
        let _ = writeln!(s, "# config_hash={h}");
    }
    let _ = writeln!(s, "family,bin_left,bin_right,fgns,knn_baseline");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.family, r.bin_left, r.bin_right, r.fgns, r.knn_baseline
        );
    }
    s
}
