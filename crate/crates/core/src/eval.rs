//! Classification with boundary rules, confusion counts, metrics, relative
//! comparisons, optimality gaps and solve-time ECDFs.
//!
//! A metric whose denominator is zero is `None`, never 0 or 1.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::models::Hyperplane;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Svm,
    Cs3vm,
    Rcm,
    Ircm,
    Wircm,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Svm,
        Method::Cs3vm,
        Method::Rcm,
        Method::Ircm,
        Method::Wircm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Svm => "svm",
            Method::Cs3vm => "cs3vm",
            Method::Rcm => "rcm",
            Method::Ircm => "ircm",
            Method::Wircm => "wircm",
        }
    }

    /// Whether boundary points are decided by indicator values.
    pub fn uses_indicators(self) -> bool {
        self != Method::Svm
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// Predicted ±1 labels for every dataset point.
///
/// Strict sides decide. On the boundary, labeled points and every point under
/// the plain SVM take their true label; otherwise the unlabeled point's
/// indicator in `z` (indexed like `sample.unlabeled_idx`) decides.
pub fn classify(
    h: &Hyperplane,
    ds: &Dataset,
    sample: &Sample,
    method: Method,
    z: Option<&[u8]>,
) -> Result<Vec<i8>> {
    let z = match (method.uses_indicators(), z) {
        (true, Some(z)) if z.len() == sample.m() => Some(z),
        (true, _) => {
            return Err(Error::InvalidArgument(format!(
                "{method} classification needs one indicator per unlabeled point"
            )))
        }
        (false, _) => None,
    };
    let mut unl_pos = vec![usize::MAX; ds.len()];
    for (k, &i) in sample.unlabeled_idx.iter().enumerate() {
        unl_pos[i] = k;
    }
    let band = h.band();
    Ok(ds
        .points
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let v = h.value(x);
            if v > band {
                1
            } else if v < -band {
                -1
            } else {
                match (z, unl_pos[i]) {
                    (Some(z), k) if k != usize::MAX => {
                        if z[k] == 1 {
                            1
                        } else {
                            -1
                        }
                    }
                    _ => ds.labels[i],
                }
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    #[serde(rename = "TP")]
    pub tp: usize,
    #[serde(rename = "TN")]
    pub tn: usize,
    #[serde(rename = "FP")]
    pub fp: usize,
    #[serde(rename = "FN")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub fn confusion(pred: &[i8], truth: &[i8]) -> Result<ConfusionMatrix> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p == 1, t == 1) {
            (true, true) => cm.tp += 1,
            (false, false) => cm.tn += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// Confusion counts restricted to `idx`.
pub fn confusion_on(pred: &[i8], truth: &[i8], idx: &[usize]) -> Result<ConfusionMatrix> {
    let p: Vec<i8> = idx.iter().map(|&i| pred[i]).collect();
    let t: Vec<i8> = idx.iter().map(|&i| truth[i]).collect();
    confusion(&p, &t)
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub ac: Option<f64>,
    pub pr: Option<f64>,
    pub re: Option<f64>,
    pub fpr: Option<f64>,
}

pub fn metrics(cm: &ConfusionMatrix) -> MetricSet {
    let (tp, tn, fp, fn_) = (cm.tp as f64, cm.tn as f64, cm.fp as f64, cm.fn_ as f64);
    MetricSet {
        ac: ratio(tp + tn, tp + tn + fp + fn_),
        pr: ratio(tp, tp + fp),
        re: ratio(tp, tp + fn_),
        fpr: ratio(fp, tn + fp),
    }
}

fn rel(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) => ratio(a, b),
        _ => None,
    }
}

/// Each metric divided by the same metric of the reference hyperplane.
pub fn ratios_vs_true(m: &MetricSet, m_true: &MetricSet) -> MetricSet {
    MetricSet {
        ac: rel(m.ac, m_true.ac),
        pr: rel(m.pr, m_true.pr),
        re: rel(m.re, m_true.re),
        fpr: rel(m.fpr, m_true.fpr),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SvmDeltas {
    pub ac: Option<f64>,
    pub pr: Option<f64>,
}

/// Relative change of accuracy and precision against the plain SVM.
pub fn deltas_vs_svm(m: &MetricSet, m_svm: &MetricSet) -> SvmDeltas {
    let d = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) => ratio(a - b, b),
        _ => None,
    };
    SvmDeltas {
        ac: d(m.ac, m_svm.ac),
        pr: d(m.pr, m_svm.pr),
    }
}

/// `(bound − optimum) / optimum`.
pub fn gap(bound: f64, optimum: f64) -> Option<f64> {
    ratio(bound - optimum, optimum)
}

/// Fraction of `values` at or below each grid point; values above
/// `censor_limit` (or non-finite) never count.
pub fn ecdf(values: &[f64], censor_limit: f64, grid: &[f64]) -> Vec<(f64, f64)> {
    if values.is_empty() {
        return grid.iter().map(|&s| (s, 0.0)).collect();
    }
    let n = values.len() as f64;
    grid.iter()
        .map(|&s| {
            let hits = values
                .iter()
                .filter(|&&t| t.is_finite() && t <= censor_limit && t <= s)
                .count();
            (s, hits as f64 / n)
        })
        .collect()
}

/// Evenly spaced grid on `[0, limit]` with `points` entries.
pub fn linear_grid(limit: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![limit],
        _ => (0..points)
            .map(|i| limit * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// One (instance, method) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub instance: String,
    pub dataset: String,
    pub sample_seed: u64,
    pub sample_kind: String,
    pub method: Method,
    pub wall_time: f64,
    pub status: String,
    pub objective: Option<f64>,
    pub best_bound: Option<f64>,
    pub n: usize,
    pub m: usize,
    pub tau: usize,
    pub hyperplane: Option<Hyperplane>,
    pub confusion_all: Option<ConfusionMatrix>,
    pub confusion_unlabeled: Option<ConfusionMatrix>,
    pub metrics_all: Option<MetricSet>,
    pub metrics_unlabeled: Option<MetricSet>,
    pub ratios_true: Option<MetricSet>,
    pub deltas_svm: Option<SvmDeltas>,
    pub gap: Option<f64>,
    pub iterations: Option<usize>,
    pub fixed_points: Option<usize>,
    pub error: Option<String>,
}

impl BenchmarkRecord {
    /// Copy with the timing field cleared, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        BenchmarkRecord {
            wall_time: 0.0,
            ..self.clone()
        }
    }
}
