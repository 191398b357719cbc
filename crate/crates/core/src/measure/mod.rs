//! Distances between the interacting system and its mean-field limit:
//! Girsanov weights, relative-entropy and total-variation estimators, and
//! the inequalities that connect them.

mod checks;
mod concentration;
mod girsanov;
mod kdtree;
mod knn;
mod tv;

use std::collections::BTreeMap;

use serde::Serialize;

pub use checks::{pinsker_and_subadditivity_check, reduced_pinsker_check, ConsistencyCheck, ReducedPinsker, Tolerance};
pub use concentration::{concentration_bounds, BoundValue, ConcentrationKind};
pub use girsanov::{entropy_girsanov, girsanov_weight, girsanov_weight_deterministic, GirsanovWeight};
pub use kdtree::{KdTree, Metric};
pub use knn::entropy_knn;
pub use tv::{tv_histogram, HistogramRange, MAX_HISTOGRAM_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Girsanov,
    Knn,
    HistogramTv,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Girsanov => "girsanov",
            EstimatorKind::Knn => "knn",
            EstimatorKind::HistogramTv => "histogram_tv",
        }
    }
}

/// One estimate with its metadata.
///
/// For the Girsanov kind `value` is the entropy of the full n-particle
/// path law and `marginal_surrogate` its `k/n` multiple, an upper bound
/// for the k-marginal by subadditivity. The other kinds estimate the
/// k-marginal directly and leave the surrogate empty.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyReport {
    pub kind: EstimatorKind,
    pub value: f64,
    pub stderr: f64,
    pub k: usize,
    pub n: usize,
    pub t: f64,
    pub marginal_surrogate: Option<f64>,
    pub ess: Option<f64>,
    pub reliable: bool,
    pub params: BTreeMap<String, f64>,
}

impl EntropyReport {
    pub fn new(kind: EstimatorKind, value: f64, stderr: f64) -> Self {
        Self {
            kind,
            value,
            stderr,
            k: 0,
            n: 0,
            t: 0.0,
            marginal_surrogate: None,
            ess: None,
            reliable: true,
            params: BTreeMap::new(),
        }
    }

    pub fn at(mut self, k: usize, n: usize, t: f64) -> Self {
        self.k = k;
        self.n = n;
        self.t = t;
        self
    }

    pub fn param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }
}
