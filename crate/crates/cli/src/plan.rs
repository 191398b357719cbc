//! Experiment plans: a base simulation swept over particle number,
//! marginal size and time.

use std::path::{Path, PathBuf};

use mfchaos_core::dynamics::PicardOptions;
use mfchaos_core::{Error, Result, SimConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Girsanov,
    Knn,
    Tv,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardSpec {
    pub paths: usize,
    pub iterations: usize,
    pub law_sample: usize,
}

impl Default for PicardSpec {
    fn default() -> Self {
        let d = PicardOptions::default();
        Self { paths: d.paths, iterations: d.iterations, law_sample: d.law_sample }
    }
}

impl From<PicardSpec> for PicardOptions {
    fn from(p: PicardSpec) -> Self {
        PicardOptions { paths: p.paths, iterations: p.iterations, law_sample: p.law_sample }
    }
}

/// Parameters of the closed-form bound and the cascade compared against
/// the estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundSpec {
    pub c0: f64,
    pub gamma: f64,
    pub m: f64,
}

impl Default for BoundSpec {
    fn default() -> Self {
        Self { c0: 1.0, gamma: 1.0, m: 1.0 }
    }
}

fn default_estimators() -> Vec<Estimator> {
    vec![Estimator::Girsanov, Estimator::Knn, Estimator::Tv]
}

fn default_neighbors() -> usize {
    4
}

fn default_bins() -> usize {
    16
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    /// `n_particles` of the base is replaced by each entry of `n`.
    pub base: SimConfig,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub k: Vec<usize>,
    #[serde(default)]
    pub t: Vec<f64>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Estimator>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub picard: PicardSpec,
    #[serde(default = "default_neighbors")]
    pub neighbors: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub bounds: BoundSpec,
}

impl ExperimentPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty() || self.k.is_empty() || self.t.is_empty() || self.estimators.is_empty()
    }

    /// Base configuration with `n` particles.
    pub fn config_for(&self, n: usize) -> SimConfig {
        let mut cfg = self.base.clone();
        cfg.n_particles = n;
        cfg
    }

    /// Grid indices of the requested times.
    pub fn time_steps(&self) -> Result<Vec<usize>> {
        let grid = self.base.time_grid()?;
        self.t
            .iter()
            .map(|&t| {
                let (step, off) = grid.nearest_step(t);
                if off || t > grid.horizon() + 1e-12 || t < grid.t0() {
                    Err(Error::Config(format!("t = {t} is not a point of the time grid")))
                } else {
                    Ok(step)
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if let (Some(&kmax), Some(&nmin)) = (self.k.iter().max(), self.n.iter().min()) {
            if kmax > nmin {
                return Err(Error::Config(format!("k = {kmax} exceeds n = {nmin}")));
            }
        }
        if self.k.contains(&0) || self.n.iter().any(|&n| n < 2) {
            return Err(Error::Config("sweeps need k >= 1 and n >= 2".into()));
        }
        if self.neighbors == 0 || self.bins == 0 {
            return Err(Error::Config("neighbors and bins must be positive".into()));
        }
        if self.picard.paths < 2 || self.picard.iterations == 0 {
            return Err(Error::Config("picard needs paths >= 2 and iterations >= 1".into()));
        }
        let b = self.bounds;
        if !(b.c0 >= 0.0 && b.gamma >= 0.0 && b.m >= 0.0) {
            return Err(Error::Config("bound parameters must be nonnegative".into()));
        }
        self.time_steps()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{"domain":{"torus":{"dim":2}},"n_particles":16,"grid":{"dt":0.01,"steps":25},
        "noise":"brownian","initial":"uniform","interaction":{"name":"smooth_divfree","params":{}},"seed":7}"#;

    fn plan(extra: &str) -> Result<ExperimentPlan> {
        ExperimentPlan::from_json(&format!(r#"{{"base":{BASE}{extra}}}"#))
    }

    #[test]
    fn empty_sweep_is_valid() {
        let p = plan("").unwrap();
        assert!(p.is_empty());
        assert_eq!(p.neighbors, 4);
        assert_eq!(p.estimators.len(), 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(plan(r#","nn":[4]"#).is_err());
        assert!(plan(r#","picard":{"path":3}"#).is_err());
    }

    #[test]
    fn k_must_not_exceed_n() {
        assert!(plan(r#","n":[4,8],"k":[1,4],"t":[0.25]"#).is_ok());
        assert!(matches!(plan(r#","n":[4,8],"k":[1,5],"t":[0.25]"#), Err(Error::Config(_))));
    }

    #[test]
    fn times_must_be_on_grid() {
        assert!(plan(r#","n":[4],"k":[1],"t":[0.1,0.25]"#).is_ok());
        assert!(plan(r#","n":[4],"k":[1],"t":[0.105]"#).is_err());
        assert!(plan(r#","n":[4],"k":[1],"t":[0.3]"#).is_err());
    }
}
