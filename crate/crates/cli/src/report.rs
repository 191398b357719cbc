//! CSV row types and the run manifest.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use mfchaos_core::measure::EntropyReport;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyRow {
    pub t: f64,
    pub n: usize,
    pub k: usize,
    pub estimator: String,
    pub value: f64,
    pub stderr: f64,
    pub ess: Option<f64>,
    pub eps: f64,
    pub dt: f64,
    pub seed: u64,
}

impl EntropyRow {
    pub fn from_report(rep: &EntropyReport, estimator: &str, eps: f64, dt: f64, seed: u64) -> Self {
        Self {
            t: rep.t,
            n: rep.n,
            k: rep.k,
            estimator: estimator.to_string(),
            value: rep.value,
            stderr: rep.stderr,
            ess: rep.ess,
            eps,
            dt,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundRow {
    pub n: usize,
    pub k: usize,
    pub t: f64,
    pub closed_form: f64,
    pub cascade: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma: f64,
    #[serde(rename = "M")]
    pub m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HorizonRow {
    pub kappa: f64,
    pub beta: f64,
    #[serde(rename = "H")]
    pub hurst: Option<f64>,
    pub delta_star: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub n: usize,
    pub k: usize,
    pub t: f64,
    pub check: String,
    /// Nonnegative when the check passes.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseRow {
    pub t: f64,
    pub s: f64,
    #[serde(rename = "H")]
    pub hurst: f64,
    pub emp: f64,
    pub exact: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelRow {
    pub x1: f64,
    pub x2: f64,
    #[serde(rename = "K1")]
    pub k1: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    pub div_estimate: f64,
}

/// Writes rows with a header derived from the row type; an empty slice
/// still produces the header when `header` is given.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_writer(file);
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

pub const ENTROPY_HEADER: &[&str] = &["t", "n", "k", "estimator", "value", "stderr", "ess", "eps", "dt", "seed"];
pub const BOUND_HEADER: &[&str] = &["n", "k", "t", "closed_form", "cascade", "C", "gamma", "M"];
pub const HORIZON_HEADER: &[&str] = &["kappa", "beta", "H", "delta_star"];
pub const CHECK_HEADER: &[&str] = &["n", "k", "t", "check", "margin", "pass"];

#[derive(Clone, Debug, Serialize)]
pub struct Versions {
    pub mfchaos: &'static str,
    pub mfchaos_core: &'static str,
}

impl Default for Versions {
    fn default() -> Self {
        Self { mfchaos: env!("CARGO_PKG_VERSION"), mfchaos_core: mfchaos_core::VERSION }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headers_match_row_fields() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        let row = BoundRow { n: 2, k: 1, t: 0.5, closed_form: 1.0, cascade: 0.5, c: 3.0, gamma: 1.0, m: 1.0 };
        write_csv(&p, &[row], BOUND_HEADER).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), BOUND_HEADER.join(","));
        write_csv::<BoundRow>(&p, &[], BOUND_HEADER).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().trim(), BOUND_HEADER.join(","));
    }

    #[test]
    fn entropy_header_matches() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let row = EntropyRow {
            t: 0.25,
            n: 8,
            k: 1,
            estimator: "knn".into(),
            value: 0.1,
            stderr: 0.01,
            ess: None,
            eps: 0.0,
            dt: 0.001,
            seed: 3,
        };
        write_csv(&p, &[row], ENTROPY_HEADER).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), ENTROPY_HEADER.join(","));
        assert_eq!(text.lines().nth(1).unwrap(), "0.25,8,1,knn,0.1,0.01,,0.0,0.001,3");
    }
}
