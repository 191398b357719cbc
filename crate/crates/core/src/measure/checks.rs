use serde::Serialize;

use crate::error::{Error, Result};

use super::{EntropyReport, EstimatorKind};

/// Slack allowed in a consistency check: `absolute + sigmas * stderr`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub absolute: f64,
    pub sigmas: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { absolute: 0.0, sigmas: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConsistencyCheck {
    pub k: usize,
    pub n: usize,
    pub t: f64,
    /// `sqrt(2 H_k) + slack - TV`
    pub pinsker_margin: f64,
    /// `(k/n) H_n + slack - H_k`
    pub subadditivity_margin: f64,
    pub pass: bool,
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(1.0)
}

/// Checks `TV <= sqrt(2 H_k)` and `H_k <= (k/n) H_n` on estimates of the
/// same `(k, n, t)`. `h_full` is the entropy of the full n-particle law.
pub fn pinsker_and_subadditivity_check(
    h_k: &EntropyReport,
    tv: &EntropyReport,
    h_full: &EntropyReport,
    tol: Tolerance,
) -> Result<ConsistencyCheck> {
    if tv.kind != EstimatorKind::HistogramTv {
        return Err(Error::Mismatch("second report must be a total-variation estimate".into()));
    }
    if h_k.kind == EstimatorKind::HistogramTv || h_full.kind == EstimatorKind::HistogramTv {
        return Err(Error::Mismatch("entropy reports expected".into()));
    }
    if (h_k.k, h_k.n) != (tv.k, tv.n) || !same_time(h_k.t, tv.t) {
        return Err(Error::Mismatch(format!(
            "entropy at (k={}, n={}, t={}) vs TV at (k={}, n={}, t={})",
            h_k.k, h_k.n, h_k.t, tv.k, tv.n, tv.t
        )));
    }
    if h_full.n != h_k.n || !same_time(h_full.t, h_k.t) {
        return Err(Error::Mismatch(format!(
            "full entropy at (n={}, t={}) vs marginal at (n={}, t={})",
            h_full.n, h_full.t, h_k.n, h_k.t
        )));
    }
    let z = tol.sigmas;
    let h_upper = (h_k.value + z * h_k.stderr).max(0.0);
    let pinsker_margin = (2.0 * h_upper).sqrt() + tol.absolute + z * tv.stderr - tv.value;
    let ratio = h_k.k as f64 / h_k.n as f64;
    let subadditivity_margin =
        ratio * (h_full.value + z * h_full.stderr) + tol.absolute - (h_k.value - z * h_k.stderr);
    Ok(ConsistencyCheck {
        k: h_k.k,
        n: h_k.n,
        t: h_k.t,
        pinsker_margin,
        subadditivity_margin,
        pass: pinsker_margin >= 0.0 && subadditivity_margin >= 0.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReducedPinsker {
    /// `(int phi d(mu - nu))^2`
    pub lhs: f64,
    /// `4 C H` with `C = (1/6) int phi^2 dmu + (1/3) int phi^2 dnu`
    pub rhs: f64,
    pub c: f64,
    pub residual: f64,
}

/// Monte Carlo sides of the weighted Pinsker inequality
/// `(int phi d|mu - nu|)^2 <= 4 C H`. The signed integral is estimated,
/// which is a lower bound of the left side.
pub fn reduced_pinsker_check(
    samples_mu: &[f64],
    samples_nu: &[f64],
    phi: impl Fn(f64) -> f64,
    h_est: f64,
) -> Result<ReducedPinsker> {
    if samples_mu.is_empty() || samples_nu.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let mean = |s: &[f64], f: &dyn Fn(f64) -> f64| s.iter().map(|x| f(*x)).sum::<f64>() / s.len() as f64;
    let diff = mean(samples_mu, &phi) - mean(samples_nu, &phi);
    let sq = |x: f64| phi(x).powi(2);
    let c = mean(samples_mu, &sq) / 6.0 + mean(samples_nu, &sq) / 3.0;
    let lhs = diff * diff;
    let rhs = 4.0 * c * h_est;
    Ok(ReducedPinsker { lhs, rhs, c, residual: rhs - lhs })
}
