//! Power-law fits of entropy against particle number or marginal size.

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// `log H` against `log n` at fixed `k`.
    N { k: usize },
    /// `log H` against `log k` at fixed `n`.
    K { n: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub axis: Axis,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Residuals of `log H` at the used points, in input order.
    pub residuals: Vec<f64>,
    pub used: usize,
    /// Points dropped for `H <= 0` or non-finite values.
    pub excluded: usize,
    /// `log H` has no variation, so `R^2` is meaningless and set to 0.
    pub no_trend: bool,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RateError {
    #[error("rate fit needs at least 3 usable points, got {used} ({excluded} excluded)")]
    TooFewPoints { used: usize, excluded: usize },
    #[error("all usable points share the same abscissa")]
    DegenerateAxis,
}

/// Ordinary least squares of `log H` on `log x`.
pub fn fit_rate(points: &[(f64, f64)], axis: Axis) -> Result<RateFit, RateError> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, h)| *x > 0.0 && *h > 0.0 && x.is_finite() && h.is_finite())
        .map(|(x, h)| (x.ln(), h.ln()))
        .collect();
    let excluded = points.len() - usable.len();
    if usable.len() < 3 {
        return Err(RateError::TooFewPoints { used: usable.len(), excluded });
    }
    if excluded > 0 {
        log::warn!("{excluded} points with non-positive entropy excluded from the fit");
    }
    let m = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / m;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = usable.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(RateError::DegenerateAxis);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = usable.iter().map(|p| p.1 - intercept - slope * p.0).collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    // relative threshold so exact power laws with rounding noise still count as a trend
    let no_trend = syy <= 1e-24 * usable.iter().map(|p| p.1 * p.1).sum::<f64>().max(1.0);
    let r_squared = if no_trend { 0.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok(RateFit { axis, slope, intercept, r_squared, residuals, used: usable.len(), excluded, no_trend })
}
