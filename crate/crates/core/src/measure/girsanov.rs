use crate::dynamics::CoupledCopies;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::grid::TimeGrid;
use crate::rng::{stream, RngStream};
use crate::stats::mean_stderr;

use super::{EntropyReport, EstimatorKind};

/// Log Girsanov weights of every replica at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct GirsanovWeight {
    pub n: usize,
    pub t: f64,
    pub log_weights: Vec<f64>,
    /// `int_0^t |Δb|^2` of one particle per replica.
    pub drift_energy: Vec<f64>,
    /// Discretization-quality flag of the fractional exponent.
    pub volterra_error: f64,
}

impl GirsanovWeight {
    /// `(mean, stderr)` of `Z`.
    pub fn mean_weight(&self) -> (f64, f64) {
        let z: Vec<f64> = self.log_weights.iter().map(|l| l.exp()).collect();
        mean_stderr(&z)
    }

    /// `|E Z - 1| <= 3 stderr`
    pub fn martingale_ok(&self) -> bool {
        let (m, se) = self.mean_weight();
        (m - 1.0).abs() <= 3.0 * se
    }

    pub fn ess(&self) -> f64 {
        let (s, s2) = self.log_weights.iter().fold((0.0, 0.0), |(a, b), l| {
            let z = l.exp();
            (a + z, b + z * z)
        });
        if s2 == 0.0 {
            0.0
        } else {
            s * s / s2
        }
    }
}

/// Weights of coupled copies at grid time `t`.
pub fn girsanov_weight(copies: &CoupledCopies, t: f64) -> Result<GirsanovWeight> {
    let (step, off) = copies.grid.nearest_step(t);
    if off {
        log::warn!("t = {t} is off the grid; using t = {}", copies.grid.time(step));
    }
    Ok(GirsanovWeight {
        n: copies.n,
        t: copies.grid.time(step),
        log_weights: copies.log_weights_at(step),
        drift_energy: copies.energy_at(step),
        volterra_error: copies.volterra_error,
    })
}

/// Weights for a deterministic drift difference `delta_b(t)` acting on a
/// single `dim`-dimensional Brownian particle, at the grid horizon.
pub fn girsanov_weight_deterministic(
    delta_b: impl Fn(f64) -> Vec<f64> + Sync,
    dim: usize,
    grid: &TimeGrid,
    replicas: usize,
    seed: u64,
    exec: Execution,
) -> Result<GirsanovWeight> {
    let dt = grid.dt();
    let sd = dt.sqrt();
    let rows = map_indexed(exec, replicas, |r| -> Result<(f64, f64)> {
        let mut rngs: Vec<RngStream> = (0..dim)
            .map(|c| RngStream::new(seed, r as u64, 0, stream::NOISE + c as u64))
            .collect();
        let (mut lw, mut energy) = (0.0, 0.0);
        for m in 0..grid.steps() {
            let b = delta_b(grid.time(m));
            if b.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: b.len() });
            }
            for (c, rng) in rngs.iter_mut().enumerate() {
                let dw = sd * rng.normal();
                lw += b[c] * dw - 0.5 * b[c] * b[c] * dt;
                energy += b[c] * b[c] * dt;
            }
        }
        Ok((lw, energy))
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(GirsanovWeight {
        n: 1,
        t: grid.horizon(),
        log_weights: rows.iter().map(|r| r.0).collect(),
        drift_energy: rows.iter().map(|r| r.1).collect(),
        volterra_error: 0.0,
    })
}

/// `H(P | Q) = E_Q[Z log Z]` from weights sampled under `Q`.
///
/// Uses `Z log Z - Z + 1`, which has the same mean (`E_Q Z = 1`) and is
/// nonnegative sample by sample. The standard error is the delete-one
/// jackknife, which for a sample mean equals `sd / sqrt(R)`.
pub fn entropy_girsanov(weights: &GirsanovWeight, k: usize, n: usize) -> Result<EntropyReport> {
    let r = weights.log_weights.len();
    if r < 2 {
        return Err(Error::InsufficientData("entropy needs at least two replicas".into()));
    }
    if k == 0 || k > n {
        return Err(Error::Domain(format!("marginal size {k} outside 1..={n}")));
    }
    if r < 1000 {
        log::warn!("only {r} replicas; the Girsanov entropy estimate is coarse");
    }
    let terms: Vec<f64> = weights
        .log_weights
        .iter()
        .map(|l| {
            let z = l.exp();
            z * l - z + 1.0
        })
        .collect();
    let (value, stderr) = mean_stderr(&terms);
    let ess = weights.ess();
    let (zbar, zse) = weights.mean_weight();
    let reliable = ess >= 0.05 * r as f64 && value.is_finite();
    if !reliable {
        log::warn!("effective sample size {ess:.1} below 5% of {r} replicas");
    }
    // the fractional exponent's discretization error scales the estimate
    let stderr = stderr.hypot(value * weights.volterra_error);
    let mut rep = EntropyReport::new(EstimatorKind::Girsanov, value, stderr)
        .at(k, n, weights.t)
        .param("replicas", r as f64)
        .param("mean_z", zbar)
        .param("mean_z_stderr", zse)
        .param("volterra_error", weights.volterra_error);
    rep.marginal_surrogate = Some(k as f64 / n as f64 * value);
    rep.ess = Some(ess);
    rep.reliable = reliable;
    Ok(rep)
}
