//! Closed-form chaos bounds, the entropy cascade they come from, and
//! short-time horizons.

use serde::Serialize;

use crate::error::{Error, Result};

/// `2 C k^2 / n^2 + C exp(-2 n (e^{-gamma T} - k/n)_+^2)`
///
/// The bound is proved for `n >= 6 e^{gamma T}`; below that it is still
/// evaluated, with a warning.
pub fn theorem_bound(c: f64, gamma: f64, t: f64, n: usize, k: usize) -> Result<f64> {
    if k == 0 || k > n {
        return Err(Error::Domain(format!("marginal size {k} outside 1..={n}")));
    }
    if (n as f64) < 6.0 * (gamma * t).exp() {
        log::warn!("n = {n} is below 6 e^(gamma T) = {:.3}", 6.0 * (gamma * t).exp());
    }
    let (nf, kf) = (n as f64, k as f64);
    let gap = ((-gamma * t).exp() - kf / nf).max(0.0);
    Ok(2.0 * c * kf * kf / (nf * nf) + c * (-2.0 * nf * gap * gap).exp())
}

/// `8 (C0 + (1 + gamma) M T) e^{6 gamma T}`
pub fn constant_c(c0: f64, gamma: f64, m: f64, t: f64) -> f64 {
    8.0 * (c0 + (1.0 + gamma) * m * t) * (6.0 * gamma * t).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    OdeCascade,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundParams {
    pub c0: f64,
    pub gamma: f64,
    pub m: f64,
    pub t: f64,
    pub n: usize,
}

/// Bound values on a `(t, k)` grid, `k = 1..=n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundEnvelope {
    pub params: BoundParams,
    pub provenance: Provenance,
    pub times: Vec<f64>,
    /// `[time][k - 1]`
    pub values: Vec<f64>,
}

impl BoundEnvelope {
    pub fn value(&self, time_index: usize, k: usize) -> f64 {
        self.values[time_index * self.params.n + k - 1]
    }

    pub fn at_final(&self, k: usize) -> f64 {
        self.value(self.times.len() - 1, k)
    }
}

/// Closed-form envelope at the given times, with `C` from
/// [`constant_c`] evaluated at each time.
pub fn closed_form_envelope(params: BoundParams, times: &[f64]) -> Result<BoundEnvelope> {
    let n = params.n;
    let mut values = Vec::with_capacity(times.len() * n);
    for &t in times {
        let c = constant_c(params.c0, params.gamma, params.m, t);
        for k in 1..=n {
            values.push(theorem_bound(c, params.gamma, t, n, k)?);
        }
    }
    Ok(BoundEnvelope { params, provenance: Provenance::ClosedForm, times: times.to_vec(), values })
}

/// Integrates the entropy cascade as equalities with explicit Euler:
///
/// `dH^k/dt = k (k-1)^2 / (n-1)^2 M + gamma k (H^{k+1} - H^k)`, `k < n`,
/// `H^n_t = H^n_0 + n M t / 2`.
///
/// By comparison the result dominates every solution of the inequality
/// system with the same data. The step is shortened to divide `t`, and
/// must satisfy `dt <= 1 / (2 gamma n)`. Every step is recorded.
pub fn hierarchy_ode_solve(n: usize, m: f64, gamma: f64, h0: &[f64], t: f64, dt: f64) -> Result<BoundEnvelope> {
    if n < 2 {
        return Err(Error::Domain("cascade needs n >= 2".into()));
    }
    if h0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: h0.len() });
    }
    if h0.iter().any(|h| !(*h >= 0.0)) || m < 0.0 || gamma < 0.0 || !(t > 0.0) || !(dt > 0.0) {
        return Err(Error::Domain("cascade data must be nonnegative with t, dt > 0".into()));
    }
    if gamma > 0.0 {
        let required = 1.0 / (2.0 * gamma * n as f64);
        if dt > required {
            return Err(Error::Stability { dt, required });
        }
    }
    let steps = (t / dt).ceil() as usize;
    let h = t / steps as f64;
    let nf = n as f64;
    let source: Vec<f64> = (1..=n)
        .map(|k| {
            let kf = k as f64;
            kf * (kf - 1.0).powi(2) / (nf - 1.0).powi(2) * m
        })
        .collect();
    let mut cur = h0.to_vec();
    let mut values = Vec::with_capacity((steps + 1) * n);
    let mut times = Vec::with_capacity(steps + 1);
    values.extend_from_slice(&cur);
    times.push(0.0);
    for s in 0..steps {
        let next: Vec<f64> = (0..n)
            .map(|i| {
                if i == n - 1 {
                    h0[n - 1] + 0.5 * nf * m * (s + 1) as f64 * h
                } else {
                    let k = (i + 1) as f64;
                    cur[i] + h * (source[i] + gamma * k * (cur[i + 1] - cur[i]))
                }
            })
            .collect();
        cur = next;
        values.extend_from_slice(&cur);
        times.push((s + 1) as f64 * h);
    }
    Ok(BoundEnvelope {
        params: BoundParams { c0: f64::NAN, gamma, m, t, n },
        provenance: Provenance::OdeCascade,
        times,
        values,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Brownian,
    /// Hurst index and the constant of the fractional horizon.
    Fractional { hurst: f64, c: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HorizonEstimate {
    pub kappa: f64,
    pub beta: f64,
    pub hurst: Option<f64>,
    pub delta_star: f64,
    pub regime: Regime,
}

/// Largest interval length on which the short-time entropy bound holds:
/// `1 / (16 max(kappa^2, 1) beta)` for Brownian noise and
/// `(C kappa^2 beta)^{-1 / (2 - 2H)}` for `H in (1/2, 1)`. For `H <= 1/2`
/// the Brownian form applies.
pub fn short_time_horizon(kappa: f64, beta: f64, regime: Regime) -> Result<HorizonEstimate> {
    if !(kappa > 0.0 && beta > 0.0) {
        return Err(Error::Domain(format!("kappa = {kappa} and beta = {beta} must be positive")));
    }
    let brownian = 1.0 / (16.0 * (kappa * kappa).max(1.0) * beta);
    let (delta_star, hurst) = match regime {
        Regime::Brownian => (brownian, None),
        Regime::Fractional { hurst, c } => {
            if !(hurst > 0.0 && hurst < 1.0) {
                return Err(Error::Domain(format!("Hurst index {hurst} outside (0, 1)")));
            }
            if hurst <= 0.5 {
                (brownian, Some(hurst))
            } else {
                if !(c > 0.0) {
                    return Err(Error::Domain(format!("horizon constant {c} must be positive")));
                }
                ((c * kappa * kappa * beta).powf(-1.0 / (2.0 - 2.0 * hurst)), Some(hurst))
            }
        }
    };
    Ok(HorizonEstimate { kappa, beta, hurst, delta_star, regime })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BetaFit {
    pub beta: f64,
    /// Implied `beta` for `p = 1, 2, 3`.
    pub per_order: Vec<f64>,
    /// `(max - min) / max` of the implied values.
    pub residual: f64,
}

/// Smallest `beta` with `E[S^p] <= p! beta^p delta^{e p} / n^p` for
/// `p = 1, 2, 3` on samples `S` of the drift-difference energy over
/// `[0, delta]`; `e = 1` for Brownian noise and `2 - 2H` otherwise.
pub fn estimate_beta(energies: &[f64], delta: f64, n: usize, hurst: Option<f64>) -> Result<BetaFit> {
    if energies.is_empty() || !(delta > 0.0) || n == 0 {
        return Err(Error::InsufficientData("beta fit needs samples, delta > 0 and n >= 1".into()));
    }
    let e = match hurst {
        Some(h) if h > 0.5 && h < 1.0 => 2.0 - 2.0 * h,
        _ => 1.0,
    };
    let r = energies.len() as f64;
    let mut per_order = Vec::with_capacity(3);
    let mut fact = 1.0;
    for p in 1..=3 {
        fact *= p as f64;
        let pf = p as f64;
        let moment = energies.iter().map(|s| s.powi(p)).sum::<f64>() / r;
        let scaled = (n as f64).powf(pf) * moment / (fact * delta.powf(e * pf));
        per_order.push(scaled.powf(1.0 / pf));
    }
    let max = per_order.iter().copied().fold(0.0, f64::max);
    let min = per_order.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) {
        return Err(Error::InsufficientData("all drift-difference energies vanish".into()));
    }
    Ok(BetaFit { beta: max, residual: (max - min) / max, per_order })
}
