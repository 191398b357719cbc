use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Closed-form tail and moment bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConcentrationKind {
    /// `P(|mean - E| > eps) <= exp(-n eps^2 / (2 b^2))` for sub-Gaussian
    /// summands with proxy `b`.
    Hoeffding { n: u64, eps: f64, b: f64 },
    /// `E X^{2q} <= 2 q! (2v)^q` for sub-Gaussian `X` with variance proxy
    /// `v`.
    SubGaussianMoment { q: u32, v: f64 },
    /// `p! beta^p delta^p / n^p`, the short-time moment bound of the drift
    /// difference energy.
    ShortTimeMoment { p: u32, beta: f64, delta: f64, n: u64 },
    /// `p! beta^p delta^{(2 - 2H) p} / n^p`, its fractional counterpart.
    FractionalMoment { p: u32, beta: f64, delta: f64, n: u64, hurst: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundValue {
    pub value: f64,
    /// The bound exceeds the largest finite double and `value` is `+inf`.
    pub overflow: bool,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

fn ln_factorial(p: u32) -> f64 {
    ln_gamma(p as f64 + 1.0)
}

/// Evaluates the bound in log space.
pub fn concentration_bounds(kind: ConcentrationKind) -> Result<BoundValue> {
    let ln = match kind {
        ConcentrationKind::Hoeffding { n, eps, b } => {
            positive("eps", eps)?;
            positive("b", b)?;
            if n == 0 {
                return Err(Error::Domain("n must be at least 1".into()));
            }
            -(n as f64) * eps * eps / (2.0 * b * b)
        }
        ConcentrationKind::SubGaussianMoment { q, v } => {
            positive("v", v)?;
            if q == 0 {
                return Err(Error::Domain("q must be at least 1".into()));
            }
            2f64.ln() + ln_factorial(q) + q as f64 * (2.0 * v).ln()
        }
        ConcentrationKind::ShortTimeMoment { p, beta, delta, n } => {
            positive("beta", beta)?;
            positive("delta", delta)?;
            if p == 0 || n == 0 {
                return Err(Error::Domain("p and n must be at least 1".into()));
            }
            ln_factorial(p) + p as f64 * (beta * delta / n as f64).ln()
        }
        ConcentrationKind::FractionalMoment { p, beta, delta, n, hurst } => {
            positive("beta", beta)?;
            positive("delta", delta)?;
            if !(hurst > 0.0 && hurst < 1.0) {
                return Err(Error::Domain(format!("Hurst index {hurst} outside (0, 1)")));
            }
            if p == 0 || n == 0 {
                return Err(Error::Domain("p and n must be at least 1".into()));
            }
            let p_f = p as f64;
            ln_factorial(p) + p_f * beta.ln() + (2.0 - 2.0 * hurst) * p_f * delta.ln() - p_f * (n as f64).ln()
        }
    };
    let value = ln.exp();
    Ok(BoundValue { value, overflow: value.is_infinite() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn hoeffding_example() {
        let v = concentration_bounds(ConcentrationKind::Hoeffding { n: 100, eps: 0.1, b: 1.0 }).unwrap();
        assert!(rel(v.value, (-0.5f64).exp()) < 1e-14);
        assert!(!v.overflow);
    }

    #[test]
    fn second_moment_example() {
        for s2 in [0.5, 1.0, 3.0] {
            let v = concentration_bounds(ConcentrationKind::SubGaussianMoment { q: 1, v: s2 }).unwrap();
            assert!(rel(v.value, 4.0 * s2) < 1e-14);
            assert!(s2 <= v.value);
        }
    }

    #[test]
    fn fractional_moment_example() {
        let v = concentration_bounds(ConcentrationKind::FractionalMoment { p: 1, beta: 2.0, delta: 0.1, n: 10, hurst: 0.75 })
            .unwrap();
        assert!(rel(v.value, 2.0 * 0.1f64.sqrt() / 10.0) < 1e-14);
        assert!((v.value - 0.06325).abs() < 1e-5);
    }

    #[test]
    fn short_time_moment_is_factorial_power() {
        let v = concentration_bounds(ConcentrationKind::ShortTimeMoment { p: 3, beta: 2.0, delta: 0.5, n: 4 }).unwrap();
        assert!(rel(v.value, 6.0 * (2.0f64 * 0.5 / 4.0).powi(3)) < 1e-13);
    }

    #[test]
    fn overflow_is_flagged() {
        let v = concentration_bounds(ConcentrationKind::SubGaussianMoment { q: 400, v: 10.0 }).unwrap();
        assert!(v.overflow && v.value == f64::INFINITY);
    }

    #[test]
    fn bad_parameters_are_rejected() {
        assert!(concentration_bounds(ConcentrationKind::Hoeffding { n: 10, eps: -1.0, b: 1.0 }).is_err());
        assert!(concentration_bounds(ConcentrationKind::SubGaussianMoment { q: 0, v: 1.0 }).is_err());
        assert!(concentration_bounds(ConcentrationKind::FractionalMoment { p: 1, beta: 1.0, delta: 0.1, n: 1, hurst: 1.0 }).is_err());
    }
}
