//! Small statistical helpers shared by estimators and tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Mean and standard error of the mean.
pub fn mean_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Asymptotic Kolmogorov tail `P(K > lambda)`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("KS test on an empty sample".into()));
    }
    let (a, b) = (sorted(a), sorted(b));
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    Ok((d, kolmogorov_tail((en + 0.12 + 0.11 / en) * d)))
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample(a: &[f64], cdf: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    if a.is_empty() {
        return Err(Error::InsufficientData("KS test on an empty sample".into()));
    }
    let a = sorted(a);
    let n = a.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in a.iter().enumerate() {
        let f = cdf(*x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let en = n.sqrt();
    Ok((d, kolmogorov_tail((en + 0.12 + 0.11 / en) * d)))
}

/// Pearson chi-square test of `counts` against equal expected mass.
pub fn chi_square_uniform(counts: &[u64]) -> Result<(f64, f64)> {
    if counts.len() < 2 {
        return Err(Error::InsufficientData("chi-square needs two cells".into()));
    }
    let total: u64 = counts.iter().sum();
    let e = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|c| (*c as f64 - e).powi(2) / e).sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).map_err(|e| Error::Domain(e.to_string()))?;
    Ok((stat, dist.sf(stat)))
}

/// Upper tail of a chi-square distribution.
pub fn chi_square_sf(stat: f64, dof: f64) -> Result<f64> {
    let dist = ChiSquared::new(dof).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(dist.sf(stat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use statrs::distribution::Normal;

    #[test]
    fn kolmogorov_tail_reference_values() {
        // critical values of the Kolmogorov distribution
        assert!((kolmogorov_tail(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_tail(1.628) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn ks_accepts_same_law_and_rejects_shift() {
        let mut r = RngStream::new(1, 0, 0, 0);
        let a: Vec<f64> = (0..4000).map(|_| r.normal()).collect();
        let b: Vec<f64> = (0..4000).map(|_| r.normal()).collect();
        let c: Vec<f64> = (0..4000).map(|_| r.normal() + 0.2).collect();
        assert!(ks_two_sample(&a, &b).unwrap().1 > 1e-3);
        assert!(ks_two_sample(&a, &c).unwrap().1 < 1e-6);
        let n = Normal::new(0.0, 1.0).unwrap();
        assert!(ks_one_sample(&a, |x| n.cdf(x)).unwrap().1 > 1e-3);
    }

    #[test]
    fn chi_square_flat_counts() {
        let (stat, p) = chi_square_uniform(&[100, 100, 100, 100]).unwrap();
        assert_eq!(stat, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
        assert!(chi_square_uniform(&[400, 0, 0, 0]).unwrap().1 < 1e-10);
    }

    #[test]
    fn mean_stderr_of_constant() {
        assert_eq!(mean_stderr(&[2.0, 2.0, 2.0]), (2.0, 0.0));
    }
}
