use mfchaos_core::exec::map_indexed;
use mfchaos_core::noise::{fbm_covariance, FbmGenerator, NoisePath};
use mfchaos_core::{Execution, TimeGrid};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn paths(gen: &FbmGenerator, grid: &TimeGrid, count: usize, seed: u64) -> Vec<NoisePath> {
    map_indexed(Execution::Sequential, count, |i| gen.path(grid, 1, seed, i as u64, 0).unwrap())
}

fn increments(p: &NoisePath) -> Vec<f64> {
    p.values.windows(2).map(|w| w[1] - w[0]).collect()
}

fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

// Asymptotic Kolmogorov p-value.
fn ks_pvalue(d: f64, n: usize, m: usize) -> f64 {
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..100 {
        let k = k as f64;
        p += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
    }
    p.clamp(0.0, 1.0)
}

#[test]
fn brownian_increments_are_white() {
    let grid = TimeGrid::new(0.0, 1.0 / 16.0, 16).unwrap();
    let gen = FbmGenerator::new(&grid, 0.5).unwrap();
    let ps = paths(&gen, &grid, 4000, 1);
    // Standardised increments binned into 10 equiprobable normal bins.
    let edges = [-1.2816, -0.8416, -0.5244, -0.2533, 0.0, 0.2533, 0.5244, 0.8416, 1.2816];
    let mut counts = [0usize; 10];
    let sd = (1.0f64 / 16.0).sqrt();
    for p in &ps {
        for z in increments(p) {
            counts[edges.iter().filter(|e| z / sd > **e).count()] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    let expect = total as f64 / 10.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    let p = 1.0 - ChiSquared::new(9.0).unwrap().cdf(chi2);
    assert!(p > 1e-3, "chi2 {chi2}, p {p}");

    // Lag-1 correlation of Brownian increments vanishes.
    let lag: f64 = ps.iter().map(|p| increments(p).windows(2).map(|w| w[0] * w[1]).sum::<f64>()).sum::<f64>()
        / (ps.len() * 15) as f64;
    assert!((lag / (sd * sd)).abs() < 0.03, "lag-1 correlation {}", lag / (sd * sd));
}

#[test]
fn terminal_variance_is_one() {
    for h in [0.25, 0.75] {
        let grid = TimeGrid::new(0.0, 1.0 / 32.0, 32).unwrap();
        let gen = FbmGenerator::new(&grid, h).unwrap();
        let ps = paths(&gen, &grid, 8000, 2);
        let var = ps.iter().map(|p| p.values[32].powi(2)).sum::<f64>() / ps.len() as f64;
        // sd of the sample variance of a unit normal is sqrt(2/m).
        let se = (2.0 / ps.len() as f64).sqrt();
        assert!((var - 1.0).abs() < 4.0 * se, "H={h}: Var B_1 = {var}");
        assert!((fbm_covariance(1.0, 1.0, h).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn increment_correlation_sign_follows_hurst() {
    for (h, sign) in [(0.25, -1.0), (0.75, 1.0)] {
        let grid = TimeGrid::new(0.0, 1.0 / 16.0, 16).unwrap();
        let gen = FbmGenerator::new(&grid, h).unwrap();
        let ps = paths(&gen, &grid, 3000, 3);
        let lag: f64 =
            ps.iter().map(|p| increments(p).windows(2).map(|w| w[0] * w[1]).sum::<f64>()).sum::<f64>();
        let exact = 0.5 * (2f64.powf(2.0 * h) - 2.0);
        assert_eq!(lag.signum(), sign, "H={h}");
        assert_eq!(exact.signum(), sign);
    }
}

#[test]
fn circulant_and_cholesky_agree_in_law() {
    let grid = TimeGrid::new(0.0, 1.0 / 64.0, 64).unwrap();
    for h in [0.3, 0.8] {
        let circ = FbmGenerator::new(&grid, h).unwrap();
        let chol = FbmGenerator::cholesky(&grid, h).unwrap();
        assert!(!circ.used_fallback());
        let a: Vec<f64> = paths(&circ, &grid, 3000, 4).iter().map(|p| p.values[40]).collect();
        let b: Vec<f64> = paths(&chol, &grid, 3000, 5).iter().map(|p| p.values[40]).collect();
        let d = ks_two_sample(a, b);
        let p = ks_pvalue(d, 3000, 3000);
        assert!(p > 1e-3, "H={h}: KS d={d}, p={p}");
    }
}
