//! Acceptance criteria, one line each. Pass criterion numbers as
//! arguments to run a subset: `cargo test --test acceptance -- 3 5`.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use mfchaos::commands::noise_check;
use mfchaos::{fit_rate, Axis, ExperimentPlan};
use mfchaos_core::bounds::{
    constant_c, estimate_beta, hierarchy_ode_solve, short_time_horizon, theorem_bound, Regime,
};
use mfchaos_core::config::{GridSpec, NamedSpec};
use mfchaos_core::dynamics::{
    extract_marginal, simulate_coupled_copies, simulate_system, solve_mckean_vlasov_picard, PicardOptions,
    SampleMatrix, System,
};
use mfchaos_core::kernels::{biot_savart_periodic, divergence_fd, lp_norm_grid, Kernel};
use mfchaos_core::measure::{
    concentration_bounds, entropy_girsanov, entropy_knn, girsanov_weight, girsanov_weight_deterministic,
    pinsker_and_subadditivity_check, tv_histogram, ConcentrationKind, EntropyReport, HistogramRange, Metric,
    Tolerance,
};
use mfchaos_core::rng::{derive_seed, stream, RngStream};
use mfchaos_core::{Execution, SimConfig};
use statrs::distribution::{ContinuousCDF, Normal};

const EXEC: Execution = Execution::Parallel;

struct Outcome {
    pass: bool,
    detail: String,
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn config(name: &str) -> SimConfig {
    SimConfig::from_path(&configs().join(name)).expect("shipped config parses")
}

fn phi(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Uniform probe points on the torus at minimal-image distance >= 0.1
/// from the origin.
fn probe_points(count: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = RngStream::new(seed, 0, 0, stream::AUX);
    let mut pts = Vec::with_capacity(count);
    while pts.len() < count {
        let x = [rng.uniform() - 0.5, rng.uniform() - 0.5];
        if x[0].hypot(x[1]) >= 0.1 {
            pts.push(x);
        }
    }
    pts
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (rows, status) = noise_check(&[0.2, 0.5, 0.8], 8, 100_000, 1.0, 1, EXEC).expect("noise check runs");
    let elapsed = start.elapsed();
    let worst = rows
        .iter()
        .map(|r| (r.emp - r.exact).abs() / r.stderr)
        .fold(0.0, f64::max);
    Outcome {
        pass: status == mfchaos::Status::Success && elapsed < Duration::from_secs(120),
        detail: format!("{} cells, worst |emp - exact| = {worst:.2} stderr (limit 4), {elapsed:.1?}", rows.len()),
    }
}

fn criterion_2() -> Outcome {
    let kernel = Kernel::BiotSavartPeriodic { radius: 8, eps: 0.0, background: true };
    let pts = probe_points(100, 2);
    let mut antisym = true;
    let mut max_div: f64 = 0.0;
    for x in &pts {
        let a = biot_savart_periodic(*x, 8, 0.0).unwrap();
        let b = biot_savart_periodic([-x[0], -x[1]], 8, 0.0).unwrap();
        let c = kernel.eval(x).unwrap();
        let d = kernel.eval(&[-x[0], -x[1]]).unwrap();
        antisym &= a[0] == -b[0] && a[1] == -b[1] && c[0] == -d[0] && c[1] == -d[1];
        let div = divergence_fd(|y| kernel.eval(&y), *x, 1e-4).unwrap();
        max_div = max_div.max(div.abs());
    }
    let norms = |p: f64| -> Vec<f64> {
        [32, 64, 128, 256].iter().map(|&n| lp_norm_grid(|y| kernel.eval(&y), p, n).unwrap()).collect()
    };
    let (l15, l2) = (norms(1.5), norms(2.0));
    let inc = |v: &[f64]| -> Vec<f64> { v.windows(2).map(|w| w[1] - w[0]).collect() };
    let (i15, i2) = (inc(&l15), inc(&l2));
    // p = 1.5: increments shrink geometrically, and the geometric tail
    // left after the finest grid is small; p = 2: the squared norm keeps
    // growing by about ln 2 / (2 pi) per doubling
    let ratio = i15[2] / i15[1];
    let tail = i15[2] * ratio / (1.0 - ratio);
    let stabilizes = i15.windows(2).all(|w| w[1].abs() < 0.8 * w[0].abs()) && tail.abs() < 0.05 * l15[3];
    let sq_inc: Vec<f64> = l2.windows(2).map(|w| w[1] * w[1] - w[0] * w[0]).collect();
    let blows_up = i2.iter().all(|d| *d > 0.0) && sq_inc.iter().all(|d| *d > 0.5 * 2f64.ln() / (2.0 * std::f64::consts::PI));
    Outcome {
        pass: antisym && max_div < 1e-3 && stabilizes && blows_up,
        detail: format!(
            "antisymmetry exact: {antisym}; max |div| = {max_div:.2e}; L^1.5 {:?} (tail {tail:.4}); L^2 {:?}",
            l15.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            l2.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>()
        ),
    }
}

fn shift_marginals(replicas: usize) -> (SampleMatrix, SampleMatrix, f64) {
    let mut shifted = config("gaussian_shift.json");
    shifted.replicas = replicas;
    let mut plain = shifted.clone();
    plain.confinement = NamedSpec::new("zero");
    plain.seed = derive_seed(shifted.seed, "reference");
    let t = shifted.time_grid().unwrap().horizon();
    let p = extract_marginal(&simulate_system(&System::from_config(&shifted).unwrap(), EXEC).unwrap(), 1, t).unwrap().0;
    assert_eq!(p.cols, 1);
    let q = extract_marginal(&simulate_system(&System::from_config(&plain).unwrap(), EXEC).unwrap(), 1, t).unwrap().0;
    (p, q, t)
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let (c, horizon) = (1.0, 0.5);
    let grid = GridSpec { t0: 0.0, dt: Some(1e-3), steps: None, horizon: Some(horizon) }.resolve().unwrap();
    let w = girsanov_weight_deterministic(|_| vec![c], 1, &grid, 10_000, 3, EXEC).unwrap();
    let gir = entropy_girsanov(&w, 1, 1).unwrap();
    let gir_ok = within(gir.value, 0.25, 3.0 * gir.stderr);

    // particle 0 of a non-interacting pair
    let (p, q, t) = shift_marginals(10_000);
    let knn = entropy_knn(&p, &q, 4, Metric::Euclidean, EXEC).unwrap().at(1, 1, t);
    let knn_ok = within(knn.value, 0.25, 0.1);

    // total variation of the unit-variance unit-shift pair
    let mut rng = RngStream::new(4, 0, 0, stream::AUX);
    let a: Vec<f64> = (0..100_000).map(|_| rng.normal()).collect();
    let b: Vec<f64> = (0..100_000).map(|_| 1.0 + rng.normal()).collect();
    let unit = tv_histogram(
        &SampleMatrix::new(a.len(), 1, a).unwrap(),
        &SampleMatrix::new(b.len(), 1, b).unwrap(),
        64,
        HistogramRange::Fixed { lo: -6.0, hi: 7.0 },
    )
    .unwrap();
    let unit_ok = within(unit.value, 2.0 * phi(0.5) - 1.0, 0.02);

    // total variation of the shift case itself: N(cT, T) against N(0, T)
    let (pb, qb, _) = shift_marginals(100_000);
    let tv = tv_histogram(&pb, &qb, 64, HistogramRange::Fixed { lo: -6.0, hi: 7.0 }).unwrap().at(1, 1, t);
    let exact_tv = 2.0 * phi(c * t / (2.0 * t.sqrt())) - 1.0;
    let tv_ok = within(tv.value, exact_tv, 0.02);

    let gir_at = gir.clone().at(1, 1, t);
    let pinsker = pinsker_and_subadditivity_check(&knn, &tv, &gir_at, Tolerance::default()).unwrap();
    let elapsed = start.elapsed();
    Outcome {
        pass: gir_ok && knn_ok && unit_ok && tv_ok && pinsker.pass && elapsed < Duration::from_secs(300),
        detail: format!(
            "girsanov {:.4} +- {:.4} (0.25); knn {:.4} (0.25 +- 0.1); TV[N(0,1),N(1,1)] {:.4} (0.3829 +- 0.02); \
             TV[shift, t={t}] {:.4} ({exact_tv:.4} +- 0.02); pinsker margin {:.3}; {elapsed:.1?}",
            gir.value, gir.stderr, knn.value, unit.value, tv.value, pinsker.pinsker_margin
        ),
    }
}

fn girsanov_at_horizon(cfg: &SimConfig, picard: PicardOptions) -> (EntropyReport, (f64, f64)) {
    let sys = System::from_config(cfg).unwrap();
    let law = solve_mckean_vlasov_picard(&sys, picard, EXEC).unwrap();
    let copies = simulate_coupled_copies(&sys, &law, EXEC).unwrap();
    let w = girsanov_weight(&copies, sys.grid.horizon()).unwrap();
    (entropy_girsanov(&w, sys.n, sys.n).unwrap(), w.mean_weight())
}

fn criterion_4() -> Outcome {
    let mut runs: Vec<(String, SimConfig)> = Vec::new();
    for n in [8, 16, 32] {
        let mut c = config("smooth_torus.json");
        c.n_particles = n;
        runs.push((format!("smooth n={n}"), c));
    }
    for n in [8, 16, 32] {
        let mut c = config("linear_growth.json");
        c.n_particles = n;
        runs.push((format!("linear n={n}"), c));
    }
    runs.push(("fbm H=0.3".into(), config("fractional_h03.json")));
    runs.push(("fbm H=0.75".into(), config("fractional_h075.json")));
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, cfg) in &runs {
        let (_, (z, se)) = girsanov_at_horizon(cfg, PicardOptions::default());
        let ok = (z - 1.0).abs() <= 3.0 * se;
        pass &= ok;
        parts.push(format!("{name}: {z:.4}+-{se:.4}{}", if ok { "" } else { " !" }));
    }
    Outcome { pass, detail: format!("E[Z] {}", parts.join("; ")) }
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let base = config("smooth_torus.json");
    let t = 0.25;
    let ns = [16usize, 32, 64, 128];
    let law_sys = System::from_config(&base).unwrap();
    let law = solve_mckean_vlasov_picard(&law_sys, PicardOptions::default(), EXEC).unwrap();
    let (step, _) = law_sys.grid.nearest_step(t);
    let reference = law.sample_at(step).unwrap();
    let mut knn = Vec::new();
    let mut surrogate = Vec::new();
    for &n in &ns {
        let mut cfg = base.clone();
        cfg.n_particles = n;
        let sys = System::from_config(&cfg).unwrap();
        let ens = simulate_system(&sys, EXEC).unwrap();
        let (p, _) = extract_marginal(&ens, 1, t).unwrap();
        knn.push(entropy_knn(&p, &reference, 4, Metric::Periodic, EXEC).unwrap().value);
        let copies = simulate_coupled_copies(&sys, &law, EXEC).unwrap();
        let g = entropy_girsanov(&girsanov_weight(&copies, t).unwrap(), 1, n).unwrap();
        surrogate.push(g.marginal_surrogate.unwrap());
    }
    let decreasing = knn.windows(2).all(|w| w[1] < w[0]);
    let pts = |v: &[f64]| -> Vec<(f64, f64)> { ns.iter().zip(v).map(|(&n, &h)| (n as f64, h)).collect() };
    let fit = fit_rate(&pts(&knn), Axis::N { k: 1 });
    let slope_ok = matches!(&fit, Ok(f) if f.slope <= -0.8);
    let fit_text = match &fit {
        Ok(f) => format!("slope {:.3} (R^2 {:.3}, {} excluded)", f.slope, f.r_squared, f.excluded),
        Err(e) => format!("no fit: {e}"),
    };
    let sur_fit = fit_rate(&pts(&surrogate), Axis::N { k: 1 })
        .map(|f| format!("{:.3}", f.slope))
        .unwrap_or_else(|e| e.to_string());
    // smallest C making the closed form dominate every estimate, gamma = 1
    let c_fit = ns
        .iter()
        .zip(&knn)
        .map(|(&n, &h)| h.max(0.0) / theorem_bound(1.0, 1.0, t, n, 1).unwrap())
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    Outcome {
        pass: decreasing && slope_ok && elapsed < Duration::from_secs(1800),
        detail: format!(
            "knn H(n=16..128) {:?}; strictly decreasing: {decreasing}; {fit_text}; girsanov surrogate {:?} slope {sur_fit}; \
             fitted C (gamma=1) {c_fit:.3e}; {elapsed:.1?}",
            knn.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            surrogate.iter().map(|v| format!("{v:.5}")).collect::<Vec<_>>(),
        ),
    }
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let base = config("linear_growth.json");
    let grid = base.time_grid().unwrap();
    // beta from the drift-difference energy over the default window
    let probe_n = 32;
    let mut probe = base.clone();
    probe.n_particles = probe_n;
    let sys = System::from_config(&probe).unwrap();
    let law = solve_mckean_vlasov_picard(&sys, PicardOptions::default(), EXEC).unwrap();
    let copies = simulate_coupled_copies(&sys, &law, EXEC).unwrap();
    let delta = grid.horizon();
    let beta = estimate_beta(&copies.energy_at(grid.steps()), delta, probe_n, None).unwrap();
    let kappa = 1.0;
    let horizon = short_time_horizon(kappa, beta.beta, Regime::Brownian).unwrap();
    let t_target = (0.1f64).min(horizon.delta_star / 2.0);
    let steps = ((t_target / grid.dt()).floor() as usize).max(1);
    let t = grid.time(steps);
    let mut h = Vec::new();
    for n in [32usize, 64, 128, 256] {
        let mut cfg = base.clone();
        cfg.n_particles = n;
        cfg.grid = GridSpec { t0: 0.0, dt: Some(grid.dt()), steps: Some(steps), horizon: None };
        let (rep, _) = girsanov_at_horizon(&cfg, PicardOptions::default());
        h.push((n, rep.value, rep.stderr));
    }
    let spread = |v: &[f64]| {
        let max = v.iter().copied().fold(f64::MIN, f64::max);
        let min = v.iter().copied().fold(f64::MAX, f64::min);
        (max - min) / (v.iter().sum::<f64>() / v.len() as f64)
    };
    let full: Vec<f64> = h.iter().map(|r| r.1).collect();
    let per_particle: Vec<f64> = h.iter().map(|r| r.1 / r.0 as f64).collect();
    let elapsed = start.elapsed();
    let s = spread(&full);
    Outcome {
        pass: s < 0.25 && elapsed < Duration::from_secs(1200),
        detail: format!(
            "beta {:.3} (fit residual {:.2}), delta* {:.4}, t = {t}; H^(n) {:?}; spread of H^(n) {:.1}% (limit 25%); \
             spread of H^(n)/n {:.0}%; {elapsed:.1?}",
            beta.beta,
            beta.residual,
            horizon.delta_star,
            h.iter().map(|r| format!("n={}: {:.5}+-{:.5}", r.0, r.1, r.2)).collect::<Vec<_>>(),
            100.0 * s,
            100.0 * spread(&per_particle),
        ),
    }
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let trials = 100_000usize;
    let n = 100u64;
    let eps_grid = [0.05, 0.1, 0.15, 0.2, 0.25];
    // Rademacher means: bounded by 1, sub-Gaussian with proxy 1
    let means: Vec<f64> = mfchaos_core::exec::map_indexed(EXEC, trials, |r| {
        let mut rng = RngStream::new(7, r as u64, 0, stream::AUX);
        (0..n).map(|_| if rng.next_u64() >> 63 == 0 { -1.0 } else { 1.0 }).sum::<f64>() / n as f64
    });
    let mut hoeffding_ok = true;
    let mut parts = Vec::new();
    for &eps in &eps_grid {
        let bound = concentration_bounds(ConcentrationKind::Hoeffding { n, eps, b: 1.0 }).unwrap().value;
        let freq = means.iter().filter(|m| **m > eps).count() as f64 / trials as f64;
        let se = (bound * (1.0 - bound) / trials as f64).sqrt();
        hoeffding_ok &= freq <= bound + 3.0 * se;
        parts.push(format!("eps {eps}: {freq:.4} <= {bound:.4}"));
    }
    let mut rng = RngStream::new(8, 0, 0, stream::AUX);
    let samples: Vec<f64> = (0..1_000_000).map(|_| rng.normal()).collect();
    let mut moment_ok = true;
    for q in 1..=3u32 {
        let m = samples.iter().map(|x| x.powi(2 * q as i32)).sum::<f64>() / samples.len() as f64;
        let bound = concentration_bounds(ConcentrationKind::SubGaussianMoment { q, v: 1.0 }).unwrap().value;
        moment_ok &= m <= bound;
        parts.push(format!("E X^{} = {m:.3} <= {bound}", 2 * q));
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: hoeffding_ok && moment_ok && elapsed < Duration::from_secs(120),
        detail: format!("{}; {elapsed:.1?}", parts.join("; ")),
    }
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut dominated = true;
    let mut worst = f64::INFINITY;
    let c0 = 1.0;
    for n in [50usize, 100] {
        for gamma in [0.5, 1.0] {
            for m in [0.1, 1.0] {
                for t in [0.25, 0.5, 1.0] {
                    let nf = n as f64;
                    let h0: Vec<f64> = (1..=n).map(|k| c0 * (k * k) as f64 / (nf * nf)).collect();
                    let env = hierarchy_ode_solve(n, m, gamma, &h0, t, 1.0 / (2.0 * gamma * nf * 10.0)).unwrap();
                    let c = constant_c(c0, gamma, m, t);
                    let kmax = (nf * (-gamma * t).exp()).floor() as usize;
                    for k in 1..=kmax {
                        let closed = theorem_bound(c, gamma, t, n, k).unwrap();
                        let margin = (closed - env.at_final(k)) / closed;
                        worst = worst.min(margin);
                        dominated &= closed >= env.at_final(k);
                    }
                }
            }
        }
    }
    let e = std::f64::consts::E;
    let arithmetic = [
        ("C(1,1,1,1)", constant_c(1.0, 1.0, 1.0, 1.0), 24.0 * e.powi(6)),
        ("C(1,0,0,T)", constant_c(1.0, 0.0, 0.0, 3.7), 8.0),
        ("delta* brownian", short_time_horizon(1.0, 2.0, Regime::Brownian).unwrap().delta_star, 1.0 / 32.0),
        (
            "delta* brownian kappa 0.5",
            short_time_horizon(0.5, 2.0, Regime::Brownian).unwrap().delta_star,
            1.0 / 32.0,
        ),
        (
            "delta* fractional",
            short_time_horizon(1.0, 2.0, Regime::Fractional { hurst: 0.75, c: 16.0 }).unwrap().delta_star,
            1.0 / 1024.0,
        ),
        ("threshold bound", theorem_bound(1.0, 2f64.ln(), 1.0, 100, 50).unwrap(), 1.5),
    ];
    let arith_ok = arithmetic.iter().all(|(_, got, want)| rel(*got, *want) < 1e-12);
    let elapsed = start.elapsed();
    let bad: Vec<&str> = arithmetic.iter().filter(|(_, g, w)| rel(*g, *w) >= 1e-12).map(|a| a.0).collect();
    Outcome {
        pass: dominated && arith_ok && elapsed < Duration::from_secs(60),
        detail: format!(
            "closed form dominates cascade: {dominated} (min relative margin {worst:.3}); arithmetic to 1e-12: {arith_ok} {bad:?}; \
             {elapsed:.1?}"
        ),
    }
}

fn criterion_9() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_mfchaos");
    let plan = configs().join("smoke_plan.json");
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str| -> (PathBuf, i32) {
        let out = dir.path().join(format!("t{threads}"));
        let status = Command::new(bin)
            .args(["run", "--config"])
            .arg(&plan)
            .arg("--out")
            .arg(&out)
            .args(["--threads", threads])
            .env_remove("MFCHAOS_THREADS")
            .status()
            .expect("binary runs");
        (out, status.code().unwrap_or(-1))
    };
    let (a, code_a) = run("1");
    let (b, code_b) = run("4");
    let mut same = code_a == code_b;
    let mut parts = vec![format!("exit codes {code_a}/{code_b}")];
    for f in ["entropy.csv", "bounds.csv", "checks.csv"] {
        let x = std::fs::read(a.join(f)).unwrap_or_default();
        let y = std::fs::read(b.join(f)).unwrap_or_default();
        let eq = !x.is_empty() && x == y;
        same &= eq;
        parts.push(format!("{f} {} bytes identical: {eq}", x.len()));
    }
    let plan_ok = ExperimentPlan::from_path(&plan).is_ok();
    Outcome { pass: same && plan_ok, detail: parts.join("; ") }
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "noise exactness", criterion_1),
        (2, "kernel correctness", criterion_2),
        (3, "oracle equivalence", criterion_3),
        (4, "martingale normalization", criterion_4),
        (5, "chaos decay", criterion_5),
        (6, "short-time linear growth", criterion_6),
        (7, "concentration suite", criterion_7),
        (8, "bounds suite", criterion_8),
        (9, "determinism", criterion_9),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let o = run();
        println!("criterion {id} ({name}): {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        // Set ACCEPTANCE_STRICT=1 to turn failures into a nonzero exit.
        if std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
