//! Subcommand bodies, callable without the argument parser.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context};
use mfchaos_core::bounds::{short_time_horizon, Regime};
use mfchaos_core::dynamics::{
    extract_marginal, simulate_coupled_copies, simulate_system, solve_mckean_vlasov_picard, System,
};
use mfchaos_core::exec::map_indexed;
use mfchaos_core::kernels::{divergence_fd, Kernel};
use mfchaos_core::measure::{
    entropy_girsanov, entropy_knn, girsanov_weight, tv_histogram, HistogramRange, Metric, MAX_HISTOGRAM_DIM,
};
use mfchaos_core::noise::{fbm_covariance, FbmGenerator};
use mfchaos_core::rng::{stream, RngStream};
use mfchaos_core::{Execution, SimConfig, TimeGrid};
use serde::Serialize;

use crate::exit::{Status, StatusError};
use crate::pipeline::bound_rows;
use crate::plan::{BoundSpec, Estimator, PicardSpec};
use crate::rate::{fit_rate, Axis, RateFit};
use crate::report::{
    write_csv, write_json, EntropyRow, HorizonRow, KernelRow, NoiseRow, Versions, BOUND_HEADER, ENTROPY_HEADER,
    HORIZON_HEADER,
};
use crate::store::{product_rows, write_reference, write_trajectories, Store};

#[derive(Serialize)]
struct SimulateManifest<'a> {
    versions: Versions,
    seed: u64,
    eps: f64,
    #[serde(rename = "R")]
    radius: Option<u32>,
    dt: f64,
    steps: usize,
    replicas: usize,
    n: usize,
    recorded_steps: &'a [usize],
    used_fallback: bool,
    config: &'a SimConfig,
    reference: Option<PicardSpec>,
    picard_residuals: Option<Vec<f64>>,
}

/// Writes `trajectories.csv`, optionally `reference.csv` with the
/// mean-field paths, and `manifest.json`.
pub fn simulate(cfg: &SimConfig, out: &Path, reference: Option<PicardSpec>, exec: Execution) -> anyhow::Result<Status> {
    std::fs::create_dir_all(out)?;
    let sys = System::from_config(cfg)?;
    let ens = simulate_system(&sys, exec)?;
    write_trajectories(BufWriter::new(File::create(out.join("trajectories.csv"))?), &ens)?;
    let mut residuals = None;
    if let Some(spec) = reference {
        let law = solve_mckean_vlasov_picard(&sys, spec.into(), exec)?;
        write_reference(BufWriter::new(File::create(out.join("reference.csv"))?), &law)?;
        residuals = Some(law.residuals);
    }
    write_json(
        &out.join("manifest.json"),
        &SimulateManifest {
            versions: Versions::default(),
            seed: cfg.seed,
            eps: sys.eps.unwrap_or(0.0),
            radius: sys.radius,
            dt: sys.grid.dt(),
            steps: sys.grid.steps(),
            replicas: sys.replicas,
            n: sys.n,
            recorded_steps: &sys.recorded_steps,
            used_fallback: sys.used_fallback(),
            config: cfg,
            reference,
            picard_residuals: residuals,
        },
    )?;
    Ok(Status::Success)
}

#[derive(Clone, Debug)]
pub struct EntropyArgs {
    pub k: Vec<usize>,
    pub t: Vec<f64>,
    pub estimators: Vec<Estimator>,
    pub neighbors: usize,
    pub bins: usize,
    pub picard: PicardSpec,
}

fn on_grid(grid: &TimeGrid, t: f64) -> anyhow::Result<usize> {
    let (s, off) = grid.nearest_step(t);
    if off || t > grid.horizon() + 1e-12 {
        return Err(StatusError(Status::Config, format!("t = {t} is not on the time grid")).into());
    }
    Ok(s)
}

/// Entropy rows of a configuration, simulating the system, its
/// mean-field law and, for Girsanov, coupled independent copies.
pub fn entropy(cfg: &SimConfig, args: &EntropyArgs, exec: Execution) -> anyhow::Result<(Vec<EntropyRow>, Status)> {
    let grid = cfg.time_grid()?;
    let steps = args.t.iter().map(|&t| on_grid(&grid, t)).collect::<anyhow::Result<Vec<_>>>()?;
    if let Some(&k) = args.k.iter().find(|&&k| k == 0 || k > cfg.n_particles) {
        return Err(StatusError(Status::Config, format!("k = {k} outside 1..={}", cfg.n_particles)).into());
    }
    let sys = System::from_config(cfg)?.with_recorded_steps(steps.clone())?;
    let law = solve_mckean_vlasov_picard(&sys, args.picard.into(), exec)?;
    let (n, d, eps, dt) = (sys.n, sys.dim, sys.eps.unwrap_or(0.0), sys.grid.dt());
    let mut rows = Vec::new();
    let mut status = Status::Success;
    if args.estimators.contains(&Estimator::Girsanov) {
        let copies = simulate_coupled_copies(&sys, &law, exec)?;
        for &s in &steps {
            let w = girsanov_weight(&copies, sys.grid.time(s))?;
            let rep = entropy_girsanov(&w, n, n)?;
            if !rep.reliable {
                status = status.worst(Status::Unreliable);
            }
            if !w.martingale_ok() {
                status = status.worst(Status::Consistency);
            }
            rows.push(EntropyRow::from_report(&rep, "girsanov", eps, dt, cfg.seed));
            for &k in &args.k {
                let ratio = k as f64 / n as f64;
                let mut row = EntropyRow::from_report(&rep, "girsanov_surrogate", eps, dt, cfg.seed);
                row.k = k;
                row.value *= ratio;
                row.stderr *= ratio;
                rows.push(row);
            }
        }
    }
    let knn = args.estimators.contains(&Estimator::Knn);
    let tv = args.estimators.contains(&Estimator::Tv);
    if knn || tv {
        let ens = simulate_system(&sys, exec)?;
        let torus = sys.domain.is_torus();
        for &s in &steps {
            let t = sys.grid.time(s);
            let reference = law.sample_at(s)?;
            for &k in &args.k {
                let (p, _) = extract_marginal(&ens, k, t)?;
                let q = product_rows(&reference.data, d, k)?;
                rows.extend(sample_rows(&p, &q, k, n, t, args, torus, exec)?.into_iter().map(|(name, rep)| {
                    EntropyRow::from_report(&rep, name, eps, dt, cfg.seed)
                }));
            }
        }
    }
    Ok((rows, status))
}

#[allow(clippy::too_many_arguments)]
fn sample_rows(
    p: &mfchaos_core::dynamics::SampleMatrix,
    q: &mfchaos_core::dynamics::SampleMatrix,
    k: usize,
    n: usize,
    t: f64,
    args: &EntropyArgs,
    torus: bool,
    exec: Execution,
) -> anyhow::Result<Vec<(&'static str, mfchaos_core::measure::EntropyReport)>> {
    let mut out = Vec::new();
    if args.estimators.contains(&Estimator::Knn) {
        let metric = if torus { Metric::Periodic } else { Metric::Euclidean };
        out.push(("knn", entropy_knn(p, q, args.neighbors, metric, exec)?.at(k, n, t)));
    }
    if args.estimators.contains(&Estimator::Tv) && p.cols <= MAX_HISTOGRAM_DIM {
        let range = if torus { HistogramRange::Torus } else { HistogramRange::Auto };
        out.push(("tv", tv_histogram(p, q, args.bins, range)?.at(k, n, t)));
    }
    Ok(out)
}

/// kNN and TV rows from a trajectory store and a reference-law store.
/// `torus` selects periodic distances and the unit-cell histogram.
#[allow(clippy::too_many_arguments)]
pub fn entropy_from_stores(
    particles: &Store,
    reference: &Store,
    grid: &TimeGrid,
    args: &EntropyArgs,
    torus: bool,
    seed: u64,
    eps: f64,
    exec: Execution,
) -> anyhow::Result<Vec<EntropyRow>> {
    if particles.dim != reference.dim {
        bail!("stores have dimensions {} and {}", particles.dim, reference.dim);
    }
    let mut rows = Vec::new();
    for &t in &args.t {
        let s = on_grid(grid, t)?;
        for &k in &args.k {
            let p = particles.marginal(k, s)?;
            let q = reference.product_sample(k, s)?;
            // n is unknown to a store beyond the particles it holds
            let n = particles.particles_at(s)?;
            for (name, rep) in sample_rows(&p, &q, k, n, t, args, torus, exec)? {
                rows.push(EntropyRow::from_report(&rep, name, eps, grid.dt(), seed));
            }
        }
    }
    Ok(rows)
}

pub fn write_entropy(out: &Path, rows: &[EntropyRow]) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    write_csv(&out.join("entropy.csv"), rows, ENTROPY_HEADER)
}

#[derive(Clone, Debug)]
pub struct BoundsArgs {
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub t: Vec<f64>,
    pub spec: BoundSpec,
    pub kappa: Vec<f64>,
    pub beta: Vec<f64>,
    pub hurst: Vec<f64>,
    /// Constant of the fractional horizon.
    pub horizon_c: f64,
}

/// Writes `bounds.csv` and `horizons.csv`. `k` defaults to `1..=n`.
pub fn bounds(args: &BoundsArgs, out: &Path) -> anyhow::Result<Status> {
    std::fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    for &n in &args.n {
        let ks: Vec<usize> = if args.k.is_empty() { (1..=n).collect() } else { args.k.clone() };
        if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > n) {
            return Err(StatusError(Status::Config, format!("k = {k} outside 1..={n}")).into());
        }
        rows.extend(bound_rows(&[n], &ks, &args.t, args.spec)?);
    }
    write_csv(&out.join("bounds.csv"), &rows, BOUND_HEADER)?;
    let mut horizons = Vec::new();
    for &kappa in &args.kappa {
        for &beta in &args.beta {
            let brownian = short_time_horizon(kappa, beta, Regime::Brownian)?;
            horizons.push(HorizonRow { kappa, beta, hurst: None, delta_star: brownian.delta_star });
            for &h in &args.hurst {
                let e = short_time_horizon(kappa, beta, Regime::Fractional { hurst: h, c: args.horizon_c })?;
                horizons.push(HorizonRow { kappa, beta, hurst: Some(h), delta_star: e.delta_star });
            }
        }
    }
    write_csv(&out.join("horizons.csv"), &horizons, HORIZON_HEADER)?;
    Ok(Status::Success)
}

/// Empirical against exact fBm covariance on the grid `horizon * i /
/// points`, `i = 1..=points`, for each Hurst index.
pub fn noise_check(
    hurst: &[f64],
    points: usize,
    paths: usize,
    horizon: f64,
    seed: u64,
    exec: Execution,
) -> anyhow::Result<(Vec<NoiseRow>, Status)> {
    if points == 0 || paths < 2 {
        return Err(StatusError(Status::Config, "noise check needs points >= 1 and paths >= 2".into()).into());
    }
    let grid = TimeGrid::with_steps(0.0, horizon, points)?;
    let mut rows = Vec::new();
    let mut status = Status::Success;
    for (hi, &h) in hurst.iter().enumerate() {
        let gen = FbmGenerator::new(&grid, h)?;
        let pairs: Vec<(usize, usize)> = (0..points).flat_map(|i| (0..=i).map(move |j| (i, j))).collect();
        // chunked accumulation keeps memory flat and the reduction order fixed
        const CHUNK: usize = 4096;
        let chunks = paths.div_ceil(CHUNK);
        let partial = map_indexed(exec, chunks, |c| -> mfchaos_core::Result<(Vec<f64>, Vec<f64>)> {
            let mut sum = vec![0.0; pairs.len()];
            let mut sum2 = vec![0.0; pairs.len()];
            let mut incr = vec![0.0; points];
            let mut path = vec![0.0; points];
            for r in c * CHUNK..((c + 1) * CHUNK).min(paths) {
                let mut rng = RngStream::new(seed, r as u64, hi as u64, stream::NOISE);
                gen.increments(&mut rng, &mut incr, None)?;
                let mut acc = 0.0;
                for (p, v) in path.iter_mut().zip(&incr) {
                    acc += v;
                    *p = acc;
                }
                for (idx, &(i, j)) in pairs.iter().enumerate() {
                    let prod = path[i] * path[j];
                    sum[idx] += prod;
                    sum2[idx] += prod * prod;
                }
            }
            Ok((sum, sum2))
        });
        let mut sum = vec![0.0; pairs.len()];
        let mut sum2 = vec![0.0; pairs.len()];
        for part in partial {
            let (a, b) = part?;
            sum.iter_mut().zip(&a).for_each(|(s, v)| *s += v);
            sum2.iter_mut().zip(&b).for_each(|(s, v)| *s += v);
        }
        let m = paths as f64;
        for (idx, &(i, j)) in pairs.iter().enumerate() {
            let (t, s) = (grid.time(i + 1), grid.time(j + 1));
            let emp = sum[idx] / m;
            let var = (sum2[idx] / m - emp * emp) * m / (m - 1.0);
            let stderr = (var.max(0.0) / m).sqrt();
            let exact = fbm_covariance(t, s, h)?;
            if (emp - exact).abs() > 4.0 * stderr {
                log::warn!("H = {h}: cov({t}, {s}) = {emp} vs {exact} (stderr {stderr})");
                status = Status::Consistency;
            }
            rows.push(NoiseRow { t, s, hurst: h, emp, exact, stderr });
        }
    }
    Ok((rows, status))
}

#[derive(Clone, Copy, Debug)]
pub struct ProbeArgs {
    pub radius: u32,
    pub eps: f64,
    pub frequency: u32,
    /// Cell-centred probe points per axis.
    pub grid: usize,
    /// Finite-difference step of the divergence estimate.
    pub h: f64,
}

/// Kernel values and a central-difference divergence on cell centres of
/// `[-1/2, 1/2)^2`.
pub fn kernel_probe(name: &str, args: ProbeArgs) -> anyhow::Result<Vec<KernelRow>> {
    let kernel = match name {
        "biot_savart_periodic" => Kernel::BiotSavartPeriodic { radius: args.radius, eps: args.eps, background: true },
        "biot_savart_lattice" => Kernel::BiotSavartPeriodic { radius: args.radius, eps: args.eps, background: false },
        "biot_savart_free" => Kernel::BiotSavartFree { eps: args.eps },
        "smooth_divfree" => Kernel::SmoothDivFree { frequency: args.frequency, strength: 1.0 },
        other => return Err(StatusError(Status::Config, format!("unknown kernel `{other}`")).into()),
    };
    if args.grid == 0 {
        return Err(StatusError(Status::Config, "probe grid must be positive".into()).into());
    }
    let m = args.grid as f64;
    let mut rows = Vec::with_capacity(args.grid * args.grid);
    for i in 0..args.grid {
        for j in 0..args.grid {
            let x = [-0.5 + (i as f64 + 0.5) / m, -0.5 + (j as f64 + 0.5) / m];
            let k = kernel.eval(&x)?;
            let div = divergence_fd(|y| kernel.eval(&y), x, args.h)?;
            rows.push(KernelRow { x1: x[0], x2: x[1], k1: k[0], k2: k[1], div_estimate: div });
        }
    }
    Ok(rows)
}

/// Fits `log value` against `log n` (axis `n`, fixed `k`) or `log k`
/// (axis `k`, fixed `n`) on rows of one estimator and time.
pub fn rate_fit(rows: &[EntropyRow], estimator: &str, axis: Axis, t: Option<f64>) -> anyhow::Result<RateFit> {
    let selected: Vec<&EntropyRow> = rows
        .iter()
        .filter(|r| r.estimator == estimator)
        .filter(|r| t.is_none_or(|t| (r.t - t).abs() <= 1e-9 * t.abs().max(1.0)))
        .filter(|r| match axis {
            Axis::N { k } => r.k == k,
            Axis::K { n } => r.n == n,
        })
        .collect();
    let mut times: Vec<f64> = selected.iter().map(|r| r.t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    if times.len() > 1 {
        return Err(StatusError(Status::Config, "rows span several times; select one with --t".into()).into());
    }
    let points: Vec<(f64, f64)> = selected
        .iter()
        .map(|r| {
            let x = match axis {
                Axis::N { .. } => r.n,
                Axis::K { .. } => r.k,
            };
            (x as f64, r.value)
        })
        .collect();
    fit_rate(&points, axis).map_err(|e| StatusError(Status::Config, e.to_string()).into())
}

/// Reads an `entropy.csv`.
pub fn read_entropy(path: &Path) -> anyhow::Result<Vec<EntropyRow>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != ENTROPY_HEADER.len() {
            bail!("entropy rows need {} columns", ENTROPY_HEADER.len());
        }
        let f = |i: usize| -> anyhow::Result<f64> { rec[i].parse().with_context(|| format!("bad number `{}`", &rec[i])) };
        rows.push(EntropyRow {
            t: f(0)?,
            n: rec[1].parse()?,
            k: rec[2].parse()?,
            estimator: rec[3].to_string(),
            value: f(4)?,
            stderr: f(5)?,
            ess: if rec[6].is_empty() { None } else { Some(f(6)?) },
            eps: f(7)?,
            dt: f(8)?,
            seed: rec[9].parse()?,
        });
    }
    Ok(rows)
}
