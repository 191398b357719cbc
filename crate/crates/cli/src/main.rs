use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use mfchaos::commands::{self, BoundsArgs, EntropyArgs, ProbeArgs};
use mfchaos::exit::{status_of, Status, StatusError};
use mfchaos::plan::{BoundSpec, Estimator, ExperimentPlan, PicardSpec};
use mfchaos::report::{write_csv, write_json, KernelRow, NoiseRow};
use mfchaos::{pipeline, Axis};
use mfchaos_core::{Execution, SimConfig};

#[derive(Parser, Debug)]
#[command(name = "mfchaos", version, about = "Propagation-of-chaos experiments for mean-field particle systems")]
struct Cli {
    /// JSON configuration: a simulation config, or an experiment plan for `run`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: out, or the plan's `out` for `run`].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true, env = "MFCHAOS_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone, Copy)]
struct PicardArgs {
    /// Paths of the mean-field approximation.
    #[arg(long, default_value_t = 10_000)]
    picard_paths: usize,
    #[arg(long, default_value_t = 3)]
    picard_iterations: usize,
    /// Reference sample kept per step for pairwise kernels.
    #[arg(long, default_value_t = 512)]
    law_sample: usize,
}

impl From<PicardArgs> for PicardSpec {
    fn from(a: PicardArgs) -> Self {
        PicardSpec { paths: a.picard_paths, iterations: a.picard_iterations, law_sample: a.law_sample }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum EstimatorArg {
    Girsanov,
    Knn,
    Tv,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Girsanov => Estimator::Girsanov,
            EstimatorArg::Knn => Estimator::Knn,
            EstimatorArg::Tv => Estimator::Tv,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AxisArg {
    N,
    K,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the particle system and write a trajectory store.
    Simulate {
        /// Also write the mean-field reference paths.
        #[arg(long)]
        mean_field: bool,
        #[command(flatten)]
        picard: PicardArgs,
    },
    /// Estimate entropies and total variation of k-marginals.
    Entropy {
        #[arg(long, value_delimiter = ',', default_value = "1")]
        k: Vec<usize>,
        /// Times; defaults to the grid horizon.
        #[arg(long, value_delimiter = ',')]
        t: Vec<f64>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "girsanov,knn,tv")]
        estimator: Vec<EstimatorArg>,
        #[arg(long, default_value_t = 4)]
        neighbors: usize,
        #[arg(long, default_value_t = 16)]
        bins: usize,
        /// Trajectory store to read instead of simulating (kNN and TV only).
        #[arg(long, requires = "reference")]
        store: Option<PathBuf>,
        /// Reference-law store matching `--store`.
        #[arg(long, requires = "store")]
        reference: Option<PathBuf>,
        #[command(flatten)]
        picard: PicardArgs,
    },
    /// Evaluate closed-form bounds, the entropy cascade and horizons.
    Bounds {
        #[arg(long, value_delimiter = ',', default_value = "50,100")]
        n: Vec<usize>,
        /// Marginal sizes; defaults to all of 1..=n.
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        t: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        c0: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        m: f64,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        kappa: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "2")]
        beta: Vec<f64>,
        /// Hurst indices of the fractional horizon rows.
        #[arg(long, value_delimiter = ',', default_value = "0.75")]
        hurst: Vec<f64>,
        #[arg(long, default_value_t = 16.0)]
        horizon_c: f64,
    },
    /// Compare the empirical fBm covariance with the exact one.
    NoiseCheck {
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.5,0.8")]
        hurst: Vec<f64>,
        #[arg(long, default_value_t = 8)]
        points: usize,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
    },
    /// Tabulate a kernel and its numerical divergence on a grid.
    KernelProbe {
        /// biot_savart_periodic, biot_savart_lattice, biot_savart_free or smooth_divfree.
        #[arg(long, default_value = "biot_savart_periodic")]
        kernel: String,
        #[arg(long, default_value_t = 32)]
        grid: usize,
        #[arg(long, default_value_t = 8)]
        radius: u32,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[arg(long, default_value_t = 1)]
        frequency: u32,
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
    },
    /// Fit a power law to entropy rows.
    RateFit {
        /// entropy.csv to read; defaults to the one in `--out`.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "knn")]
        estimator: String,
        #[arg(long, value_enum, default_value = "n")]
        axis: AxisArg,
        /// Fixed marginal size for the n axis.
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Fixed particle number for the k axis.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        t: Option<f64>,
    },
    /// Run a full experiment plan.
    Run,
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    StatusError(Status::Config, msg.into()).into()
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> anyhow::Result<SimConfig> {
    let path = path.ok_or_else(|| config_error("--config is required"))?;
    let mut cfg = SimConfig::from_path(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli, exec: Execution) -> anyhow::Result<Status> {
    let default_out = PathBuf::from("out");
    let out = cli.out.as_deref().unwrap_or(&default_out);
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Simulate { mean_field, picard } => {
            let cfg = load_config(config, cli.seed)?;
            commands::simulate(&cfg, out, mean_field.then(|| (*picard).into()), exec)
        }
        Command::Entropy { k, t, estimator, neighbors, bins, store, reference, picard } => {
            let cfg = load_config(config, cli.seed)?;
            let grid = cfg.time_grid()?;
            let args = EntropyArgs {
                k: k.clone(),
                t: if t.is_empty() { vec![grid.horizon()] } else { t.clone() },
                estimators: estimator.iter().map(|&e| e.into()).collect(),
                neighbors: *neighbors,
                bins: *bins,
                picard: (*picard).into(),
            };
            let (rows, status) = match (store, reference) {
                (Some(s), Some(r)) => {
                    let open = |p: &PathBuf| {
                        std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))
                    };
                    let particles = mfchaos::store::Store::read(open(s)?)?;
                    let refs = mfchaos::store::Store::read(open(r)?)?;
                    let eps = mfchaos_core::dynamics::System::from_config(&cfg)?.eps.unwrap_or(0.0);
                    let rows = commands::entropy_from_stores(
                        &particles,
                        &refs,
                        &grid,
                        &args,
                        cfg.domain.is_torus(),
                        cfg.seed,
                        eps,
                        exec,
                    )?;
                    (rows, Status::Success)
                }
                _ => commands::entropy(&cfg, &args, exec)?,
            };
            commands::write_entropy(out, &rows)?;
            Ok(status)
        }
        Command::Bounds { n, k, t, c0, gamma, m, kappa, beta, hurst, horizon_c } => commands::bounds(
            &BoundsArgs {
                n: n.clone(),
                k: k.clone(),
                t: t.clone(),
                spec: BoundSpec { c0: *c0, gamma: *gamma, m: *m },
                kappa: kappa.clone(),
                beta: beta.clone(),
                hurst: hurst.clone(),
                horizon_c: *horizon_c,
            },
            out,
        ),
        Command::NoiseCheck { hurst, points, paths, horizon } => {
            let (rows, status) = commands::noise_check(hurst, *points, *paths, *horizon, cli.seed.unwrap_or(0), exec)?;
            std::fs::create_dir_all(out)?;
            write_csv::<NoiseRow>(&out.join("noise_check.csv"), &rows, &["t", "s", "H", "emp", "exact", "stderr"])?;
            Ok(status)
        }
        Command::KernelProbe { kernel, grid, radius, eps, frequency, h } => {
            let rows = commands::kernel_probe(
                kernel,
                ProbeArgs { radius: *radius, eps: *eps, frequency: *frequency, grid: *grid, h: *h },
            )?;
            std::fs::create_dir_all(out)?;
            write_csv::<KernelRow>(&out.join("kernel_probe.csv"), &rows, &["x1", "x2", "K1", "K2", "div_estimate"])?;
            Ok(Status::Success)
        }
        Command::RateFit { input, estimator, axis, k, n, t } => {
            let path = input.clone().unwrap_or_else(|| out.join("entropy.csv"));
            let rows = commands::read_entropy(&path)?;
            let axis = match axis {
                AxisArg::N => Axis::N { k: *k },
                AxisArg::K => Axis::K { n: n.ok_or_else(|| config_error("--axis k needs --n"))? },
            };
            let fit = commands::rate_fit(&rows, estimator, axis, *t)?;
            std::fs::create_dir_all(out)?;
            write_json(&out.join("rate_fit.json"), &fit)?;
            println!("{}", serde_json::to_string(&fit)?);
            Ok(Status::Success)
        }
        Command::Run => {
            let path = config.ok_or_else(|| config_error("--config is required"))?;
            let mut plan = ExperimentPlan::from_path(path).with_context(|| format!("loading {}", path.display()))?;
            if let Some(s) = cli.seed {
                plan.base.seed = s;
            }
            let out = cli.out.clone().or_else(|| plan.out.clone()).unwrap_or(default_out);
            let report = pipeline::run_experiment(&plan, &out, exec)?;
            Ok(report.status)
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1);
    let exec = if threads == 1 { Execution::Sequential } else { Execution::Parallel };
    let result = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(anyhow::Error::from)
        .and_then(|pool| pool.install(|| dispatch(&cli, exec)));
    let status = match result {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e:#}");
            status_of(&e)
        }
    };
    if status != Status::Success {
        eprintln!("exit status: {}", status.as_str());
    }
    std::process::exit(status.code());
}
