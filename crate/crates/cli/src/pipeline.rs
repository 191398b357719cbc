//! The chaos-rate experiment: simulate every sweep point, estimate
//! entropies and total variation, evaluate bounds, cross-check.

use std::collections::BTreeMap;
use std::path::Path;

use mfchaos_core::bounds::{constant_c, hierarchy_ode_solve, theorem_bound};
use mfchaos_core::dynamics::{
    extract_marginal, simulate_coupled_copies, simulate_system, solve_mckean_vlasov_picard, MeanFieldLaw, System,
};
use mfchaos_core::exec::map_indexed;
use mfchaos_core::measure::{
    entropy_girsanov, entropy_knn, girsanov_weight, pinsker_and_subadditivity_check, tv_histogram, EntropyReport,
    HistogramRange, Metric, Tolerance, MAX_HISTOGRAM_DIM,
};
use mfchaos_core::{config::NoiseKind, Error, Execution};
use serde::Serialize;

use crate::exit::Status;
use crate::plan::{BoundSpec, Estimator, ExperimentPlan};
use crate::report::{
    write_csv, write_json, BoundRow, CheckRow, EntropyRow, Versions, BOUND_HEADER, CHECK_HEADER, ENTROPY_HEADER,
};
use crate::store::product_rows;

#[derive(Clone, Debug, Serialize)]
pub struct PointStatus {
    pub n: usize,
    pub status: &'static str,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PicardSummary {
    pub paths: usize,
    pub iterations: usize,
    pub law_sample: usize,
    pub residuals: Vec<f64>,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimatorParams {
    pub estimators: Vec<Estimator>,
    pub neighbors: usize,
    pub bins: usize,
    pub histogram_range: &'static str,
    pub knn_metric: &'static str,
    pub pinsker_sigmas: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub versions: Versions,
    pub seed: u64,
    pub dt: f64,
    pub steps: usize,
    /// Kernel regularization radius, 0 when the drift is not regularized.
    pub eps: f64,
    /// Lattice truncation radius of periodic kernels.
    #[serde(rename = "R")]
    pub radius: Option<u32>,
    pub replicas: usize,
    pub noise: NoiseKind,
    pub estimator_params: EstimatorParams,
    pub picard: Option<PicardSummary>,
    pub bounds: BoundSpec,
    pub plan: ExperimentPlan,
    pub points: Vec<PointStatus>,
    pub files: Vec<&'static str>,
    pub status: &'static str,
    pub exit_code: i32,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub status: Status,
    pub entropy: Vec<EntropyRow>,
    pub bounds: Vec<BoundRow>,
    pub checks: Vec<CheckRow>,
    pub manifest: Manifest,
}

#[derive(Default)]
struct PointRows {
    entropy: Vec<EntropyRow>,
    checks: Vec<CheckRow>,
    status: Option<Status>,
}

impl PointRows {
    fn flag(&mut self, s: Status) {
        self.status = Some(self.status.unwrap_or(Status::Success).worst(s));
    }
}

fn check_row(n: usize, k: usize, t: f64, check: &str, margin: f64) -> CheckRow {
    CheckRow { n, k, t, check: check.to_string(), margin, pass: margin >= 0.0 }
}

fn sweep_point(
    plan: &ExperimentPlan,
    n: usize,
    law: &MeanFieldLaw,
    steps: &[usize],
    exec: Execution,
) -> mfchaos_core::Result<PointRows> {
    let sys = System::from_config(&plan.config_for(n))?.with_recorded_steps(steps.to_vec())?;
    let (dt, seed, d) = (sys.grid.dt(), sys.seed, sys.dim);
    let eps = sys.eps.unwrap_or(0.0);
    let mut rows = PointRows::default();
    let mut full: BTreeMap<usize, EntropyReport> = BTreeMap::new();

    if plan.estimators.contains(&Estimator::Girsanov) {
        let copies = simulate_coupled_copies(&sys, law, exec)?;
        for &s in steps {
            let w = girsanov_weight(&copies, sys.grid.time(s))?;
            let rep = entropy_girsanov(&w, n, n)?;
            if !rep.reliable {
                rows.flag(Status::Unreliable);
            }
            let (zbar, zse) = w.mean_weight();
            let martingale = check_row(n, n, rep.t, "martingale", 3.0 * zse - (zbar - 1.0).abs());
            if !martingale.pass {
                log::warn!("E[Z] = {zbar} +- {zse} at n = {n}, t = {}", rep.t);
                rows.flag(Status::Consistency);
            }
            rows.checks.push(martingale);
            rows.entropy.push(EntropyRow::from_report(&rep, "girsanov", eps, dt, seed));
            for &k in &plan.k {
                let ratio = k as f64 / n as f64;
                let mut row = EntropyRow::from_report(&rep, "girsanov_surrogate", eps, dt, seed);
                row.k = k;
                row.value *= ratio;
                row.stderr *= ratio;
                rows.entropy.push(row);
            }
            full.insert(s, rep);
        }
    }

    let want_knn = plan.estimators.contains(&Estimator::Knn);
    let want_tv = plan.estimators.contains(&Estimator::Tv);
    if want_knn || want_tv {
        let ens = simulate_system(&sys, exec)?;
        let torus = sys.domain.is_torus();
        let metric = if torus { Metric::Periodic } else { Metric::Euclidean };
        let range = if torus { HistogramRange::Torus } else { HistogramRange::Auto };
        for &s in steps {
            let t = sys.grid.time(s);
            let reference = law.sample_at(s)?;
            for &k in &plan.k {
                let (p, _) = extract_marginal(&ens, k, t)?;
                let q = product_rows(&reference.data, d, k).map_err(|e| Error::InsufficientData(e.to_string()))?;
                let knn = if want_knn {
                    let rep = entropy_knn(&p, &q, plan.neighbors, metric, exec)?.at(k, n, t);
                    rows.entropy.push(EntropyRow::from_report(&rep, "knn", eps, dt, seed));
                    Some(rep)
                } else {
                    None
                };
                let tv = if want_tv && k * d <= MAX_HISTOGRAM_DIM {
                    let rep = tv_histogram(&p, &q, plan.bins, range)?.at(k, n, t);
                    rows.entropy.push(EntropyRow::from_report(&rep, "tv", eps, dt, seed));
                    Some(rep)
                } else {
                    if want_tv {
                        log::info!("skipping histogram TV in dimension {}", k * d);
                    }
                    None
                };
                if let (Some(h), Some(tv), Some(hf)) = (&knn, &tv, full.get(&s)) {
                    let c = pinsker_and_subadditivity_check(h, tv, hf, Tolerance::default())?;
                    if !c.pass {
                        rows.flag(Status::Consistency);
                    }
                    rows.checks.push(check_row(n, k, t, "pinsker", c.pinsker_margin));
                    rows.checks.push(check_row(n, k, t, "subadditivity", c.subadditivity_margin));
                }
            }
        }
    }
    Ok(rows)
}

/// Closed-form bound and cascade envelope at every sweep point. The
/// cascade starts from `H^k_0 = C0 k^2 / n^2`.
pub fn bound_rows(n_list: &[usize], k_list: &[usize], t_list: &[f64], spec: BoundSpec) -> mfchaos_core::Result<Vec<BoundRow>> {
    let mut rows = Vec::new();
    for &n in n_list {
        let nf = n as f64;
        let h0: Vec<f64> = (1..=n).map(|k| spec.c0 * (k * k) as f64 / (nf * nf)).collect();
        for &t in t_list {
            let c = constant_c(spec.c0, spec.gamma, spec.m, t);
            let cascade = if t > 0.0 {
                let limit = if spec.gamma > 0.0 { 1.0 / (2.0 * spec.gamma * nf) } else { f64::INFINITY };
                let env = hierarchy_ode_solve(n, spec.m, spec.gamma, &h0, t, (t / 1000.0).min(limit))?;
                (1..=n).map(|k| env.at_final(k)).collect()
            } else {
                h0.clone()
            };
            for &k in k_list {
                rows.push(BoundRow {
                    n,
                    k,
                    t,
                    closed_form: theorem_bound(c, spec.gamma, t, n, k)?,
                    cascade: cascade[k - 1],
                    c,
                    gamma: spec.gamma,
                    m: spec.m,
                });
            }
        }
    }
    Ok(rows)
}

/// Runs the plan without touching the disk.
pub fn evaluate(plan: &ExperimentPlan, exec: Execution) -> anyhow::Result<RunReport> {
    plan.validate()?;
    let base = System::from_config(&plan.base)?;
    let torus = base.domain.is_torus();
    let mut manifest = Manifest {
        versions: Versions::default(),
        seed: plan.base.seed,
        dt: base.grid.dt(),
        steps: base.grid.steps(),
        eps: base.eps.unwrap_or(0.0),
        radius: base.radius,
        replicas: plan.base.replicas,
        noise: plan.base.noise,
        estimator_params: EstimatorParams {
            estimators: plan.estimators.clone(),
            neighbors: plan.neighbors,
            bins: plan.bins,
            histogram_range: if torus { "torus" } else { "auto" },
            knn_metric: if torus { "periodic" } else { "euclidean" },
            pinsker_sigmas: Tolerance::default().sigmas,
        },
        picard: None,
        bounds: plan.bounds,
        plan: plan.clone(),
        points: Vec::new(),
        files: vec!["entropy.csv", "bounds.csv", "checks.csv", "manifest.json"],
        status: Status::Success.as_str(),
        exit_code: 0,
    };
    let mut report = RunReport {
        status: Status::Success,
        entropy: Vec::new(),
        bounds: Vec::new(),
        checks: Vec::new(),
        manifest: manifest.clone(),
    };
    if plan.is_empty() {
        report.manifest.files = vec!["manifest.json"];
        return Ok(report);
    }

    let steps = plan.time_steps()?;
    let law_system = base.with_recorded_steps(steps.clone())?;
    let law = solve_mckean_vlasov_picard(&law_system, plan.picard.into(), exec)?;
    manifest.picard = Some(PicardSummary {
        paths: law.paths,
        iterations: law.iterations,
        law_sample: plan.picard.law_sample,
        residuals: law.residuals.clone(),
        converged: law.converged,
    });

    let results = map_indexed(exec, plan.n.len(), |i| sweep_point(plan, plan.n[i], &law, &steps, exec));
    let mut status = Status::Success;
    for (&n, res) in plan.n.iter().zip(results) {
        match res {
            Ok(rows) => {
                let s = rows.status.unwrap_or(Status::Success);
                status = status.worst(s);
                manifest.points.push(PointStatus { n, status: s.as_str(), error: None });
                report.entropy.extend(rows.entropy);
                report.checks.extend(rows.checks);
            }
            Err(e) => {
                let s = Status::from(&e);
                log::error!("sweep point n = {n} failed: {e}");
                status = status.worst(s);
                manifest.points.push(PointStatus { n, status: s.as_str(), error: Some(e.to_string()) });
            }
        }
    }
    let times: Vec<f64> = steps.iter().map(|&s| law.grid.time(s)).collect();
    report.bounds = bound_rows(&plan.n, &plan.k, &times, plan.bounds)?;
    manifest.status = status.as_str();
    manifest.exit_code = status.code();
    report.status = status;
    report.manifest = manifest;
    Ok(report)
}

pub fn write_report(out: &Path, report: &RunReport) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    if report.manifest.files.contains(&"entropy.csv") {
        write_csv(&out.join("entropy.csv"), &report.entropy, ENTROPY_HEADER)?;
        write_csv(&out.join("bounds.csv"), &report.bounds, BOUND_HEADER)?;
        write_csv(&out.join("checks.csv"), &report.checks, CHECK_HEADER)?;
    }
    write_json(&out.join("manifest.json"), &report.manifest)
}

/// Runs the plan and writes its CSVs and manifest to `out`.
pub fn run_experiment(plan: &ExperimentPlan, out: &Path, exec: Execution) -> anyhow::Result<RunReport> {
    let report = evaluate(plan, exec)?;
    write_report(out, &report)?;
    Ok(report)
}
