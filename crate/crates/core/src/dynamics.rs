//! Euler–Maruyama integration of the interacting particle system, the
//! Picard approximation of its mean-field limit, and independent
//! mean-field copies coupled to the interacting drift.

use crate::config::{Domain, InitialLaw, NoiseKind, SimConfig};
use crate::drift::{Aggregate, DriftSpec, Geometry, Interaction, StateArrays};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, try_map_indexed, Execution};
use crate::geometry::wrap_coord;
use crate::grid::TimeGrid;
use crate::noise::{FbmGenerator, VolterraTransform};
use crate::rng::{derive_seed, stream, RngStream};

/// Below this population size the per-particle drift loop stays serial.
const INNER_PARALLEL_MIN: usize = 256;

/// Everything needed to integrate one configuration.
#[derive(Clone, Debug)]
pub struct System {
    pub domain: Domain,
    pub dim: usize,
    pub n: usize,
    pub grid: TimeGrid,
    pub drift: DriftSpec,
    pub sigma: f64,
    pub hurst: f64,
    pub initial: InitialLaw,
    pub seed: u64,
    pub replicas: usize,
    pub recorded_steps: Vec<usize>,
    pub eps: Option<f64>,
    pub radius: Option<u32>,
    generator: FbmGenerator,
}

impl System {
    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.time_grid()?;
        let drift = cfg.drift()?;
        let hurst = cfg.noise.hurst();
        let recorded_steps = record_schedule(grid.steps(), cfg.record_every);
        let eps = match &drift.interaction {
            Interaction::Kernel(k) => k.regularization_eps(),
            _ => None,
        };
        Ok(Self {
            domain: cfg.domain,
            dim: cfg.dim(),
            n: cfg.n_particles,
            generator: FbmGenerator::new(&grid, hurst)?,
            grid,
            drift,
            sigma: cfg.sigma,
            hurst,
            initial: cfg.initial.clone(),
            seed: cfg.seed,
            replicas: cfg.replicas,
            recorded_steps,
            eps,
            radius: cfg.truncation_radius(),
        })
    }

    /// Switches fractional noise to a synthesis that retains its driving
    /// Brownian motion, as the fractional change of measure needs it.
    pub fn with_retained_noise(mut self) -> Result<Self> {
        if !self.generator.retains_underlying() {
            self.generator = FbmGenerator::cholesky(&self.grid, self.hurst)?;
        }
        Ok(self)
    }

    pub fn with_recorded_steps(mut self, mut steps: Vec<usize>) -> Result<Self> {
        steps.sort_unstable();
        steps.dedup();
        if steps.last().is_some_and(|s| *s > self.grid.steps()) {
            return Err(Error::Domain("recorded step beyond the grid".into()));
        }
        self.recorded_steps = steps;
        Ok(self)
    }

    pub fn geometry(&self) -> Geometry {
        self.domain.geometry()
    }

    pub fn used_fallback(&self) -> bool {
        self.generator.used_fallback()
    }

    pub fn noise_kind(&self) -> NoiseKind {
        if self.hurst == 0.5 {
            NoiseKind::Brownian
        } else {
            NoiseKind::Fbm { hurst: self.hurst }
        }
    }

    /// Initial positions of `count` particles of replica `replica`.
    pub fn initial_states(&self, seed: u64, replica: u64, count: usize) -> StateArrays {
        let d = self.dim;
        let mut pos = vec![0.0; count * d];
        for (i, p) in pos.chunks_exact_mut(d).enumerate() {
            let mut rng = RngStream::new(seed, replica, i as u64, stream::INITIAL);
            sample_initial(&self.initial, i, &mut rng, p);
            if self.domain.is_torus() {
                p.iter_mut().for_each(|x| *x = wrap_coord(*x));
            }
        }
        StateArrays::from_initial(d, pos)
    }

    fn noise_block(&self, seed: u64, replica: u64, count: usize, keep_w: bool) -> Result<NoiseBlock> {
        let steps = self.grid.steps();
        let len = count * self.dim * steps;
        if self.sigma == 0.0 {
            return Ok(NoiseBlock {
                steps,
                incr: vec![0.0; len],
                w: keep_w.then(|| vec![0.0; len]),
            });
        }
        let mut incr = vec![0.0; len];
        let mut w = keep_w.then(|| vec![0.0; len]);
        let sd = self.grid.dt().sqrt();
        for (slot, out) in incr.chunks_exact_mut(steps).enumerate() {
            let (particle, coord) = (slot / self.dim, slot % self.dim);
            let mut rng = RngStream::new(seed, replica, particle as u64, stream::NOISE + coord as u64);
            match w.as_mut() {
                Some(w) => {
                    let xi = &mut w[slot * steps..(slot + 1) * steps];
                    self.generator.increments(&mut rng, out, Some(xi))?;
                    xi.iter_mut().for_each(|v| *v *= sd);
                }
                None => self.generator.increments(&mut rng, out, None)?,
            }
        }
        Ok(NoiseBlock { steps, incr, w })
    }

    /// Integrates one population. `count` particles share replica index
    /// `replica` of root seed `seed`.
    fn run_population(
        &self,
        seed: u64,
        replica: u64,
        count: usize,
        mode: Mode<'_>,
        track_cap: Option<usize>,
        exec: Execution,
    ) -> Result<PopulationRun> {
        let d = self.dim;
        let steps = self.grid.steps();
        let dt = self.grid.dt();
        let geom = self.geometry();
        let coupled = matches!(mode, Mode::Coupled(_));
        let fractional = coupled && self.hurst != 0.5;
        if coupled && self.sigma == 0.0 {
            return Err(Error::Domain("change of measure needs nonzero noise".into()));
        }
        let noise = self.noise_block(seed, replica, count, fractional)?;
        let mut states = self.initial_states(seed, replica, count);
        let track_path = !self.drift.state_dependent();
        let interaction = &self.drift.interaction;
        let inner = if count >= INNER_PARALLEL_MIN { exec } else { Execution::Sequential };

        let mut recorded = Vec::with_capacity(self.recorded_steps.len() * count * d);
        let mut next_record = 0;
        let mut record = |step: usize, states: &StateArrays, recorded: &mut Vec<f64>| {
            while next_record < self.recorded_steps.len() && self.recorded_steps[next_record] == step {
                recorded.extend_from_slice(&states.pos);
                next_record += 1;
            }
        };
        record(0, &states, &mut recorded);

        let mut track = track_cap.map(|cap| LawTrack::with_capacity(steps + 1, cap));
        let mut log_weight = coupled.then(|| vec![0.0; steps + 1]);
        let mut energy = coupled.then(|| vec![0.0; steps + 1]);
        // running integral of the drift difference, fractional case only
        let mut shift = fractional.then(|| vec![0.0; count * d * (steps + 1)]);
        let inv_sigma = 1.0 / self.sigma;

        for m in 0..steps {
            let t = self.grid.time(m);
            let needs_pop = !matches!(mode, Mode::MeanField(_));
            let pop = if needs_pop { interaction.aggregate(&states) } else { Aggregate::Nothing };
            if let Some(track) = track.as_mut() {
                track.push(interaction, &states);
            }
            let drifts = map_indexed(inner, count, |i| -> Result<([f64; 3], [f64; 3])> {
                let x = states.state(i);
                let mut b0 = [0.0; 3];
                self.drift.confinement.eval(t, &x, &mut b0[..d]);
                let mut own = [0.0; 3];
                let mut diff = [0.0; 3];
                match mode {
                    Mode::Interacting => {
                        let mut s = [0.0; 3];
                        interaction.sum_excluding(t, geom, i, &states, &pop, &mut s[..d])?;
                        for c in 0..d {
                            own[c] = b0[c] + s[c] / (count - 1) as f64;
                        }
                    }
                    Mode::MeanField(law) => {
                        let mut s = [0.0; 3];
                        law.mean(interaction, t, geom, m, &x, &mut s[..d])?;
                        for c in 0..d {
                            own[c] = b0[c] + s[c];
                        }
                    }
                    Mode::Coupled(law) => {
                        let mut s = [0.0; 3];
                        let mut q = [0.0; 3];
                        interaction.sum_excluding(t, geom, i, &states, &pop, &mut s[..d])?;
                        law.mean(interaction, t, geom, m, &x, &mut q[..d])?;
                        for c in 0..d {
                            own[c] = b0[c] + q[c];
                            diff[c] = s[c] / (count - 1) as f64 - q[c];
                        }
                    }
                }
                Ok((own, diff))
            });

            let mut lw_step = 0.0;
            for (i, r) in drifts.into_iter().enumerate() {
                let (own, diff) = r?;
                for c in 0..d {
                    let slot = i * d + c;
                    let db = noise.incr[slot * noise.steps + m];
                    let mut x = states.pos[slot] + own[c] * dt + self.sigma * db;
                    if !x.is_finite() {
                        return Err(Error::BlowUp { replica: replica as usize, step: m + 1, particle: i });
                    }
                    if geom == Geometry::Torus {
                        x = wrap_coord(x);
                    }
                    states.pos[slot] = x;
                    if let Some(h) = shift.as_mut() {
                        let base = slot * (steps + 1);
                        h[base + m + 1] = h[base + m] + diff[c] * dt * inv_sigma;
                    } else if coupled {
                        lw_step += diff[c] * db * inv_sigma - 0.5 * diff[c] * diff[c] * dt * inv_sigma * inv_sigma;
                    }
                }
                if i == 0 {
                    if let Some(e) = energy.as_mut() {
                        e[m + 1] = e[m] + diff[..d].iter().map(|v| v * v).sum::<f64>() * dt;
                    }
                }
            }
            if let Some(lw) = log_weight.as_mut() {
                lw[m + 1] = lw[m] + lw_step;
            }
            if track_path {
                states.absorb_current();
            }
            record(m + 1, &states, &mut recorded);
        }
        if let Some(track) = track.as_mut() {
            track.push(interaction, &states);
        }

        if let (Some(h), Some(lw)) = (shift.as_ref(), log_weight.as_mut()) {
            let volterra = VolterraTransform::new(&self.grid, self.hurst)?;
            let w = noise.w.as_ref().expect("retained noise for fractional weights");
            let mut per_step = vec![0.0; steps];
            for slot in 0..count * d {
                let u = volterra.apply(&h[slot * (steps + 1)..(slot + 1) * (steps + 1)])?;
                let dw = &w[slot * steps..(slot + 1) * steps];
                for m in 0..steps {
                    per_step[m] += u[m] * dw[m] - 0.5 * u[m] * u[m] * dt;
                }
            }
            for m in 0..steps {
                lw[m + 1] = lw[m] + per_step[m];
            }
        }
        if let Some(lw) = log_weight.as_ref() {
            if lw.iter().any(|v| !v.is_finite()) {
                return Err(Error::BlowUp { replica: replica as usize, step: steps, particle: 0 });
            }
        }

        Ok(PopulationRun {
            recorded,
            track,
            log_weight,
            energy,
        })
    }
}

#[derive(Clone, Copy)]
enum Mode<'a> {
    Interacting,
    MeanField(&'a LawTrack),
    Coupled(&'a LawTrack),
}

struct NoiseBlock {
    steps: usize,
    /// `(particle * dim + coord) * steps + step`
    incr: Vec<f64>,
    /// Driving Brownian increments, same layout.
    w: Option<Vec<f64>>,
}

struct PopulationRun {
    recorded: Vec<f64>,
    track: Option<LawTrack>,
    log_weight: Option<Vec<f64>>,
    energy: Option<Vec<f64>>,
}

fn record_schedule(steps: usize, every: Option<usize>) -> Vec<usize> {
    let mut out = match every {
        Some(e) => (0..=steps).step_by(e).collect(),
        None => vec![0],
    };
    if out.last() != Some(&steps) {
        out.push(steps);
    }
    out
}

fn sample_initial(law: &InitialLaw, index: usize, rng: &mut RngStream, out: &mut [f64]) {
    match law {
        InitialLaw::Uniform => out.iter_mut().for_each(|x| *x = rng.uniform() - 0.5),
        InitialLaw::Gaussian { sigma, mean } => out.iter_mut().for_each(|x| *x = mean + sigma * rng.normal()),
        InitialLaw::Ball { radius } => {
            rng.fill_normal(out);
            let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            let r = radius * rng.uniform().powf(1.0 / out.len() as f64);
            out.iter_mut().for_each(|x| *x *= r / norm);
        }
        InitialLaw::Point { x } => out.copy_from_slice(x),
        InitialLaw::Fixed { positions } => out.copy_from_slice(&positions[index % positions.len()]),
    }
}

/// Per-step summaries of an empirical law, enough to evaluate
/// `<mu_t, b(t, x, .)>` at every grid index.
#[derive(Clone, Debug)]
pub struct LawTrack {
    aggregates: Vec<Aggregate>,
    samples: Vec<StateArrays>,
    cap: usize,
}

impl LawTrack {
    fn with_capacity(len: usize, cap: usize) -> Self {
        Self {
            aggregates: Vec::with_capacity(len),
            samples: Vec::new(),
            cap,
        }
    }

    fn push(&mut self, interaction: &Interaction, states: &StateArrays) {
        let agg = interaction.aggregate(states);
        if matches!(agg, Aggregate::Pairwise { .. }) {
            let head = states.head(self.cap);
            self.aggregates.push(Aggregate::Pairwise { count: head.len() });
            self.samples.push(head);
        } else {
            self.aggregates.push(agg);
        }
    }

    /// The same law at every step.
    pub fn frozen(interaction: &Interaction, states: &StateArrays, len: usize, cap: usize) -> Self {
        let mut t = Self::with_capacity(len, cap);
        for _ in 0..len {
            t.push(interaction, states);
        }
        t
    }

    pub fn len(&self) -> usize {
        self.aggregates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aggregates.is_empty()
    }

    fn mean(
        &self,
        interaction: &Interaction,
        t: f64,
        geom: Geometry,
        step: usize,
        x: &crate::drift::ParticleState<'_>,
        out: &mut [f64],
    ) -> Result<()> {
        let agg = &self.aggregates[step];
        let empty = StateArrays::from_initial(x.pos.len(), Vec::new());
        let sample = if matches!(agg, Aggregate::Pairwise { .. }) {
            &self.samples[step]
        } else {
            &empty
        };
        interaction.mean_against(t, geom, x, sample, agg, out)
    }
}

/// Recorded positions of an ensemble of replicas.
#[derive(Clone, Debug)]
pub struct ParticleEnsemble {
    pub domain: Domain,
    pub dim: usize,
    pub n: usize,
    pub replicas: usize,
    pub grid: TimeGrid,
    pub drift: DriftSpec,
    pub eps: Option<f64>,
    pub radius: Option<u32>,
    pub hurst: f64,
    pub seed: u64,
    pub recorded_steps: Vec<usize>,
    /// `[replica][record][particle][coord]`
    pub positions: Vec<f64>,
}

impl ParticleEnsemble {
    fn replica_stride(&self) -> usize {
        self.recorded_steps.len() * self.n * self.dim
    }

    pub fn record_index(&self, step: usize) -> Option<usize> {
        self.recorded_steps.iter().position(|s| *s == step)
    }

    pub fn position(&self, replica: usize, record: usize, particle: usize) -> &[f64] {
        let start = replica * self.replica_stride() + (record * self.n + particle) * self.dim;
        &self.positions[start..start + self.dim]
    }
}

/// A `rows x cols` row-major sample matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl SampleMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, found: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }
}

/// Simulates `config.replicas` independent copies of the n-particle system.
pub fn simulate_particle_system(config: &SimConfig, exec: Execution) -> Result<ParticleEnsemble> {
    simulate_system(&System::from_config(config)?, exec)
}

pub fn simulate_system(system: &System, exec: Execution) -> Result<ParticleEnsemble> {
    let inner = if system.replicas == 1 { exec } else { Execution::Sequential };
    let runs = try_map_indexed(exec, system.replicas, |r| {
        system
            .run_population(system.seed, r as u64, system.n, Mode::Interacting, None, inner)
            .map(|run| run.recorded)
    })?;
    Ok(ParticleEnsemble {
        domain: system.domain,
        dim: system.dim,
        n: system.n,
        replicas: system.replicas,
        grid: system.grid,
        drift: system.drift.clone(),
        eps: system.eps,
        radius: system.radius,
        hurst: system.hurst,
        seed: system.seed,
        recorded_steps: system.recorded_steps.clone(),
        positions: runs.concat(),
    })
}

/// First `k` particle positions at time `t` of every replica. The flag
/// reports that `t` was not a grid point and the nearest one was used.
pub fn extract_marginal(ensemble: &ParticleEnsemble, k: usize, t: f64) -> Result<(SampleMatrix, bool)> {
    if k == 0 || k > ensemble.n {
        return Err(Error::Domain(format!("marginal size {k} outside 1..={}", ensemble.n)));
    }
    let (step, off_grid) = ensemble.grid.nearest_step(t);
    if off_grid {
        log::warn!("t = {t} is off the grid; using t = {}", ensemble.grid.time(step));
    }
    let record = ensemble
        .record_index(step)
        .ok_or_else(|| Error::Domain(format!("step {step} was not recorded")))?;
    let mut data = Vec::with_capacity(ensemble.replicas * k * ensemble.dim);
    for r in 0..ensemble.replicas {
        for p in 0..k {
            data.extend_from_slice(ensemble.position(r, record, p));
        }
    }
    Ok((SampleMatrix::new(ensemble.replicas, k * ensemble.dim, data)?, off_grid))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PicardOptions {
    pub paths: usize,
    pub iterations: usize,
    /// Reference sample size kept per step for interactions without a
    /// closed-form population sum.
    pub law_sample: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { paths: 10_000, iterations: 3, law_sample: 512 }
    }
}

/// Approximation of the mean-field law by `m` independent paths.
#[derive(Clone, Debug)]
pub struct MeanFieldLaw {
    pub grid: TimeGrid,
    pub dim: usize,
    pub paths: usize,
    pub iterations: usize,
    /// `residuals[j]`: gap between iterate `j + 1` and iterate `j`, with
    /// iterate 0 the initial law frozen in time.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub recorded_steps: Vec<usize>,
    /// `[record][path][coord]` of the last iterate.
    pub positions: Vec<f64>,
    track: LawTrack,
}

impl MeanFieldLaw {
    /// Positions of all paths at grid index `step`, `paths x dim`.
    pub fn sample_at(&self, step: usize) -> Result<SampleMatrix> {
        let r = self
            .recorded_steps
            .iter()
            .position(|s| *s == step)
            .ok_or_else(|| Error::Domain(format!("step {step} was not recorded")))?;
        let stride = self.paths * self.dim;
        SampleMatrix::new(self.paths, self.dim, self.positions[r * stride..(r + 1) * stride].to_vec())
    }

    pub fn track(&self) -> &LawTrack {
        &self.track
    }
}

/// Mean of 1-d Wasserstein distances over coordinates.
fn w1_coordinatewise(a: &[f64], b: &[f64], dim: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..dim {
        let mut x: Vec<f64> = a.iter().skip(c).step_by(dim).copied().collect();
        let mut y: Vec<f64> = b.iter().skip(c).step_by(dim).copied().collect();
        x.sort_by(f64::total_cmp);
        y.sort_by(f64::total_cmp);
        total += x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum::<f64>() / x.len() as f64;
    }
    total / dim as f64
}

/// Picard iteration over empirical laws: each iterate drives `paths`
/// fresh independent particles with the interaction averaged against the
/// previous iterate.
pub fn solve_mckean_vlasov_picard(system: &System, opts: PicardOptions, exec: Execution) -> Result<MeanFieldLaw> {
    if opts.iterations == 0 || opts.paths < 2 {
        return Err(Error::Domain("Picard iteration needs iterations >= 1 and paths >= 2".into()));
    }
    let m = opts.paths;
    let steps = system.grid.steps();
    let d = system.dim;
    let interaction = &system.drift.interaction;
    let seed0 = derive_seed(system.seed, "picard/0");
    let initial = system.initial_states(seed0, 0, m);
    let mut track = LawTrack::frozen(interaction, &initial, steps + 1, opts.law_sample);
    let mut prev: Vec<f64> = system
        .recorded_steps
        .iter()
        .flat_map(|_| initial.pos.iter().copied())
        .collect();
    let mut residuals = Vec::with_capacity(opts.iterations);
    for j in 1..=opts.iterations {
        let seed = derive_seed(system.seed, &format!("picard/{j}"));
        let run = system.run_population(seed, 0, m, Mode::MeanField(&track), Some(opts.law_sample), exec)?;
        let stride = m * d;
        let gap = (0..system.recorded_steps.len())
            .map(|r| w1_coordinatewise(&run.recorded[r * stride..(r + 1) * stride], &prev[r * stride..(r + 1) * stride], d))
            .fold(0.0, f64::max);
        residuals.push(gap);
        prev = run.recorded;
        track = run.track.expect("tracked run");
    }
    let converged = residuals.windows(2).all(|w| w[1] <= w[0]);
    if !converged {
        log::warn!("Picard residuals not monotone: {residuals:?}");
    }
    Ok(MeanFieldLaw {
        grid: system.grid,
        dim: d,
        paths: m,
        iterations: opts.iterations,
        residuals,
        converged,
        recorded_steps: system.recorded_steps.clone(),
        positions: prev,
        track,
    })
}

/// Replicas of `n` independent mean-field copies, each carrying the log
/// density of the interacting system's law with respect to theirs.
#[derive(Clone, Debug)]
pub struct CoupledCopies {
    pub n: usize,
    pub replicas: usize,
    pub grid: TimeGrid,
    /// `[replica][step]`, `steps + 1` entries per replica.
    pub log_weight: Vec<f64>,
    /// Running `int |Δb|^2` of particle 0, same layout.
    pub energy: Vec<f64>,
    pub recorded_steps: Vec<usize>,
    /// `[replica][record][particle][coord]`
    pub positions: Vec<f64>,
    /// Relative calibration error of the discrete Volterra inverse; zero
    /// for Brownian noise.
    pub volterra_error: f64,
}

impl CoupledCopies {
    pub fn log_weights_at(&self, step: usize) -> Vec<f64> {
        let s = self.grid.steps() + 1;
        (0..self.replicas).map(|r| self.log_weight[r * s + step]).collect()
    }

    pub fn energy_at(&self, step: usize) -> Vec<f64> {
        let s = self.grid.steps() + 1;
        (0..self.replicas).map(|r| self.energy[r * s + step]).collect()
    }
}

/// Simulates `system.replicas` groups of `system.n` independent copies
/// driven by `law`, accumulating the Girsanov exponent of the interacting
/// drift against the mean-field drift.
pub fn simulate_coupled_copies(system: &System, law: &MeanFieldLaw, exec: Execution) -> Result<CoupledCopies> {
    let system = system.clone().with_retained_noise()?;
    if law.track.len() != system.grid.steps() + 1 {
        return Err(Error::Mismatch("mean-field law was computed on a different grid".into()));
    }
    let seed = derive_seed(system.seed, "copies");
    let runs = try_map_indexed(exec, system.replicas, |r| {
        system.run_population(seed, r as u64, system.n, Mode::Coupled(&law.track), None, Execution::Sequential)
    })?;
    let volterra_error = if system.hurst == 0.5 {
        0.0
    } else {
        VolterraTransform::new(&system.grid, system.hurst)?.calibration_error(0.5 * system.grid.horizon())?
    };
    let mut log_weight = Vec::with_capacity(system.replicas * (system.grid.steps() + 1));
    let mut energy = Vec::with_capacity(log_weight.capacity());
    let mut positions = Vec::new();
    for run in runs {
        log_weight.extend(run.log_weight.expect("coupled run"));
        energy.extend(run.energy.expect("coupled run"));
        positions.extend(run.recorded);
    }
    Ok(CoupledCopies {
        n: system.n,
        replicas: system.replicas,
        grid: system.grid,
        log_weight,
        energy,
        recorded_steps: system.recorded_steps.clone(),
        positions,
        volterra_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{GridSpec, NamedSpec};

    fn config(n: usize, initial: InitialLaw, interaction: NamedSpec, confinement: NamedSpec) -> SimConfig {
        SimConfig {
            domain: Domain::Euclidean { dim: 1 },
            n_particles: n,
            grid: GridSpec { t0: 0.0, dt: Some(1e-3), steps: Some(1000), horizon: None },
            noise: NoiseKind::Brownian,
            sigma: 0.0,
            initial,
            confinement,
            interaction,
            regularization_eps: None,
            growth_constant: None,
            seed: 1,
            replicas: 1,
            record_every: Some(100),
        }
    }

    #[test]
    fn no_dynamics_keeps_paths_constant() {
        let mut cfg = config(3, InitialLaw::Gaussian { sigma: 1.0, mean: 0.0 }, NamedSpec::new("zero"), NamedSpec::new("zero"));
        cfg.replicas = 2;
        let e = simulate_particle_system(&cfg, Execution::Sequential).unwrap();
        for r in 0..2 {
            for p in 0..3 {
                let x0 = e.position(r, 0, p)[0];
                for rec in 0..e.recorded_steps.len() {
                    assert_eq!(e.position(r, rec, p)[0], x0);
                }
            }
        }
    }

    #[test]
    fn linear_confinement_matches_exponential_decay() {
        let cfg = config(
            2,
            InitialLaw::Point { x: vec![1.0] },
            NamedSpec::new("zero"),
            NamedSpec::new("linear").with("coef", -1.0),
        );
        let e = simulate_particle_system(&cfg, Execution::Sequential).unwrap();
        let last = e.recorded_steps.len() - 1;
        let x = e.position(0, last, 0)[0];
        assert!((x - (-1f64).exp()).abs() < 2e-3, "{x}");
    }

    #[test]
    fn two_body_attraction_contracts() {
        let cfg = config(
            2,
            InitialLaw::Fixed { positions: vec![vec![1.0], vec![-1.0]] },
            NamedSpec::new("linear").with("self_coef", -1.0).with("other_coef", 1.0),
            NamedSpec::new("zero"),
        );
        let e = simulate_particle_system(&cfg, Execution::Sequential).unwrap();
        for (rec, step) in e.recorded_steps.iter().enumerate() {
            let t = e.grid.time(*step);
            let exact = (-2.0 * t).exp();
            assert!((e.position(0, rec, 0)[0] - exact).abs() < 2e-3);
            assert!((e.position(0, rec, 1)[0] + exact).abs() < 2e-3);
        }
    }

    #[test]
    fn blow_up_is_reported() {
        let mut cfg = config(
            2,
            InitialLaw::Point { x: vec![10.0] },
            NamedSpec::new("quadratic"),
            NamedSpec::new("zero"),
        );
        cfg.grid = GridSpec { t0: 0.0, dt: Some(0.1), steps: Some(100), horizon: None };
        match simulate_particle_system(&cfg, Execution::Sequential) {
            Err(Error::BlowUp { replica: 0, step, .. }) => assert!(step > 1),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn threads_do_not_change_results() {
        let mut cfg = config(5, InitialLaw::Gaussian { sigma: 1.0, mean: 0.0 }, NamedSpec::new("sin_gate"), NamedSpec::new("zero"));
        cfg.sigma = 1.0;
        cfg.replicas = 6;
        let a = simulate_particle_system(&cfg, Execution::Sequential).unwrap();
        let b = simulate_particle_system(&cfg, Execution::Parallel).unwrap();
        assert_eq!(a.positions, b.positions);
    }

    #[test]
    fn marginal_shape_and_identity() {
        let mut cfg = config(4, InitialLaw::Gaussian { sigma: 1.0, mean: 0.0 }, NamedSpec::new("zero"), NamedSpec::new("zero"));
        cfg.replicas = 7;
        cfg.sigma = 1.0;
        let e = simulate_particle_system(&cfg, Execution::Sequential).unwrap();
        let (full, off) = extract_marginal(&e, 4, 1.0).unwrap();
        assert!(!off);
        assert_eq!((full.rows, full.cols), (7, 4));
        let last = e.recorded_steps.len() - 1;
        assert_eq!(full.row(3), &(0..4).map(|p| e.position(3, last, p)[0]).collect::<Vec<_>>()[..]);
        let (_, off) = extract_marginal(&e, 1, 0.10004).unwrap();
        assert!(off);
        assert!(extract_marginal(&e, 5, 1.0).is_err());
        assert!(extract_marginal(&e, 1, 0.05).is_err(), "step 50 was not recorded");
    }

    #[test]
    fn record_schedule_includes_endpoints() {
        assert_eq!(record_schedule(10, None), vec![0, 10]);
        assert_eq!(record_schedule(10, Some(4)), vec![0, 4, 8, 10]);
        assert_eq!(record_schedule(10, Some(5)), vec![0, 5, 10]);
    }
}
