//! Trajectory stores: CSV with one row per `(replica, particle, step)`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use anyhow::{bail, Context};
use mfchaos_core::dynamics::{MeanFieldLaw, ParticleEnsemble, SampleMatrix};

fn header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ["replica", "particle", "step"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=dim).map(|c| format!("x{c}")));
    h
}

pub fn write_trajectories<W: Write>(w: W, ens: &ParticleEnsemble) -> anyhow::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header(ens.dim))?;
    for r in 0..ens.replicas {
        for p in 0..ens.n {
            for (rec, step) in ens.recorded_steps.iter().enumerate() {
                let mut row = vec![r.to_string(), p.to_string(), step.to_string()];
                row.extend(ens.position(r, rec, p).iter().map(|x| x.to_string()));
                out.write_record(&row)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Mean-field paths, stored as replica 0 with one particle per path.
pub fn write_reference<W: Write>(w: W, law: &MeanFieldLaw) -> anyhow::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header(law.dim))?;
    let stride = law.paths * law.dim;
    for p in 0..law.paths {
        for (rec, step) in law.recorded_steps.iter().enumerate() {
            let x = &law.positions[rec * stride + p * law.dim..rec * stride + (p + 1) * law.dim];
            let mut row = vec!["0".to_string(), p.to_string(), step.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// A parsed store, indexed by step, then replica, then particle.
#[derive(Clone, Debug, Default)]
pub struct Store {
    pub dim: usize,
    steps: BTreeMap<usize, BTreeMap<usize, BTreeMap<usize, Vec<f64>>>>,
}

impl Store {
    pub fn read<R: Read>(r: R) -> anyhow::Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let head = rdr.headers()?.clone();
        let dim = head.len().saturating_sub(3);
        if dim == 0 || head.iter().collect::<Vec<_>>() != header(dim) {
            bail!("store header must be replica,particle,step,x1..xd, got {head:?}");
        }
        let mut store = Store { dim, steps: BTreeMap::new() };
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let int = |i: usize| -> anyhow::Result<usize> {
                rec[i].parse().with_context(|| format!("row {}: bad integer `{}`", line + 2, &rec[i]))
            };
            let (replica, particle, step) = (int(0)?, int(1)?, int(2)?);
            let coords = (3..3 + dim)
                .map(|i| rec[i].parse::<f64>().with_context(|| format!("row {}: bad number", line + 2)))
                .collect::<anyhow::Result<Vec<f64>>>()?;
            store.steps.entry(step).or_default().entry(replica).or_default().insert(particle, coords);
        }
        Ok(store)
    }

    pub fn steps(&self) -> Vec<usize> {
        self.steps.keys().copied().collect()
    }

    /// Particles per replica at `step`, the smallest over replicas.
    pub fn particles_at(&self, step: usize) -> anyhow::Result<usize> {
        let by_replica = self.steps.get(&step).with_context(|| format!("step {step} not in store"))?;
        Ok(by_replica.values().map(|ps| ps.len()).min().unwrap_or(0))
    }

    /// First `k` particles of every replica at `step`, one row per
    /// replica.
    pub fn marginal(&self, k: usize, step: usize) -> anyhow::Result<SampleMatrix> {
        let by_replica = self.steps.get(&step).with_context(|| format!("step {step} not in store"))?;
        let mut data = Vec::with_capacity(by_replica.len() * k * self.dim);
        for (r, particles) in by_replica {
            for p in 0..k {
                let x = particles.get(&p).with_context(|| format!("replica {r} lacks particle {p}"))?;
                data.extend_from_slice(x);
            }
        }
        Ok(SampleMatrix::new(by_replica.len(), k * self.dim, data)?)
    }

    /// Disjoint `k`-tuples of all stored points at `step`, in store
    /// order: a sample of the `k`-fold product law when the points are
    /// independent.
    pub fn product_sample(&self, k: usize, step: usize) -> anyhow::Result<SampleMatrix> {
        let by_replica = self.steps.get(&step).with_context(|| format!("step {step} not in store"))?;
        let flat: Vec<f64> = by_replica.values().flat_map(|ps| ps.values().flatten().copied()).collect();
        product_rows(&flat, self.dim, k)
    }
}

/// Groups `points` (`dim` values each) into disjoint rows of `k` points.
pub fn product_rows(points: &[f64], dim: usize, k: usize) -> anyhow::Result<SampleMatrix> {
    let rows = points.len() / (dim * k);
    if rows == 0 {
        bail!("not enough points for a {k}-fold product sample");
    }
    Ok(SampleMatrix::new(rows, k * dim, points[..rows * k * dim].to_vec())?)
}
