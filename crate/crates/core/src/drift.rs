//! Drift functionals `b0(t, x)` and interactions `b(t, x, y)` on paths.
//!
//! Path-dependent drifts see a path only through its running summary up
//! to the current grid time (current value, running time average and
//! running sup norm), which makes every built-in non-anticipative.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::min_image;
use crate::grid::TimeGrid;
use crate::kernels::Kernel;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Geometry {
    Torus,
    Euclidean,
}

impl Geometry {
    #[inline]
    pub fn displacement(self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match self {
            Geometry::Torus => {
                for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
                    *o = min_image(*a, *b);
                }
            }
            Geometry::Euclidean => {
                for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
                    *o = a - b;
                }
            }
        }
    }
}

/// Summary of a path restricted to `[0, t]`.
#[derive(Clone, Copy, Debug)]
pub struct ParticleState<'a> {
    pub pos: &'a [f64],
    pub avg: &'a [f64],
    pub sup: f64,
}

/// Running path summaries for a population of particles.
#[derive(Clone, Debug)]
pub struct StateArrays {
    pub dim: usize,
    pub pos: Vec<f64>,
    pub avg: Vec<f64>,
    pub sup: Vec<f64>,
    /// Number of grid points folded into `avg`.
    pub samples: usize,
}

impl StateArrays {
    pub fn from_initial(dim: usize, pos: Vec<f64>) -> Self {
        let sup = pos.chunks_exact(dim).map(norm).collect();
        Self {
            dim,
            avg: pos.clone(),
            pos,
            sup,
            samples: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.sup.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sup.is_empty()
    }

    #[inline]
    pub fn state(&self, i: usize) -> ParticleState<'_> {
        let r = i * self.dim..(i + 1) * self.dim;
        ParticleState {
            pos: &self.pos[r.clone()],
            avg: &self.avg[r],
            sup: self.sup[i],
        }
    }

    /// The first `count` particles.
    pub fn head(&self, count: usize) -> Self {
        let count = count.min(self.len());
        Self {
            dim: self.dim,
            pos: self.pos[..count * self.dim].to_vec(),
            avg: self.avg[..count * self.dim].to_vec(),
            sup: self.sup[..count].to_vec(),
            samples: self.samples,
        }
    }

    /// Folds the current `pos` into the running summaries.
    pub fn absorb_current(&mut self) {
        let m = self.samples as f64;
        for (a, p) in self.avg.iter_mut().zip(&self.pos) {
            *a = (*a * m + p) / (m + 1.0);
        }
        for (s, p) in self.sup.iter_mut().zip(self.pos.chunks_exact(self.dim)) {
            *s = s.max(norm(p));
        }
        self.samples += 1;
    }
}

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub enum Confinement {
    Zero,
    /// `b0 = coef * x_t`
    Linear { coef: f64 },
    /// `b0 = value` in every coordinate
    Constant { value: f64 },
    /// `b0 = coef * (time average of x on [0, t])`
    PathAverage { coef: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Interaction {
    Zero,
    /// `b = self_coef * x_t + other_coef * y_t`
    Linear { self_coef: f64, other_coef: f64 },
    /// `b = coef * (avg y - avg x)` over `[0, t]`
    PathAverage { coef: f64 },
    /// `b = h(x_t - y_t)`, `h(u) = u * 1{sin u > 0}` (one dimension)
    SinGate,
    /// `b = x_t^2` componentwise; not of linear growth
    Quadratic,
    /// `b = K(x_t - y_t)` with the geometry's displacement
    Kernel(Kernel),
}

/// Precomputed population sums that turn `sum_j b(x, y_j)` into O(1) work
/// for interactions that are linear in features of `y`.
#[derive(Clone, Debug, PartialEq)]
pub enum Aggregate {
    Nothing,
    Sums {
        count: usize,
        pos: Vec<f64>,
        avg: Vec<f64>,
    },
    Modes {
        count: usize,
        omega: f64,
        // sums of sin/cos of omega * y_1 and omega * y_2
        s1: f64,
        c1: f64,
        s2: f64,
        c2: f64,
    },
    Pairwise {
        count: usize,
    },
}

impl Aggregate {
    pub fn count(&self) -> usize {
        match *self {
            Aggregate::Nothing => 0,
            Aggregate::Sums { count, .. }
            | Aggregate::Modes { count, .. }
            | Aggregate::Pairwise { count } => count,
        }
    }
}

impl Confinement {
    #[inline]
    pub fn eval(&self, _t: f64, x: &ParticleState<'_>, out: &mut [f64]) {
        match *self {
            Confinement::Zero => out.fill(0.0),
            Confinement::Linear { coef } => {
                for (o, p) in out.iter_mut().zip(x.pos) {
                    *o = coef * p;
                }
            }
            Confinement::Constant { value } => out.fill(value),
            Confinement::PathAverage { coef } => {
                for (o, a) in out.iter_mut().zip(x.avg) {
                    *o = coef * a;
                }
            }
        }
    }

    /// `(constant, x)` coefficients of the linear-growth bound.
    fn growth(&self, dim: usize) -> (f64, f64) {
        match *self {
            Confinement::Zero => (0.0, 0.0),
            Confinement::Linear { coef } | Confinement::PathAverage { coef } => (0.0, coef.abs()),
            Confinement::Constant { value } => (value.abs() * (dim as f64).sqrt(), 0.0),
        }
    }

    fn path_dependent(&self) -> bool {
        matches!(self, Confinement::PathAverage { .. })
    }
}

impl Interaction {
    pub fn eval(
        &self,
        _t: f64,
        geom: Geometry,
        x: &ParticleState<'_>,
        y: &ParticleState<'_>,
        out: &mut [f64],
    ) -> Result<()> {
        match self {
            Interaction::Zero => out.fill(0.0),
            Interaction::Linear { self_coef, other_coef } => {
                for ((o, a), b) in out.iter_mut().zip(x.pos).zip(y.pos) {
                    *o = self_coef * a + other_coef * b;
                }
            }
            Interaction::PathAverage { coef } => {
                for ((o, a), b) in out.iter_mut().zip(x.avg).zip(y.avg) {
                    *o = coef * (b - a);
                }
            }
            Interaction::SinGate => {
                geom.displacement(x.pos, y.pos, out);
                for o in out.iter_mut() {
                    if o.sin() <= 0.0 {
                        *o = 0.0;
                    }
                }
            }
            Interaction::Quadratic => {
                for (o, a) in out.iter_mut().zip(x.pos) {
                    *o = a * a;
                }
            }
            Interaction::Kernel(k) => {
                if x.pos.len() != 2 {
                    return Err(Error::DimensionMismatch {
                        expected: 2,
                        found: x.pos.len(),
                    });
                }
                let mut d = [0.0; 2];
                geom.displacement(x.pos, y.pos, &mut d);
                let v = k.eval(&d)?;
                out.copy_from_slice(&v);
            }
        }
        Ok(())
    }

    /// `(constant, x, y)` coefficients of the linear-growth bound.
    fn growth(&self) -> (f64, f64, f64) {
        match self {
            Interaction::Zero => (0.0, 0.0, 0.0),
            Interaction::Linear { self_coef, other_coef } => (0.0, self_coef.abs(), other_coef.abs()),
            Interaction::PathAverage { coef } => (0.0, coef.abs(), coef.abs()),
            Interaction::SinGate => (0.0, 1.0, 1.0),
            // declared, not true: validation is expected to reject it
            Interaction::Quadratic => (0.0, 1.0, 0.0),
            Interaction::Kernel(k) => (k.sup_bound(), 0.0, 0.0),
        }
    }

    fn path_dependent(&self) -> bool {
        matches!(self, Interaction::PathAverage { .. })
    }

    /// Builds the population sums for `states`.
    pub fn aggregate(&self, states: &StateArrays) -> Aggregate {
        let count = states.len();
        match self {
            Interaction::Zero => Aggregate::Nothing,
            Interaction::Linear { .. } | Interaction::PathAverage { .. } => {
                let mut pos = vec![0.0; states.dim];
                let mut avg = vec![0.0; states.dim];
                for i in 0..count {
                    let s = states.state(i);
                    pos.iter_mut().zip(s.pos).for_each(|(a, b)| *a += b);
                    avg.iter_mut().zip(s.avg).for_each(|(a, b)| *a += b);
                }
                Aggregate::Sums { count, pos, avg }
            }
            Interaction::Kernel(Kernel::SmoothDivFree { frequency, .. }) if states.dim == 2 => {
                let omega = 2.0 * PI * *frequency as f64;
                let (mut s1, mut c1, mut s2, mut c2) = (0.0, 0.0, 0.0, 0.0);
                for p in states.pos.chunks_exact(2) {
                    let (a, b) = (omega * p[0]).sin_cos();
                    let (c, d) = (omega * p[1]).sin_cos();
                    s1 += a;
                    c1 += b;
                    s2 += c;
                    c2 += d;
                }
                Aggregate::Modes { count, omega, s1, c1, s2, c2 }
            }
            _ => Aggregate::Pairwise { count },
        }
    }

    /// `sum_{j != i} b(t, x_i, x_j)` over the population `states`, which
    /// must be the population `agg` was built from.
    pub fn sum_excluding(
        &self,
        t: f64,
        geom: Geometry,
        i: usize,
        states: &StateArrays,
        agg: &Aggregate,
        out: &mut [f64],
    ) -> Result<()> {
        let x = states.state(i);
        match (self, agg) {
            (Interaction::Zero, _) => out.fill(0.0),
            (Interaction::Linear { self_coef, other_coef }, Aggregate::Sums { count, pos, .. }) => {
                let others = (*count - 1) as f64;
                for ((o, xi), total) in out.iter_mut().zip(x.pos).zip(pos) {
                    *o = self_coef * others * xi + other_coef * (total - xi);
                }
            }
            (Interaction::PathAverage { coef }, Aggregate::Sums { count, avg, .. }) => {
                let others = (*count - 1) as f64;
                for ((o, xi), total) in out.iter_mut().zip(x.avg).zip(avg) {
                    *o = coef * ((total - xi) - others * xi);
                }
            }
            (
                Interaction::Kernel(Kernel::SmoothDivFree { strength, .. }),
                Aggregate::Modes { omega, s1, c1, s2, c2, .. },
            ) => {
                let (a1, b1) = (omega * x.pos[0]).sin_cos();
                let (a2, b2) = (omega * x.pos[1]).sin_cos();
                // sin(w(x - y)) = sin(wx)cos(wy) - cos(wx)sin(wy), self term removed
                out[0] = strength * (a2 * (c2 - b2) - b2 * (s2 - a2));
                out[1] = strength * (a1 * (c1 - b1) - b1 * (s1 - a1));
            }
            _ => {
                out.fill(0.0);
                let mut tmp = [0.0; 8];
                let tmp = &mut tmp[..states.dim];
                for j in 0..states.len() {
                    if j == i {
                        continue;
                    }
                    self.eval(t, geom, &x, &states.state(j), tmp)?;
                    out.iter_mut().zip(tmp.iter()).for_each(|(o, v)| *o += v);
                }
            }
        }
        Ok(())
    }

    /// `(1/m) sum_l b(t, x, y_l)` against a reference population.
    pub fn mean_against(
        &self,
        t: f64,
        geom: Geometry,
        x: &ParticleState<'_>,
        sample: &StateArrays,
        agg: &Aggregate,
        out: &mut [f64],
    ) -> Result<()> {
        match (self, agg) {
            (Interaction::Zero, _) => out.fill(0.0),
            (Interaction::Linear { self_coef, other_coef }, Aggregate::Sums { count, pos, .. }) => {
                let m = *count as f64;
                for ((o, xi), total) in out.iter_mut().zip(x.pos).zip(pos) {
                    *o = self_coef * xi + other_coef * total / m;
                }
            }
            (Interaction::PathAverage { coef }, Aggregate::Sums { count, avg, .. }) => {
                let m = *count as f64;
                for ((o, xi), total) in out.iter_mut().zip(x.avg).zip(avg) {
                    *o = coef * (total / m - xi);
                }
            }
            (
                Interaction::Kernel(Kernel::SmoothDivFree { strength, .. }),
                Aggregate::Modes { count, omega, s1, c1, s2, c2 },
            ) => {
                let m = *count as f64;
                let (a1, b1) = (omega * x.pos[0]).sin_cos();
                let (a2, b2) = (omega * x.pos[1]).sin_cos();
                out[0] = strength * (a2 * c2 - b2 * s2) / m;
                out[1] = strength * (a1 * c1 - b1 * s1) / m;
            }
            _ => {
                out.fill(0.0);
                if sample.is_empty() {
                    return Err(Error::InsufficientData("empty reference sample".into()));
                }
                let mut tmp = [0.0; 8];
                let tmp = &mut tmp[..sample.dim];
                for l in 0..sample.len() {
                    self.eval(t, geom, x, &sample.state(l), tmp)?;
                    out.iter_mut().zip(tmp.iter()).for_each(|(o, v)| *o += v);
                }
                let m = sample.len() as f64;
                out.iter_mut().for_each(|o| *o /= m);
            }
        }
        Ok(())
    }
}

/// A drift pair `(b0, b)` with its declared linear-growth constant.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftSpec {
    pub confinement: Confinement,
    pub interaction: Interaction,
    pub growth_constant: f64,
}

impl DriftSpec {
    /// Uses the smallest growth constant the built-ins can certify.
    pub fn new(confinement: Confinement, interaction: Interaction, dim: usize) -> Self {
        let (c0, x0) = confinement.growth(dim);
        let (c1, x1, y1) = interaction.growth();
        let growth_constant = (c0 + c1).max(x0 + x1).max(y1);
        Self {
            confinement,
            interaction,
            growth_constant,
        }
    }

    pub fn with_growth_constant(mut self, k: f64) -> Self {
        self.growth_constant = k;
        self
    }

    pub fn state_dependent(&self) -> bool {
        !(self.confinement.path_dependent() || self.interaction.path_dependent())
    }

    /// Evaluates `(b0(t, x), b(t, x, y))` at grid index `step`, reading
    /// only the prefix `0..=step` of each path.
    pub fn eval_on_paths(
        &self,
        grid: &TimeGrid,
        geom: Geometry,
        step: usize,
        x: &Path,
        y: &Path,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.dim != y.dim {
            return Err(Error::DimensionMismatch {
                expected: x.dim,
                found: y.dim,
            });
        }
        let sx = x.summary(step)?;
        let sy = y.summary(step)?;
        let t = grid.time(step);
        let mut b0 = vec![0.0; x.dim];
        let mut b = vec![0.0; x.dim];
        self.confinement.eval(t, &sx.view(), &mut b0);
        self.interaction.eval(t, geom, &sx.view(), &sy.view(), &mut b)?;
        Ok((b0, b))
    }
}

/// A discretized path, `(steps + 1) x dim`, row major.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pub dim: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct PathSummary {
    pub pos: Vec<f64>,
    pub avg: Vec<f64>,
    pub sup: f64,
}

impl PathSummary {
    pub fn view(&self) -> ParticleState<'_> {
        ParticleState {
            pos: &self.pos,
            avg: &self.avg,
            sup: self.sup,
        }
    }
}

impl Path {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.is_empty() || !values.len().is_multiple_of(dim) {
            return Err(Error::Domain(format!(
                "path of {} values is not a whole number of {dim}-vectors",
                values.len()
            )));
        }
        Ok(Self { dim, values })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, step: usize) -> &[f64] {
        &self.values[step * self.dim..(step + 1) * self.dim]
    }

    /// Summary of the prefix `0..=step`.
    pub fn summary(&self, step: usize) -> Result<PathSummary> {
        if step >= self.len() {
            return Err(Error::Domain(format!("step {step} beyond path of length {}", self.len())));
        }
        let mut avg = vec![0.0; self.dim];
        let mut sup: f64 = 0.0;
        for s in 0..=step {
            let p = self.point(s);
            avg.iter_mut().zip(p).for_each(|(a, v)| *a += v);
            sup = sup.max(norm(p));
        }
        let m = (step + 1) as f64;
        avg.iter_mut().for_each(|a| *a /= m);
        Ok(PathSummary {
            pos: self.point(step).to_vec(),
            avg,
            sup,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthReport {
    pub max_ratio: f64,
    pub growth_constant: f64,
    pub pass: bool,
    pub evaluations: usize,
}

/// Empirical check of `|b0(t,x)| + |b(t,x,y)| <= K (1 + |x|_t + |y|_t)`
/// over all ordered pairs of sample paths at the given grid indices.
pub fn validate_linear_growth(
    drift: &DriftSpec,
    grid: &TimeGrid,
    geom: Geometry,
    paths: &[Path],
    steps: &[usize],
) -> Result<GrowthReport> {
    if paths.is_empty() || steps.is_empty() {
        return Err(Error::InsufficientData("growth validation needs paths and times".into()));
    }
    let mut max_ratio: f64 = 0.0;
    let mut evaluations = 0;
    for &step in steps {
        let summaries = paths
            .iter()
            .map(|p| p.summary(step))
            .collect::<Result<Vec<_>>>()?;
        let t = grid.time(step);
        let dim = paths[0].dim;
        let mut b0 = vec![0.0; dim];
        let mut b = vec![0.0; dim];
        for sx in &summaries {
            drift.confinement.eval(t, &sx.view(), &mut b0);
            for sy in &summaries {
                drift.interaction.eval(t, geom, &sx.view(), &sy.view(), &mut b)?;
                let ratio = (norm(&b0) + norm(&b)) / (1.0 + sx.sup + sy.sup);
                max_ratio = max_ratio.max(ratio);
                evaluations += 1;
            }
        }
    }
    Ok(GrowthReport {
        max_ratio,
        growth_constant: drift.growth_constant,
        pass: max_ratio <= drift.growth_constant + 1e-9,
        evaluations,
    })
}
