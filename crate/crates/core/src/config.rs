//! The JSON experiment configuration.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::drift::{Confinement, DriftSpec, Geometry, Interaction};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernels::Kernel;

pub const MAX_DIM: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    Torus { dim: usize },
    Euclidean { dim: usize },
}

impl Domain {
    pub fn dim(self) -> usize {
        match self {
            Domain::Torus { dim } | Domain::Euclidean { dim } => dim,
        }
    }

    pub fn geometry(self) -> Geometry {
        match self {
            Domain::Torus { .. } => Geometry::Torus,
            Domain::Euclidean { .. } => Geometry::Euclidean,
        }
    }

    pub fn is_torus(self) -> bool {
        matches!(self, Domain::Torus { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseKind {
    Brownian,
    Fbm { hurst: f64 },
}

impl NoiseKind {
    pub fn hurst(self) -> f64 {
        match self {
            NoiseKind::Brownian => 0.5,
            NoiseKind::Fbm { hurst } => hurst,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialLaw {
    /// Uniform on the torus.
    Uniform,
    /// `N(mean, sigma^2 I)`.
    Gaussian {
        sigma: f64,
        #[serde(default)]
        mean: f64,
    },
    /// Uniform on the centred ball.
    Ball { radius: f64 },
    /// Every particle starts at `x`.
    Point { x: Vec<f64> },
    /// Particle `i` starts at `positions[i % len]`.
    Fixed { positions: Vec<Vec<f64>> },
}

/// Time grid as written in a config: `dt` and `steps`, or a `horizon`
/// with one of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub t0: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub horizon: Option<f64>,
}

impl GridSpec {
    pub fn resolve(&self) -> Result<TimeGrid> {
        match (self.dt, self.steps, self.horizon) {
            (Some(dt), Some(steps), None) => TimeGrid::new(self.t0, dt, steps),
            (None, Some(steps), Some(h)) => TimeGrid::with_steps(self.t0, h, steps),
            (Some(dt), None, Some(h)) => TimeGrid::with_dt(self.t0, h, dt),
            (Some(dt), Some(steps), Some(h)) => {
                let g = TimeGrid::new(self.t0, dt, steps)?;
                if ((g.horizon() - h) / h.abs().max(1.0)).abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "grid horizon {h} disagrees with t0 + steps * dt = {}",
                        g.horizon()
                    )));
                }
                Ok(g)
            }
            _ => Err(Error::Config("grid needs two of dt, steps, horizon".into())),
        }
    }
}

impl From<TimeGrid> for GridSpec {
    fn from(g: TimeGrid) -> Self {
        Self {
            t0: g.t0(),
            dt: Some(g.dt()),
            steps: Some(g.steps()),
            horizon: None,
        }
    }
}

/// A built-in selected by name with a numeric parameter map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl NamedSpec {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for key in self.params.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "unknown parameter `{key}` for `{}` (expected one of {allowed:?})",
                    self.name
                )));
            }
        }
        Ok(())
    }

    fn get(&self, key: &str, default: Option<f64>) -> Result<f64> {
        match self.params.get(key).copied().or(default) {
            Some(v) if v.is_finite() => Ok(v),
            Some(v) => Err(Error::Config(format!("`{}.{key}` is not finite: {v}", self.name))),
            None => Err(Error::Config(format!("`{}` needs parameter `{key}`", self.name))),
        }
    }

    fn get_uint(&self, key: &str, default: u32) -> Result<u32> {
        let v = self.get(key, Some(default as f64))?;
        if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            return Err(Error::Config(format!("`{}.{key}` must be a non-negative integer", self.name)));
        }
        Ok(v as u32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub domain: Domain,
    pub n_particles: usize,
    pub grid: GridSpec,
    pub noise: NoiseKind,
    /// Noise amplitude; `0` switches the noise off.
    #[serde(default = "one")]
    pub sigma: f64,
    pub initial: InitialLaw,
    #[serde(default = "zero_spec")]
    pub confinement: NamedSpec,
    #[serde(default = "zero_spec")]
    pub interaction: NamedSpec,
    /// Kernel regularization radius; defaults to `sqrt(dt) / 10`.
    #[serde(default)]
    pub regularization_eps: Option<f64>,
    /// Overrides the growth constant certified by the built-ins.
    #[serde(default)]
    pub growth_constant: Option<f64>,
    pub seed: u64,
    #[serde(default = "one_usize")]
    pub replicas: usize,
    /// Record every `record_every` steps; defaults to recording only the
    /// first and last grid points.
    #[serde(default)]
    pub record_every: Option<usize>,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn zero_spec() -> NamedSpec {
    NamedSpec::new("zero")
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        self.grid.resolve()
    }

    pub fn eps(&self) -> Result<f64> {
        match self.regularization_eps {
            Some(e) => Ok(e),
            None => Ok(self.time_grid()?.dt().sqrt() / 10.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || d > MAX_DIM {
            return Err(Error::Config(format!("dimension {d} outside 1..={MAX_DIM}")));
        }
        if self.n_particles < 2 {
            return Err(Error::Config(format!("n_particles = {} < 2", self.n_particles)));
        }
        if self.replicas < 1 {
            return Err(Error::Config("replicas must be at least 1".into()));
        }
        if let NoiseKind::Fbm { hurst } = self.noise {
            if !(hurst > 0.0 && hurst < 1.0) {
                return Err(Error::Config(format!("Hurst index {hurst} outside (0, 1)")));
            }
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma = {} must be finite and >= 0", self.sigma)));
        }
        if self.record_every == Some(0) {
            return Err(Error::Config("record_every must be positive".into()));
        }
        if let Some(e) = self.regularization_eps {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(Error::Config(format!("regularization_eps = {e} must be >= 0")));
            }
        }
        self.time_grid().map_err(|e| Error::Config(e.to_string()))?;
        self.validate_initial()?;
        let drift = self.drift()?;
        if self.domain.is_torus() && !drift.state_dependent() {
            return Err(Error::Config(
                "path-averaged drifts are not defined on the torus".into(),
            ));
        }
        Ok(())
    }

    fn validate_initial(&self) -> Result<()> {
        let d = self.dim();
        match &self.initial {
            InitialLaw::Uniform if !self.domain.is_torus() => {
                Err(Error::Config("uniform initial law needs a torus domain".into()))
            }
            InitialLaw::Gaussian { sigma, mean } if !(*sigma >= 0.0 && mean.is_finite()) => {
                Err(Error::Config("gaussian initial law needs sigma >= 0".into()))
            }
            InitialLaw::Ball { radius } if !(*radius > 0.0) => {
                Err(Error::Config("ball initial law needs radius > 0".into()))
            }
            InitialLaw::Point { x } if x.len() != d => Err(Error::Config(format!(
                "initial point has {} coordinates, domain has {d}",
                x.len()
            ))),
            InitialLaw::Fixed { positions } if positions.is_empty() || positions.iter().any(|p| p.len() != d) => {
                Err(Error::Config(format!("fixed initial positions must be nonempty {d}-vectors")))
            }
            _ => Ok(()),
        }
    }

    pub fn confinement(&self) -> Result<Confinement> {
        let s = &self.confinement;
        Ok(match s.name.as_str() {
            "zero" => {
                s.check_keys(&[])?;
                Confinement::Zero
            }
            "linear" => {
                s.check_keys(&["coef"])?;
                Confinement::Linear { coef: s.get("coef", None)? }
            }
            "constant" => {
                s.check_keys(&["value"])?;
                Confinement::Constant { value: s.get("value", None)? }
            }
            "path_average" => {
                s.check_keys(&["coef"])?;
                Confinement::PathAverage { coef: s.get("coef", None)? }
            }
            other => return Err(Error::Config(format!("unknown confinement `{other}`"))),
        })
    }

    pub fn interaction(&self) -> Result<Interaction> {
        let s = &self.interaction;
        let d = self.dim();
        let needs_plane = |name: &str| {
            if d == 2 {
                Ok(())
            } else {
                Err(Error::Config(format!("`{name}` needs dimension 2, got {d}")))
            }
        };
        Ok(match s.name.as_str() {
            "zero" => {
                s.check_keys(&[])?;
                Interaction::Zero
            }
            "linear" => {
                s.check_keys(&["self_coef", "other_coef"])?;
                Interaction::Linear {
                    self_coef: s.get("self_coef", Some(0.0))?,
                    other_coef: s.get("other_coef", Some(0.0))?,
                }
            }
            "path_average" => {
                s.check_keys(&["coef"])?;
                Interaction::PathAverage { coef: s.get("coef", None)? }
            }
            "sin_gate" => {
                s.check_keys(&[])?;
                if d != 1 {
                    return Err(Error::Config("`sin_gate` is a one-dimensional drift".into()));
                }
                Interaction::SinGate
            }
            "quadratic" => {
                s.check_keys(&[])?;
                Interaction::Quadratic
            }
            "smooth_divfree" => {
                s.check_keys(&["frequency", "strength"])?;
                needs_plane("smooth_divfree")?;
                let frequency = s.get_uint("frequency", 1)?;
                if frequency < 1 {
                    return Err(Error::Config("frequency must be at least 1".into()));
                }
                Interaction::Kernel(Kernel::SmoothDivFree {
                    frequency,
                    strength: s.get("strength", Some(1.0))?,
                })
            }
            "biot_savart_free" => {
                s.check_keys(&[])?;
                needs_plane("biot_savart_free")?;
                Interaction::Kernel(Kernel::BiotSavartFree { eps: self.eps()? })
            }
            "biot_savart_periodic" => {
                s.check_keys(&["radius", "background"])?;
                needs_plane("biot_savart_periodic")?;
                if !self.domain.is_torus() {
                    return Err(Error::Config("`biot_savart_periodic` needs a torus domain".into()));
                }
                let radius = s.get_uint("radius", 8)?;
                if radius < 1 {
                    return Err(Error::Config("truncation radius must be at least 1".into()));
                }
                Interaction::Kernel(Kernel::BiotSavartPeriodic {
                    radius,
                    eps: self.eps()?,
                    background: s.get("background", Some(1.0))? != 0.0,
                })
            }
            other => return Err(Error::Config(format!("unknown interaction `{other}`"))),
        })
    }

    pub fn drift(&self) -> Result<DriftSpec> {
        let spec = DriftSpec::new(self.confinement()?, self.interaction()?, self.dim());
        Ok(match self.growth_constant {
            Some(k) => spec.with_growth_constant(k),
            None => spec,
        })
    }

    /// Lattice truncation radius, if the interaction has one.
    pub fn truncation_radius(&self) -> Option<u32> {
        match self.interaction() {
            Ok(Interaction::Kernel(Kernel::BiotSavartPeriodic { radius, .. })) => Some(radius),
            _ => None,
        }
    }
}
