//! Brownian and fractional Brownian noise on a time grid, and a discrete
//! inverse of the Volterra operator linking fBm to its driving Brownian
//! motion.

use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use statrs::function::beta::beta;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::{stream, RngStream};

fn check_hurst(h: f64) -> Result<()> {
    if h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("Hurst index {h} outside (0, 1)")))
    }
}

/// `R_H(t, s) = (|t|^{2H} + |s|^{2H} - |t - s|^{2H}) / 2`
pub fn fbm_covariance(t: f64, s: f64, h: f64) -> Result<f64> {
    check_hurst(h)?;
    if t < 0.0 || s < 0.0 {
        return Err(Error::Domain(format!("negative time in covariance ({t}, {s})")));
    }
    let p = 2.0 * h;
    Ok(0.5 * (t.powf(p) + s.powf(p) - (t - s).abs().powf(p)))
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(k: usize, h: f64) -> f64 {
    let p = 2.0 * h;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(p) - 2.0 * k.powf(p) + (k - 1.0).abs().powf(p))
}

/// One noise path per particle: `(steps + 1) x dim` values, row major,
/// starting at zero.
#[derive(Clone, Debug)]
pub struct NoisePath {
    pub grid: TimeGrid,
    pub dim: usize,
    pub hurst: f64,
    pub values: Vec<f64>,
    /// Brownian path driving `values` in the causal representation, when
    /// the generator can provide one.
    pub underlying_w: Option<Vec<f64>>,
    pub used_fallback: bool,
}

impl NoisePath {
    pub fn point(&self, step: usize) -> &[f64] {
        &self.values[step * self.dim..(step + 1) * self.dim]
    }

    /// Increment over step `m`, `dim` values.
    pub fn increment(&self, m: usize, out: &mut [f64]) {
        let (a, b) = (self.point(m), self.point(m + 1));
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o = y - x;
        }
    }
}

#[derive(Clone)]
enum Synthesis {
    White,
    Circulant {
        sqrt_eig: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
    /// Lower Cholesky factor of the increment covariance, row major.
    Cholesky { lower: Vec<f64> },
}

/// Exact sampler of fractional Gaussian noise increments on a fixed grid.
#[derive(Clone)]
pub struct FbmGenerator {
    hurst: f64,
    steps: usize,
    dt: f64,
    synthesis: Synthesis,
    used_fallback: bool,
}

impl std::fmt::Debug for FbmGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let method = match self.synthesis {
            Synthesis::White => "white",
            Synthesis::Circulant { .. } => "circulant",
            Synthesis::Cholesky { .. } => "cholesky",
        };
        f.debug_struct("FbmGenerator")
            .field("hurst", &self.hurst)
            .field("steps", &self.steps)
            .field("method", &method)
            .field("used_fallback", &self.used_fallback)
            .finish()
    }
}

impl FbmGenerator {
    /// Circulant embedding, or exact white noise at `H = 1/2`. Falls back
    /// to Cholesky if the embedding has a negative eigenvalue.
    pub fn new(grid: &TimeGrid, hurst: f64) -> Result<Self> {
        check_hurst(hurst)?;
        let steps = grid.steps();
        let base = Self {
            hurst,
            steps,
            dt: grid.dt(),
            synthesis: Synthesis::White,
            used_fallback: false,
        };
        if hurst == 0.5 {
            return Ok(base);
        }
        let m = 2 * steps;
        let mut c: Vec<Complex<f64>> = (0..m)
            .map(|j| {
                let lag = if j <= steps { j } else { m - j };
                Complex::new(fgn_autocovariance(lag, hurst), 0.0)
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(m);
        fft.process(&mut c);
        let largest = c.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
        if c.iter().any(|z| z.re < -1e-10 * largest) {
            log::warn!("circulant embedding not nonnegative for H = {hurst}; using Cholesky");
            let mut g = Self::cholesky(grid, hurst)?;
            g.used_fallback = true;
            return Ok(g);
        }
        let sqrt_eig = c.iter().map(|z| (z.re.max(0.0) / m as f64).sqrt()).collect();
        Ok(Self {
            synthesis: Synthesis::Circulant { sqrt_eig, fft },
            ..base
        })
    }

    /// Dense Cholesky synthesis; retains the driving white noise.
    pub fn cholesky(grid: &TimeGrid, hurst: f64) -> Result<Self> {
        check_hurst(hurst)?;
        let n = grid.steps();
        let cov = DMatrix::from_fn(n, n, |i, j| fgn_autocovariance(i.abs_diff(j), hurst));
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::Domain(format!("fGn covariance not positive definite (H = {hurst})")))?;
        let l = chol.l();
        let mut lower = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                lower[i * n + j] = l[(i, j)];
            }
        }
        Ok(Self {
            hurst,
            steps: n,
            dt: grid.dt(),
            synthesis: Synthesis::Cholesky { lower },
            used_fallback: false,
        })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn used_fallback(&self) -> bool {
        self.used_fallback
    }

    /// Whether `increments` can report the driving white noise.
    pub fn retains_underlying(&self) -> bool {
        !matches!(self.synthesis, Synthesis::Circulant { .. })
    }

    /// Fills `out` (length `steps`) with fGn increments of one coordinate.
    /// If `xi` is given and the method retains it, it receives the
    /// standard normals `xi` with `out = L xi` for lower-triangular `L`.
    pub fn increments(&self, rng: &mut RngStream, out: &mut [f64], xi: Option<&mut [f64]>) -> Result<()> {
        let n = self.steps;
        if out.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: out.len() });
        }
        let scale = self.dt.powf(self.hurst);
        match &self.synthesis {
            Synthesis::White => {
                rng.fill_normal(out);
                if let Some(xi) = xi {
                    xi.copy_from_slice(out);
                }
                out.iter_mut().for_each(|v| *v *= scale);
            }
            Synthesis::Circulant { sqrt_eig, fft } => {
                if xi.is_some() {
                    return Err(Error::Domain(
                        "circulant synthesis does not retain a driving noise".into(),
                    ));
                }
                let mut buf: Vec<Complex<f64>> = sqrt_eig
                    .iter()
                    .map(|s| {
                        let re = rng.normal();
                        let im = rng.normal();
                        Complex::new(s * re, s * im)
                    })
                    .collect();
                fft.process(&mut buf);
                for (o, z) in out.iter_mut().zip(&buf) {
                    *o = scale * z.re;
                }
            }
            Synthesis::Cholesky { lower } => {
                let mut z = vec![0.0; n];
                rng.fill_normal(&mut z);
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &lower[i * n..i * n + i + 1];
                    *o = scale * row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
                }
                if let Some(xi) = xi {
                    xi.copy_from_slice(&z);
                }
            }
        }
        Ok(())
    }

    /// Path for particle `(replica, particle)` of a `dim`-dimensional
    /// system; coordinate `c` draws from its own stream.
    pub fn path(&self, grid: &TimeGrid, dim: usize, seed: u64, replica: u64, particle: u64) -> Result<NoisePath> {
        if grid.steps() != self.steps {
            return Err(Error::DimensionMismatch { expected: self.steps, found: grid.steps() });
        }
        let n = self.steps;
        let keep_w = self.retains_underlying();
        let mut values = vec![0.0; (n + 1) * dim];
        let mut w = keep_w.then(|| vec![0.0; (n + 1) * dim]);
        let mut incr = vec![0.0; n];
        let mut xi = vec![0.0; n];
        for c in 0..dim {
            let mut rng = RngStream::new(seed, replica, particle, stream::NOISE + c as u64);
            self.increments(&mut rng, &mut incr, keep_w.then_some(&mut xi[..]))?;
            let mut acc = 0.0;
            for (m, v) in incr.iter().enumerate() {
                acc += v;
                values[(m + 1) * dim + c] = acc;
            }
            if let Some(w) = w.as_mut() {
                let sd = self.dt.sqrt();
                let mut acc = 0.0;
                for (m, z) in xi.iter().enumerate() {
                    acc += sd * z;
                    w[(m + 1) * dim + c] = acc;
                }
            }
        }
        Ok(NoisePath {
            grid: *grid,
            dim,
            hurst: self.hurst,
            values,
            underlying_w: w,
            used_fallback: self.used_fallback,
        })
    }
}

/// Samples a `dim`-dimensional fBm path keyed by the stream's
/// `(seed, replica, particle)`.
pub fn sample_fbm(grid: &TimeGrid, hurst: f64, dim: usize, rng: &RngStream) -> Result<NoisePath> {
    if dim == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    FbmGenerator::new(grid, hurst)?.path(grid, dim, rng.seed(), rng.replica(), rng.particle())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VolterraMode {
    /// `H = 1/2`: the inverse is the derivative.
    ExactHalf,
    /// Grünwald–Letnikov fractional differencing.
    FractionalDifference,
}

/// Discrete `K_H^{-1}` acting on grid paths `h` with `h(0) = 0`.
///
/// The input is differenced into a piecewise-constant rate `u`, weighted
/// by `s^{1/2-H}`, fractionally differentiated (or integrated, for
/// `H < 1/2`) with Grünwald–Letnikov weights and reweighted by
/// `s^{H-1/2}`, all at cell midpoints. Output `m` is the value on
/// `[t_m, t_{m+1})`. The scheme is first order in `dt` away from `s = 0`.
#[derive(Clone, Debug)]
pub struct VolterraTransform {
    hurst: f64,
    grid: TimeGrid,
    mode: VolterraMode,
    weights: Vec<f64>,
    norm: f64,
}

impl VolterraTransform {
    pub fn new(grid: &TimeGrid, hurst: f64) -> Result<Self> {
        check_hurst(hurst)?;
        let mode = if hurst == 0.5 {
            VolterraMode::ExactHalf
        } else {
            VolterraMode::FractionalDifference
        };
        let alpha = hurst - 0.5;
        let mut weights = Vec::with_capacity(grid.steps());
        let mut w = 1.0;
        for j in 0..grid.steps() {
            if j > 0 {
                w *= 1.0 - (alpha + 1.0) / j as f64;
            }
            weights.push(w);
        }
        Ok(Self {
            hurst,
            grid: *grid,
            mode,
            weights,
            norm: volterra_norm(hurst),
        })
    }

    pub fn mode(&self) -> VolterraMode {
        self.mode
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    /// Applies the inverse to one scalar path `h` of length `steps + 1`.
    pub fn apply(&self, h: &[f64]) -> Result<Vec<f64>> {
        let n = self.grid.steps();
        if h.len() != n + 1 {
            return Err(Error::DimensionMismatch { expected: n + 1, found: h.len() });
        }
        if h[0].abs() > 1e-12 {
            return Err(Error::Domain(format!("path must start at 0, got {}", h[0])));
        }
        let dt = self.grid.dt();
        let u: Vec<f64> = h.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
        if self.mode == VolterraMode::ExactHalf {
            return Ok(u);
        }
        let alpha = self.hurst - 0.5;
        let mid = |i: usize| (i as f64 + 0.5) * dt;
        let f: Vec<f64> = u
            .iter()
            .enumerate()
            .map(|(i, v)| mid(i).powf(-alpha) * v)
            .collect();
        let scale = dt.powf(-alpha) / self.norm;
        Ok((0..n)
            .map(|m| {
                let s: f64 = self.weights[..=m]
                    .iter()
                    .zip(f[..=m].iter().rev())
                    .map(|(w, v)| w * v)
                    .sum();
                mid(m).powf(alpha) * scale * s
            })
            .collect())
    }

    /// Relative error of the discrete inverse on the covariance function
    /// `R_H(., a)`, whose image has squared `L^2` norm `a^{2H}`. Serves as
    /// a discretization-quality flag.
    pub fn calibration_error(&self, a: f64) -> Result<f64> {
        let h: Vec<f64> = (0..=self.grid.steps())
            .map(|m| fbm_covariance(self.grid.time(m) - self.grid.t0(), a, self.hurst))
            .collect::<Result<_>>()?;
        let g = self.apply(&h)?;
        let energy: f64 = g.iter().map(|v| v * v).sum::<f64>() * self.grid.dt();
        let target = a.powf(2.0 * self.hurst);
        Ok((energy - target).abs() / target)
    }

    /// Exact `K_H^{-1}` of `h(s) = s` is `c * s^{1/2-H}`; returns `c`.
    pub fn unit_rate_constant(hurst: f64) -> f64 {
        gamma(1.5 - hurst) / gamma(2.0 - 2.0 * hurst) / volterra_norm(hurst)
    }
}

fn volterra_norm(h: f64) -> f64 {
    if h == 0.5 {
        1.0
    } else if h > 0.5 {
        let c = (h * (2.0 * h - 1.0) / beta(2.0 - 2.0 * h, h - 0.5)).sqrt();
        c * gamma(h - 0.5)
    } else {
        let c = (2.0 * h / ((1.0 - 2.0 * h) * beta(1.0 - 2.0 * h, h + 0.5))).sqrt();
        c * gamma(h + 0.5)
    }
}

/// `K_H^{-1} h` on `grid` for a scalar path `h`.
pub fn volterra_inverse_apply(h: &[f64], hurst: f64, grid: &TimeGrid) -> Result<Vec<f64>> {
    VolterraTransform::new(grid, hurst)?.apply(h)
}
