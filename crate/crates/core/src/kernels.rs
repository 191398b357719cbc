//! Interaction kernels on the plane and the flat 2-torus.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::wrap_coord;

/// Free-space Biot-Savart kernel `x^perp / (2 pi |x|^2)`.
///
/// Inside the closed `eps`-ball the value is frozen at the eps-sphere point
/// in the same direction (and `0` at the origin). With `eps = 0` the origin
/// is a singularity error.
pub fn biot_savart_free(x: [f64; 2], eps: f64) -> Result<[f64; 2]> {
    let r2 = x[0] * x[0] + x[1] * x[1];
    if r2 > eps * eps {
        return Ok(free_term(x, r2));
    }
    regularized(x, r2, eps, |p| {
        let r2 = p[0] * p[0] + p[1] * p[1];
        free_term(p, r2)
    })
}

#[inline]
fn free_term(x: [f64; 2], r2: f64) -> [f64; 2] {
    let s = 1.0 / (2.0 * PI * r2);
    [x[1] * s, -x[0] * s]
}

fn regularized(x: [f64; 2], r2: f64, eps: f64, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<[f64; 2]> {
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::Singularity {
            norm: r2.sqrt(),
            eps: eps.max(0.0),
        });
    }
    if r2 == 0.0 {
        return Ok([0.0, 0.0]);
    }
    let scale = eps / r2.sqrt();
    Ok(f([x[0] * scale, x[1] * scale]))
}

/// Sum of `f(x - k) + f(x + k)` over the half shell `|k|_inf = s`.
#[inline]
fn shell_pairs(x: [f64; 2], s: i32, acc: &mut [f64; 2]) {
    let mut add = |k1: i32, k2: i32| {
        let (k1, k2) = (k1 as f64, k2 as f64);
        let m = [x[0] - k1, x[1] - k2];
        let p = [x[0] + k1, x[1] + k2];
        let a = free_term(m, m[0] * m[0] + m[1] * m[1]);
        let b = free_term(p, p[0] * p[0] + p[1] * p[1]);
        acc[0] += a[0] + b[0];
        acc[1] += a[1] + b[1];
    };
    // half shell: k1 > 0, or k1 == 0 and k2 > 0
    for k2 in -s..=s {
        add(s, k2);
    }
    for k1 in 1..s {
        add(k1, s);
        add(k1, -s);
    }
    add(0, s);
}

fn lattice_sum(x: [f64; 2], radius: u32) -> [f64; 2] {
    let mut acc = [0.0, 0.0];
    for s in 1..=radius as i32 {
        shell_pairs(x, s, &mut acc);
    }
    let r2 = x[0] * x[0] + x[1] * x[1];
    let free = free_term(x, r2);
    [free[0] + acc[0], free[1] + acc[1]]
}

/// Periodic Biot-Savart kernel on the torus as a lattice sum over
/// `0 < |k|_inf <= radius`, accumulated in symmetric `+-k` pairs shell by
/// shell. The input is reduced to its minimal image first, so the result is
/// periodic in the input and exactly odd.
///
/// Square-shell summation converges to the periodic kernel plus the linear
/// field `x^perp / 2`; see [`Kernel::BiotSavartPeriodic`] for the
/// background-corrected variant used in simulations.
pub fn biot_savart_periodic(x: [f64; 2], radius: u32, eps: f64) -> Result<[f64; 2]> {
    let x = [wrap_coord(x[0]), wrap_coord(x[1])];
    let r2 = x[0] * x[0] + x[1] * x[1];
    if r2 > eps * eps {
        return Ok(lattice_sum(x, radius));
    }
    regularized(x, r2, eps, |p| lattice_sum(p, radius))
}

/// `(sin(2 pi m x2), sin(2 pi m x1))`: smooth, periodic, mean zero and
/// exactly divergence free.
pub fn smooth_divfree_kernel(x: [f64; 2], frequency: u32) -> [f64; 2] {
    let w = 2.0 * PI * frequency as f64;
    [(w * x[1]).sin(), (w * x[0]).sin()]
}

/// Central-difference divergence of a planar vector field.
pub fn divergence_fd(f: impl Fn([f64; 2]) -> Result<[f64; 2]>, x: [f64; 2], h: f64) -> Result<f64> {
    let e = f([x[0] + h, x[1]])?;
    let w = f([x[0] - h, x[1]])?;
    let n = f([x[0], x[1] + h])?;
    let s = f([x[0], x[1] - h])?;
    Ok((e[0] - w[0]) / (2.0 * h) + (n[1] - s[1]) / (2.0 * h))
}

/// Midpoint-rule `L^p(T^2)` norm on an `n x n` cell-centred grid.
///
/// Cell centres never coincide with the origin for even `n`, so singular
/// kernels can be probed with `eps = 0`.
pub fn lp_norm_grid(f: impl Fn([f64; 2]) -> Result<[f64; 2]>, p: f64, n: usize) -> Result<f64> {
    let h = 1.0 / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let x1 = -0.5 + (i as f64 + 0.5) * h;
        let mut row = 0.0;
        for j in 0..n {
            let x2 = -0.5 + (j as f64 + 0.5) * h;
            let v = f([x1, x2])?;
            row += (v[0] * v[0] + v[1] * v[1]).sqrt().powf(p);
        }
        total += row;
    }
    Ok((total * h * h).powf(1.0 / p))
}

/// Planar interaction kernel `K`, evaluated on a displacement `x - y`.
#[derive(Clone, Debug, PartialEq)]
pub enum Kernel {
    SmoothDivFree { frequency: u32, strength: f64 },
    BiotSavartFree { eps: f64 },
    /// With `background`, the field `x^perp / 2` of the square-shell sum is
    /// removed so the kernel is continuous across the cell boundary.
    BiotSavartPeriodic { radius: u32, eps: f64, background: bool },
}

impl Kernel {
    pub fn eval(&self, disp: &[f64]) -> Result<[f64; 2]> {
        if disp.len() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: disp.len(),
            });
        }
        let x = [disp[0], disp[1]];
        match *self {
            Kernel::SmoothDivFree { frequency, strength } => {
                let v = smooth_divfree_kernel(x, frequency);
                Ok([strength * v[0], strength * v[1]])
            }
            Kernel::BiotSavartFree { eps } => biot_savart_free(x, eps),
            Kernel::BiotSavartPeriodic { radius, eps, background } => {
                let v = biot_savart_periodic(x, radius, eps)?;
                if background {
                    let w = [wrap_coord(x[0]), wrap_coord(x[1])];
                    Ok([v[0] - 0.5 * w[1], v[1] + 0.5 * w[0]])
                } else {
                    Ok(v)
                }
            }
        }
    }

    /// Upper bound on `|K|`, used as the kernel's linear-growth constant.
    pub fn sup_bound(&self) -> f64 {
        match *self {
            Kernel::SmoothDivFree { strength, .. } => strength.abs() * 2f64.sqrt(),
            Kernel::BiotSavartFree { eps } => 1.0 / (2.0 * PI * eps),
            // free part at the eps-sphere plus a bound for the lattice tail
            // and background on the fundamental cell
            Kernel::BiotSavartPeriodic { eps, .. } => 1.0 / (2.0 * PI * eps) + 1.0,
        }
    }

    pub fn regularization_eps(&self) -> Option<f64> {
        match *self {
            Kernel::SmoothDivFree { .. } => None,
            Kernel::BiotSavartFree { eps } | Kernel::BiotSavartPeriodic { eps, .. } => Some(eps),
        }
    }
}
