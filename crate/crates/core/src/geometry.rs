//! Points on the flat torus `[-1/2, 1/2)^d` and minimal-image displacements.

use crate::error::{Error, Result};

/// Wraps a single coordinate into `[-1/2, 1/2)`.
///
/// `x - round(x)` is exact in floating point; the two corrections move the
/// only ambiguous values (`±1/2`) to `-1/2`.
#[inline]
pub fn wrap_coord(x: f64) -> f64 {
    let mut r = x - x.round();
    if r >= 0.5 {
        r -= 1.0;
    } else if r < -0.5 {
        r += 1.0;
    }
    r
}

/// Minimal-image difference `x - y` of two coordinates.
#[inline]
pub fn min_image(x: f64, y: f64) -> f64 {
    wrap_coord(x - y)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.coords
    }
}

pub fn wrap_torus(x: &[f64]) -> Result<TorusPoint> {
    if x.is_empty() {
        return Err(Error::Domain("torus point needs dimension >= 1".into()));
    }
    if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("cannot wrap non-finite coordinate {bad}")));
    }
    Ok(TorusPoint {
        coords: x.iter().copied().map(wrap_coord).collect(),
    })
}

pub fn torus_displacement(x: &TorusPoint, y: &TorusPoint) -> Result<Vec<f64>> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    Ok(x.coords
        .iter()
        .zip(&y.coords)
        .map(|(a, b)| min_image(*a, *b))
        .collect())
}
