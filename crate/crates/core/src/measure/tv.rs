use std::collections::BTreeMap;

use crate::dynamics::SampleMatrix;
use crate::error::{Error, Result};

use super::{EntropyReport, EstimatorKind};

pub const MAX_HISTOGRAM_DIM: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HistogramRange {
    /// `[-1/2, 1/2)` per axis.
    Torus,
    /// `[lo, hi)` per axis; samples outside share one overflow cell.
    Fixed { lo: f64, hi: f64 },
    /// Pooled sample range.
    Auto,
}

/// Half the L1 distance between the two normalized histograms on a
/// common grid of `bins_per_dim` cells per axis.
///
/// The standard error linearizes around the fitted sign pattern:
/// `TV = (1/2) sum_j s_j (p_j - q_j)` with `s_j = sign(p_j - q_j)`.
pub fn tv_histogram(
    p: &SampleMatrix,
    q: &SampleMatrix,
    bins_per_dim: usize,
    range: HistogramRange,
) -> Result<EntropyReport> {
    if p.cols != q.cols {
        return Err(Error::DimensionMismatch { expected: p.cols, found: q.cols });
    }
    if p.cols > MAX_HISTOGRAM_DIM {
        return Err(Error::HistogramDimension { dim: p.cols, max: MAX_HISTOGRAM_DIM });
    }
    if p.rows == 0 || q.rows == 0 || bins_per_dim == 0 {
        return Err(Error::InsufficientData("histogram needs samples and bins".into()));
    }
    let (lo, hi) = match range {
        HistogramRange::Torus => (-0.5, 0.5),
        HistogramRange::Fixed { lo, hi } => (lo, hi),
        HistogramRange::Auto => {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in p.data.iter().chain(&q.data) {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
            // widen so the maximum falls inside the last cell
            (lo, hi + 1e-9 * (hi - lo).max(1.0))
        }
    };
    if !(hi > lo) {
        return Err(Error::Domain(format!("empty histogram range [{lo}, {hi})")));
    }
    let width = (hi - lo) / bins_per_dim as f64;
    let cell = |row: &[f64]| -> Option<u64> {
        let mut id = 0u64;
        for v in row {
            let b = ((v - lo) / width).floor();
            if !(b >= 0.0 && b < bins_per_dim as f64) {
                return None;
            }
            id = id * bins_per_dim as u64 + b as u64;
        }
        Some(id)
    };
    let mut counts: BTreeMap<Option<u64>, (u64, u64)> = BTreeMap::new();
    for i in 0..p.rows {
        counts.entry(cell(p.row(i))).or_default().0 += 1;
    }
    for i in 0..q.rows {
        counts.entry(cell(q.row(i))).or_default().1 += 1;
    }
    let (np, nq) = (p.rows as f64, q.rows as f64);
    let (mut tv, mut sp, mut sq) = (0.0, 0.0, 0.0);
    for (a, b) in counts.values() {
        let (fp, fq) = (*a as f64 / np, *b as f64 / nq);
        let s = (fp - fq).signum();
        tv += (fp - fq).abs();
        sp += s * fp;
        sq += s * fq;
    }
    let var = ((1.0 - sp * sp) / np + (1.0 - sq * sq) / nq) / 4.0;
    Ok(EntropyReport::new(EstimatorKind::HistogramTv, 0.5 * tv, var.max(0.0).sqrt())
        .param("bins_per_dim", bins_per_dim as f64)
        .param("range_lo", lo)
        .param("range_hi", hi)
        .param("overflow", counts.get(&None).map_or(0.0, |c| (c.0 + c.1) as f64)))
}
