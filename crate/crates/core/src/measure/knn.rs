use crate::dynamics::SampleMatrix;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::geometry::wrap_coord;
use crate::rng::{stream, RngStream};
use crate::stats::mean_stderr;

use super::{EntropyReport, EstimatorKind, KdTree, Metric};

const JITTER: f64 = 1e-12;
const JITTER_SEED: u64 = 0x6a69_7474_6572;

/// k-nearest-neighbour estimate of `KL(P | Q)` from samples of each:
///
/// `(d / n) sum_i log(nu_k(i) / rho_k(i)) + log(m / (n - 1))`
///
/// with `rho_k(i)` the distance from `p_i` to its k-th neighbour among the
/// other `p` samples and `nu_k(i)` to its k-th neighbour among the `m`
/// `q` samples. The estimator is consistent but biased at finite sample
/// size, mostly where densities vary on the scale of the neighbour
/// radius. Exact ties are broken by jittering both samples at the 1e-12
/// scale, reported as the `jittered` parameter.
pub fn entropy_knn(
    p: &SampleMatrix,
    q: &SampleMatrix,
    neighbors: usize,
    metric: Metric,
    exec: Execution,
) -> Result<EntropyReport> {
    if p.cols != q.cols {
        return Err(Error::DimensionMismatch { expected: p.cols, found: q.cols });
    }
    if p.rows < 100 || q.rows < 100 {
        return Err(Error::InsufficientData(format!(
            "kNN divergence needs at least 100 samples each, got {} and {}",
            p.rows, q.rows
        )));
    }
    if neighbors == 0 || neighbors >= p.rows.min(q.rows) {
        return Err(Error::Domain(format!("neighbour count {neighbors} out of range")));
    }
    let (terms, jittered) = match log_ratios(&p.data, &q.data, p.cols, neighbors, metric, exec) {
        Some(t) => (t, false),
        None => {
            let jp = jitter(&p.data, metric, 0);
            let jq = jitter(&q.data, metric, 1);
            let t = log_ratios(&jp, &jq, p.cols, neighbors, metric, exec)
                .ok_or_else(|| Error::Domain("coincident samples survive jittering".into()))?;
            (t, true)
        }
    };
    let (mean, stderr) = mean_stderr(&terms);
    let value = mean + (q.rows as f64 / (p.rows as f64 - 1.0)).ln();
    Ok(EntropyReport::new(EstimatorKind::Knn, value, stderr)
        .param("neighbors", neighbors as f64)
        .param("samples_p", p.rows as f64)
        .param("samples_q", q.rows as f64)
        .param("jittered", if jittered { 1.0 } else { 0.0 }))
}

/// `d * log(nu / rho)` per `p` sample, or `None` on a zero distance.
fn log_ratios(p: &[f64], q: &[f64], dim: usize, k: usize, metric: Metric, exec: Execution) -> Option<Vec<f64>> {
    let tp = KdTree::new(p, dim, metric);
    let tq = KdTree::new(q, dim, metric);
    let rows = p.len() / dim;
    let terms = map_indexed(exec, rows, |i| {
        let x = &p[i * dim..(i + 1) * dim];
        let rho2 = tp.kth_dist2(x, k, Some(i));
        let nu2 = tq.kth_dist2(x, k, None);
        if rho2 > 0.0 && nu2 > 0.0 {
            Some(0.5 * dim as f64 * (nu2 / rho2).ln())
        } else {
            None
        }
    });
    terms.into_iter().collect()
}

fn jitter(x: &[f64], metric: Metric, which: u64) -> Vec<f64> {
    let mut rng = RngStream::new(JITTER_SEED, which, 0, stream::JITTER);
    x.iter()
        .map(|v| {
            let y = v + JITTER * rng.normal();
            if metric == Metric::Periodic {
                wrap_coord(y)
            } else {
                y
            }
        })
        .collect()
}
