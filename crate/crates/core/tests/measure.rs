use mfchaos_core::dynamics::SampleMatrix;
use mfchaos_core::measure::{
    concentration_bounds, entropy_girsanov, entropy_knn, girsanov_weight_deterministic, tv_histogram,
    ConcentrationKind, HistogramRange, Metric,
};
use mfchaos_core::rng::RngStream;
use mfchaos_core::{Execution, TimeGrid};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn normal_sample(n: usize, mean: f64, replica: u64) -> SampleMatrix {
    let mut rng = RngStream::new(21, replica, 0, 0);
    SampleMatrix::new(n, 1, (0..n).map(|_| mean + rng.normal()).collect()).unwrap()
}

#[test]
fn constant_shift_entropy_matches_closed_form() {
    let grid = TimeGrid::new(0.0, 0.01, 100).unwrap();
    let w = girsanov_weight_deterministic(|_| vec![0.6], 1, &grid, 20_000, 3, Execution::Sequential).unwrap();
    let rep = entropy_girsanov(&w, 1, 1).unwrap();
    let exact = 0.5 * 0.36;
    assert!((rep.value - exact).abs() < 4.0 * rep.stderr, "{} +- {} vs {exact}", rep.value, rep.stderr);
    assert!(w.martingale_ok());
}

#[test]
fn knn_divergence_of_unit_shift() {
    let p = normal_sample(4000, 1.0, 0);
    let q = normal_sample(4000, 0.0, 1);
    let rep = entropy_knn(&p, &q, 4, Metric::Euclidean, Execution::Sequential).unwrap();
    assert!((rep.value - 0.5).abs() < 0.08, "kNN {}", rep.value);
}

#[test]
fn histogram_tv_of_unit_shift() {
    let p = normal_sample(50_000, 1.0, 2);
    let q = normal_sample(50_000, 0.0, 3);
    let rep = tv_histogram(&p, &q, 64, HistogramRange::Fixed { lo: -6.0, hi: 7.0 }).unwrap();
    let exact = 2.0 * Normal::new(0.0, 1.0).unwrap().cdf(0.5) - 1.0;
    assert!((rep.value - exact).abs() < 0.02, "TV {} vs {exact}", rep.value);
}

#[test]
fn hoeffding_dominates_rademacher_tails() {
    let (n, trials) = (100u64, 20_000);
    let mut rng = RngStream::new(5, 0, 0, 0);
    let means: Vec<f64> = (0..trials)
        .map(|_| (0..n).map(|_| if rng.next_u64() & 1 == 1 { 1.0 } else { -1.0 }).sum::<f64>() / n as f64)
        .collect();
    for eps in [0.1, 0.2, 0.3] {
        let bound = concentration_bounds(ConcentrationKind::Hoeffding { n, eps, b: 1.0 }).unwrap().value;
        let freq = means.iter().filter(|m| **m > eps).count() as f64 / trials as f64;
        let se = (bound * (1.0 - bound) / trials as f64).sqrt();
        assert!(freq <= bound + 3.0 * se, "eps {eps}: {freq} > {bound}");
    }
}

#[test]
fn gaussian_moments_are_dominated() {
    // E X^{2q} = (2q - 1)!! for a standard normal.
    let mut double_fact = 1.0;
    for q in 1..=12u32 {
        double_fact *= (2 * q - 1) as f64;
        let b = concentration_bounds(ConcentrationKind::SubGaussianMoment { q, v: 1.0 }).unwrap();
        assert!(double_fact <= b.value, "q={q}");
    }
}

#[test]
fn moment_bounds_overflow_to_infinity() {
    let b = concentration_bounds(ConcentrationKind::ShortTimeMoment { p: 400, beta: 10.0, delta: 1.0, n: 1 }).unwrap();
    assert!(b.overflow && b.value.is_infinite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn girsanov_entropy_is_nonnegative(a in -1.0f64..1.0, seed in 0u64..1000) {
        let grid = TimeGrid::new(0.0, 0.05, 10).unwrap();
        let w = girsanov_weight_deterministic(|_| vec![a], 1, &grid, 200, seed, Execution::Sequential).unwrap();
        prop_assert!(entropy_girsanov(&w, 1, 1).unwrap().value >= 0.0);
    }

    #[test]
    fn tv_lies_in_unit_interval(shift in -3.0f64..3.0, bins in 1usize..40) {
        let p = normal_sample(300, shift, 7);
        let q = normal_sample(300, 0.0, 8);
        let v = tv_histogram(&p, &q, bins, HistogramRange::Auto).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn hoeffding_is_a_probability(n in 1u64..10_000, eps in 1e-3f64..2.0, b in 0.1f64..5.0) {
        let v = concentration_bounds(ConcentrationKind::Hoeffding { n, eps, b }).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&v));
    }
}
