mod common;

use conegibbs::geometry::{CubeIndex, PartitionSpec, Region};
use conegibbs::mark_measure::{MarkMeasure, DEFAULT_EPS_TRUNC};
use conegibbs::reference_measure::{factorization_check, laplace_check, moment_bound_check, PoissonSpec};
use conegibbs::rng::StreamSeed;
use conegibbs::stats::chi_square_poisson;
use conegibbs::test_function::TestFunction;

fn line(lo: i64, hi: i64) -> PoissonSpec {
    let spec = PartitionSpec::new(1, 0.5, 0.5).unwrap();
    let mm = MarkMeasure::new(1, 1.0, 2.0, DEFAULT_EPS_TRUNC).unwrap();
    PoissonSpec::new(mm, Region::interval(lo, hi), spec).unwrap()
}

#[test]
fn closed_form_matches_direct_quadrature() {
    // d = 1, symmetric marks: log Psi(r) = 2 int_0^inf (cosh(h r s) - 1) s^{-1} e^{-s^2} ds
    let ps = line(0, 2);
    for (h, r) in [(0.5, 1.0), (1.3, 0.8), (-2.0, 0.4)] {
        let psi = TestFunction::indicator(&Region::interval(1, 1), r);
        let exponent = ps.laplace_exponent(&[h], &psi).unwrap();
        let oracle = 0.5 * 2.0 * common::simpson(|s: f64| if s == 0.0 { 0.0 } else { ((h * r * s).cosh() - 1.0) / s * (-s * s).exp() }, 0.0, 12.0, 40_000);
        assert!((exponent - oracle).abs() < 1e-8 * oracle.abs(), "h={h} r={r}: {exponent} vs {oracle}");
    }
}

#[test]
fn empirical_laplace_agrees_with_closed_form() {
    let ps = line(-2, 2);
    let samples = ps.sample_many(20_000, StreamSeed::new(1));
    let fixtures = [
        (vec![0.7], TestFunction::indicator(&Region::interval(-1, 1), 1.0)),
        (vec![-1.5], TestFunction::per_cube([(CubeIndex::new(&[0]), 0.5), (CubeIndex::new(&[2]), -0.3)]).unwrap()),
        (vec![1.0], TestFunction::tent(vec![0.1], 0.8, 1.2).unwrap()),
    ];
    for (h, psi) in &fixtures {
        let r = laplace_check(&ps, &samples, h, psi).unwrap();
        assert!(r.pass, "{r:?}");
    }
}

#[test]
fn empirical_laplace_in_two_dimensions() {
    let spec = PartitionSpec::new(2, 0.6, 0.6).unwrap();
    let mm = MarkMeasure::new(2, 2.5, 1.5, DEFAULT_EPS_TRUNC).unwrap();
    let lam = Region::block(&[0, 0], &[1, 1]);
    let ps = PoissonSpec::new(mm, lam.clone(), spec).unwrap();
    let samples = ps.sample_many(20_000, StreamSeed::new(2));
    let r = laplace_check(&ps, &samples, &[0.6, -0.4], &TestFunction::indicator(&lam, 1.0)).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn counts_are_poisson() {
    let ps = line(0, 1);
    // the atom-count intensity is int_{|v| > eps} lambda = 2 int_eps^inf s^{-1} e^{-s^2} ds per unit length
    let oracle = 2.0 * common::radial_power(-1.0, DEFAULT_EPS_TRUNC, 8.0) * ps.volume();
    assert!((ps.intensity() - oracle).abs() < 1e-8 * oracle);
    let counts: Vec<u64> = ps.sample_many(20_000, StreamSeed::new(3)).iter().map(|s| s.len() as u64).collect();
    assert!(chi_square_poisson(&counts, oracle, 0.01).pass);
}

#[test]
fn disjoint_regions_are_independent() {
    let ps = line(-3, 3);
    let samples = ps.sample_many(20_000, StreamSeed::new(4));
    let regions = [Region::interval(-3, -2), Region::interval(0, 0), Region::interval(1, 3)];
    let r = factorization_check(&samples, &regions).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn polynomial_moments_stay_below_bound() {
    let ps = line(-1, 1);
    let psi = TestFunction::indicator(&Region::interval(-1, 1), 1.0);
    for run in 0..20 {
        let samples = ps.sample_many(500, StreamSeed::new(100 + run));
        for n in [1, 2, 4] {
            let r = moment_bound_check(&ps, &[1.0], &psi, n, &samples).unwrap();
            assert!(!r.violation, "{r:?}");
        }
    }
}
