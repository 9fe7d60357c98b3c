mod common;

use proptest::prelude::*;
use randquant::grid::ScalarGrid;
use randquant::source::{differential_entropy, sample_bivariate, BivariateGaussianSpec, SourceModel};
use randquant::QuantError;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use common::{pearson, unit_gaussian};

#[test]
fn truncated_variance_matches_closed_form() {
    let s = unit_gaussian();
    let n = Normal::new(0.0, 1.0).unwrap();
    let z = 2.0 * n.cdf(3.0) - 1.0;
    let exact = 1.0 - 2.0 * 3.0 * n.pdf(3.0) / z;
    assert!((s.variance() - exact).abs() < 1e-5, "{} vs {exact}", s.variance());
    assert!((s.variance() - 0.9734).abs() < 1e-4);
    assert!(s.mean().abs() < 1e-9);
}

#[test]
fn symmetric_density_and_median() {
    let s = unit_gaussian();
    let v = s.pdf().values();
    for i in 0..v.len() {
        assert!((v[i] - v[v.len() - 1 - i]).abs() < 1e-15);
    }
    assert!((s.cdf(0.0) - 0.5).abs() < 1e-12);
}

#[test]
fn invalid_gaussian_arguments() {
    for (v, h, n) in [(0.0, 3.0, 2001), (-1.0, 3.0, 2001), (1.0, 0.0, 2001), (1.0, 3.0, 2), (1.0, 1.0, 101)] {
        assert!(matches!(SourceModel::truncated_gaussian(v, h, n), Err(QuantError::InvalidArgument(_))), "{v} {h} {n}");
    }
}

#[test]
fn entropy_of_uniform_densities() {
    let u1 = ScalarGrid::from_fn(-0.5, 0.5, 101, |_| 1.0).unwrap();
    let u2 = ScalarGrid::from_fn(-1.0, 1.0, 101, |_| 0.5).unwrap();
    assert!(differential_entropy(&u1).unwrap().abs() < 1e-12);
    assert!((differential_entropy(&u2).unwrap() - 1.0).abs() < 1e-12);
    let bad = ScalarGrid::new(0.0, 1.0, vec![1.0, -0.1, 1.0]).unwrap();
    assert!(differential_entropy(&bad).is_err());
}

#[test]
fn entropy_of_truncated_gaussian() {
    let n = Normal::new(0.0, 1.0).unwrap();
    let z = 2.0 * n.cdf(3.0) - 1.0;
    let nats = (2.0 * std::f64::consts::PI * std::f64::consts::E).sqrt().ln() + z.ln() - 3.0 * n.pdf(3.0) / z;
    let exact = nats / std::f64::consts::LN_2;
    let h = differential_entropy(unit_gaussian().pdf()).unwrap();
    assert!((h - exact).abs() < 1e-4, "{h} vs {exact}");
}

#[test]
fn entropy_is_stable_under_refinement() {
    let a = differential_entropy(SourceModel::truncated_gaussian(1.0, 3.0, 2001).unwrap().pdf()).unwrap();
    let b = differential_entropy(SourceModel::truncated_gaussian(1.0, 3.0, 4001).unwrap().pdf()).unwrap();
    assert!((a - b).abs() < 1e-4);
}

#[test]
fn sample_moments() {
    let s = unit_gaussian();
    let n = 1_000_000;
    let x = s.sample(n, 7).unwrap();
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    assert!(mean.abs() < 4.0 * s.variance().sqrt() / (n as f64).sqrt());
    assert!((var / s.variance() - 1.0).abs() < 0.01);
    assert!(x.iter().all(|v| (-3.0..=3.0).contains(v)));
}

#[test]
fn sampling_is_reproducible() {
    let s = unit_gaussian();
    assert_eq!(s.sample(5, 42).unwrap(), s.sample(5, 42).unwrap());
    assert_ne!(s.sample(5, 42).unwrap(), s.sample(5, 43).unwrap());
}

/// Correlation of the bivariate normal restricted to the square, by 2-D
/// trapezoidal quadrature.
fn truncated_correlation(rho: f64, t: f64) -> f64 {
    let n = 601;
    let h = 2.0 * t / (n - 1) as f64;
    let c = 1.0 - rho * rho;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for i in 0..n {
        let x = -t + i as f64 * h;
        let wx = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        for j in 0..n {
            let y = -t + j as f64 * h;
            let wy = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
            let f = (-(x * x - 2.0 * rho * x * y + y * y) / (2.0 * c)).exp() * wx * wy;
            sxy += f * x * y;
            sxx += f * x * x;
        }
    }
    sxy / sxx
}

#[test]
fn bivariate_correlations() {
    let n = 1_000_000;
    let pairs = sample_bivariate(&BivariateGaussianSpec::new(0.0, 1.0, 3.0).unwrap(), n, 3).unwrap();
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    assert!(pearson(&a, &b).abs() < 0.005);

    let target = truncated_correlation(0.9, 3.0);
    assert!((target - 0.9).abs() < 0.01);
    let pairs = sample_bivariate(&BivariateGaussianSpec::new(0.9, 1.0, 3.0).unwrap(), n, 4).unwrap();
    assert!(pairs.iter().all(|(x, y)| x.abs() <= 3.0 && y.abs() <= 3.0));
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    assert!((pearson(&a, &b) - target).abs() < 0.01);
}

#[test]
fn bivariate_degenerate_and_invalid() {
    let pairs = sample_bivariate(&BivariateGaussianSpec::new(1.0, 1.0, 3.0).unwrap(), 1000, 5).unwrap();
    assert!(pairs.iter().all(|(x, y)| x == y));
    assert!(BivariateGaussianSpec::new(1.01, 1.0, 3.0).is_err());
    assert!(BivariateGaussianSpec::new(-1.5, 1.0, 3.0).is_err());
}

#[test]
fn density_csv_round_trip() {
    let text = "x,density\n-1,0.25\n0,0.75\n1,0.25\n";
    let s = SourceModel::from_csv_reader(text.as_bytes()).unwrap();
    assert!((s.pdf().trapezoid() - 1.0).abs() < 1e-12);
    assert!(SourceModel::from_csv_reader("x,density\n-1,1\n0,1\n1,1\n".as_bytes()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gaussian_models_are_valid_densities(variance in 0.2f64..4.0, ratio in 2.0f64..5.0, n in 51usize..1500) {
        let s = SourceModel::truncated_gaussian(variance, ratio * variance.sqrt(), n).unwrap();
        prop_assert!((s.pdf().trapezoid() - 1.0).abs() <= 1e-9);
        prop_assert!(s.mean().abs() <= 1e-9);
        prop_assert!(s.pdf().values().iter().all(|&f| f >= 0.0));
        let cdf = s.cdf_grid().values();
        prop_assert!(cdf.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(cdf[0] == 0.0 && (cdf[cdf.len() - 1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_cdf_recovers_interior_nodes(variance in 0.2f64..4.0, n in 51usize..800) {
        let s = SourceModel::truncated_gaussian(variance, 3.0 * variance.sqrt(), n).unwrap();
        let h = s.pdf().spacing();
        for x in s.pdf().abscissae().skip(1).take(n - 2) {
            prop_assert!((s.inverse_cdf(s.cdf(x)) - x).abs() <= h);
        }
    }

    #[test]
    fn interval_mass_is_additive(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
        let s = unit_gaussian();
        let mut v = [a, b, c];
        v.sort_by(f64::total_cmp);
        let (p1, m1) = s.interval(v[0], v[1]);
        let (p2, m2) = s.interval(v[1], v[2]);
        let (p, m) = s.interval(v[0], v[2]);
        prop_assert!((p1 + p2 - p).abs() < 1e-12);
        prop_assert!((m1 + m2 - m).abs() < 1e-12);
    }
}
