mod common;

use std::collections::HashMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use randquant::dither::{
    conventional_cross_moment, conventional_distortion, conventional_variable_rate, dithered_reconstruct,
    fixed_rate_of, uniform_quantize, DitherRealization, UniformQuantizerSpec,
};
use randquant::source::differential_entropy;

use common::{pearson, uniform_half, unit_gaussian};

fn spec(delta: f64, t: Option<u32>) -> UniformQuantizerSpec {
    UniformQuantizerSpec::new(delta, t).unwrap()
}

#[test]
fn quantizer_cells_are_half_open() {
    let s = spec(1.0, None);
    assert_eq!(uniform_quantize(0.3, &s), 0.0);
    assert_eq!(uniform_quantize(0.5, &s), 0.0);
    assert_eq!(uniform_quantize(0.5 + 1e-12, &s), 1.0);
    assert_eq!(uniform_quantize(-0.5, &s), -1.0);
    assert_eq!(uniform_quantize(7.2, &spec(1.0, Some(3))), 3.0);
    assert_eq!(uniform_quantize(-7.2, &spec(1.0, Some(3))), -3.0);
}

#[test]
fn fixed_rates() {
    assert!((fixed_rate_of(&spec(1.0, Some(1))).unwrap() - 3f64.log2()).abs() < 1e-15);
    assert!((fixed_rate_of(&spec(1.0, Some(3))).unwrap() - 7f64.log2()).abs() < 1e-15);
    assert_eq!(fixed_rate_of(&spec(1.0, Some(0))).unwrap(), 0.0);
    assert!(fixed_rate_of(&spec(1.0, None)).is_err());
    assert!(UniformQuantizerSpec::new(0.0, None).is_err());
}

#[test]
fn reconstruction_arithmetic() {
    let s = spec(1.0, None);
    let z = DitherRealization::new(0.4, 1.0).unwrap();
    assert!((dithered_reconstruct(0.3, z, &s) - 0.6).abs() < 1e-15);
    assert!(DitherRealization::new(0.6, 1.0).is_err());
    for x in unit_gaussian().pdf().abscissae() {
        assert_eq!(dithered_reconstruct(x, DitherRealization::zero(), &s), uniform_quantize(x, &s));
    }
}

#[test]
fn error_is_uniform_and_uncorrelated_without_overload() {
    let source = unit_gaussian();
    let s = spec(1.0, None);
    let n = 1_000_000;
    let xs = source.sample(n, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let err: Vec<f64> = xs
        .iter()
        .map(|&x| dithered_reconstruct(x, DitherRealization::draw(&mut rng, 1.0), &s) - x)
        .collect();
    let mut hist = [0usize; 20];
    for e in &err {
        assert!(e.abs() <= 0.5 + 1e-12);
        hist[(((e + 0.5) * 20.0).floor() as usize).min(19)] += 1;
    }
    let worst = hist.iter().map(|&c| (c as f64 / n as f64 - 0.05).abs()).fold(0.0, f64::max);
    assert!(worst < 5e-3, "{worst}");
    assert!(pearson(&xs, &err).abs() < 0.01);
}

#[test]
fn triangle_entropy_for_uniform_source() {
    let rate = conventional_variable_rate(&uniform_half(1001), 1.0).unwrap();
    let exact = 1.0 / (2.0 * std::f64::consts::LN_2);
    assert!((rate - exact).abs() < 1e-5, "{rate} vs {exact}");
}

#[test]
fn high_rate_limit() {
    let source = unit_gaussian();
    let h = differential_entropy(source.pdf()).unwrap();
    let rate = conventional_variable_rate(&source, 0.01).unwrap();
    assert!((rate - (h - 0.01f64.log2())).abs() < 0.01);
}

#[test]
fn rate_decreases_with_step() {
    let source = unit_gaussian();
    let rates: Vec<f64> = [0.25, 0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|&d| conventional_variable_rate(&source, d).unwrap())
        .collect();
    assert!(rates[2] > 0.0);
    assert!(rates.windows(2).all(|w| w[1] < w[0]), "{rates:?}");
}

/// Plug-in estimate of `H(Q(X+Z) | Z)` over an even grid of dither values.
fn plug_in_conditional_entropy(delta: f64, samples_per_dither: usize, dithers: usize) -> f64 {
    let source = unit_gaussian();
    let s = spec(delta, None);
    let mut total = 0.0;
    for j in 0..dithers {
        let z = delta * ((j as f64 + 0.5) / dithers as f64 - 0.5);
        let xs = source.sample(samples_per_dither, 100 + j as u64).unwrap();
        let mut counts: HashMap<i64, usize> = HashMap::new();
        for x in xs {
            *counts.entry(s.index(x + z)).or_default() += 1;
        }
        let n = samples_per_dither as f64;
        total += counts.values().map(|&c| -(c as f64 / n) * (c as f64 / n).log2()).sum::<f64>();
    }
    total / dithers as f64
}

#[test]
fn rate_matches_monte_carlo_plug_in() {
    for delta in [0.25, 0.5, 1.0] {
        let mc = plug_in_conditional_entropy(delta, 200_000, 32);
        let q = conventional_variable_rate(&unit_gaussian(), delta).unwrap();
        assert!((mc - q).abs() < 0.02, "delta {delta}: {mc} vs {q}");
    }
}

#[test]
fn distortion_without_overload() {
    let source = unit_gaussian();
    assert!((conventional_distortion(&spec(1.0, None), &source) - 1.0 / 12.0).abs() < 1e-15);
    assert!((conventional_distortion(&spec(0.5, None), &source) - 0.25 / 12.0).abs() < 1e-15);
    assert!((conventional_distortion(&spec(1.0, Some(3)), &source) - 1.0 / 12.0).abs() < 1e-15);
}

fn monte_carlo_moments(s: &UniformQuantizerSpec, n: usize, seed: u64) -> (f64, f64, f64) {
    let source = unit_gaussian();
    let xs = source.sample(n, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let (mut d, mut d2, mut cross) = (0.0, 0.0, 0.0);
    for &x in &xs {
        let z = DitherRealization::draw(&mut rng, s.delta);
        let r = dithered_reconstruct(x, z, s);
        let e = (x - r) * (x - r);
        d += e;
        d2 += e * e;
        cross += x * r;
    }
    let n = n as f64;
    let mean = d / n;
    (mean, ((d2 / n - mean * mean) / n).sqrt(), cross / n)
}

#[test]
fn overload_distortion_matches_simulation() {
    let source = unit_gaussian();
    let s = spec(1.0, Some(1));
    let q = conventional_distortion(&s, &source);
    assert!(q > 1.0 / 12.0);
    let (mc, se, cross) = monte_carlo_moments(&s, 1_000_000, 21);
    assert!((q - mc).abs() < 1e-3 && (q - mc).abs() < 4.0 * se, "{q} vs {mc} ± {se}");
    assert!((conventional_cross_moment(&s, &source) - cross).abs() < 5e-3);
}

#[test]
fn saturated_reconstruction_clamps_before_subtracting() {
    let s = spec(1.0, Some(1));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let z = DitherRealization::draw(&mut rng, 1.0);
        let x: f64 = rng.random_range(1.0..3.0);
        assert!((dithered_reconstruct(x, z, &s) - (1.0 - z.value())).abs() < 1e-15);
    }
}

proptest! {
    #[test]
    fn reconstruction_error_is_bounded_without_overload(x in -50.0f64..50.0, u in -0.5f64..0.5, delta in 0.01f64..4.0) {
        let s = spec(delta, None);
        let z = DitherRealization::new(u * delta, delta).unwrap();
        let r = dithered_reconstruct(x, z, &s);
        prop_assert!((r - x).abs() <= 0.5 * delta * (1.0 + 1e-12));
    }

    #[test]
    fn quantizer_output_is_a_clamped_level(x in -50.0f64..50.0, delta in 0.01f64..4.0, t in 0u32..8) {
        let s = spec(delta, Some(t));
        let q = uniform_quantize(x, &s);
        let i = (q / delta).round();
        prop_assert!((q - i * delta).abs() < 1e-9 * delta.max(1.0));
        prop_assert!(i.abs() <= t as f64);
    }
}
