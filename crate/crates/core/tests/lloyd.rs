mod common;

use std::f64::consts::PI;

use randquant::harness::ecsq_at_rate;
use randquant::lloyd::{
    constrain_deterministic, constrained_direct, ecsq, lloyd_max, orthogonality_residual, verify_distortion_identity,
    CellQuantizer, CellRate, ConstraintReport,
};
use randquant::QuantError;

use common::{dp_entropy, dp_fixed, unit_gaussian};
use statrs::distribution::{ContinuousCDF, Normal};

/// Two-level solution for the unit Gaussian truncated to [-3, 3]:
/// `(r, D*)` with `r = E[X | 0 < X < 3]`.
fn truncated_two_level() -> (f64, f64) {
    let n = Normal::new(0.0, 1.0).unwrap();
    let z = 2.0 * n.cdf(3.0) - 1.0;
    let phi3 = (-4.5f64).exp() / (2.0 * PI).sqrt();
    let var = 1.0 - 6.0 * phi3 / z;
    let r = (2.0 / PI).sqrt() * (1.0 - (-4.5f64).exp()) / z;
    (r, var - r * r)
}

#[test]
fn one_level_reconstructs_the_mean() {
    let s = unit_gaussian();
    let q = lloyd_max(&s, 1, 0).unwrap();
    assert!(q.reconstructions()[0].abs() < 1e-12);
    assert!((q.distortion() - s.variance()).abs() < 1e-12);
}

#[test]
fn two_levels_near_the_gaussian_solution() {
    let s = unit_gaussian();
    let q = lloyd_max(&s, 2, 0).unwrap();
    let r = (2.0 / PI).sqrt();
    assert!(q.boundaries()[1].abs() < 1e-9);
    assert!((q.reconstructions()[1] / r - 1.0).abs() < 0.02);
    assert!((q.reconstructions()[0] / -r - 1.0).abs() < 0.02);
    // Truncation moves D* about 4% below 1 - 2/π; the truncated closed form
    // is the tight check.
    let (rt, dt) = truncated_two_level();
    assert!((q.reconstructions()[1] - rt).abs() < 1e-5);
    assert!((q.distortion() - dt).abs() < 1e-5, "{} vs {dt}", q.distortion());
}

#[test]
fn lloyd_max_matches_dynamic_programming() {
    let s = unit_gaussian();
    for m in [2, 4, 8] {
        let q = lloyd_max(&s, m, 0).unwrap();
        let dp = dp_fixed(&s, m, 1);
        assert!((q.distortion() - dp).abs() < 1e-4, "M {m}: {} vs {dp}", q.distortion());
    }
}

#[test]
fn centroid_property() {
    let s = unit_gaussian();
    for q in [lloyd_max(&s, 4, 0).unwrap(), lloyd_max(&s, 7, 0).unwrap(), ecsq(&s, 0.1, 8, 0).unwrap()] {
        for ((r, p), l) in q.reconstructions().iter().zip(q.probs()).zip(q.moments()) {
            assert!((r * p - l).abs() < 1e-10);
        }
        assert!((q.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn ecsq_limits() {
    let s = unit_gaussian();
    let q = ecsq(&s, 0.0, 4, 0).unwrap();
    let lm = lloyd_max(&s, q.levels(), 0).unwrap();
    assert!((q.distortion() - lm.distortion()).abs() < 1e-8, "{} vs {}", q.distortion(), lm.distortion());

    let q = ecsq(&s, 100.0, 8, 0).unwrap();
    assert_eq!(q.levels(), 1);
    assert_eq!(q.rate(), 0.0);
    assert!((q.distortion() - s.variance()).abs() < 1e-12);
    assert!(ecsq(&s, -1.0, 4, 0).is_err());
}

#[test]
fn ecsq_matches_dynamic_programming_at_one_and_a_half_bits() {
    let s = unit_gaussian();
    let (q, ok) = ecsq_at_rate(&s, 1.5, 0).unwrap();
    assert!(ok);
    let CellRate::Variable { lambda } = q.rate_mode() else { panic!("variable rate expected") };
    assert!((q.rate() - 1.5).abs() < 0.01, "{}", q.rate());
    let (d, h) = dp_entropy(&s, lambda, 1);
    assert!((q.distortion() - d).abs() < 1e-3, "{} vs {d}", q.distortion());
    assert!((q.lagrangian_cost() - (d + lambda * h)).abs() < 1e-4);
}

#[test]
fn ecsq_envelope_is_monotone() {
    let s = unit_gaussian();
    let pts: Vec<(f64, f64)> = [0.5, 0.3, 0.2, 0.1, 0.05, 0.02]
        .iter()
        .map(|&l| {
            let q = ecsq(&s, l, 16, 0).unwrap();
            (q.rate(), q.distortion())
        })
        .collect();
    for w in pts.windows(2) {
        assert!(w[1].0 >= w[0].0 && w[1].1 <= w[0].1, "{pts:?}");
    }
}

#[test]
fn two_level_constraint_chain() {
    let s = unit_gaussian();
    let sigma2 = s.second_moment();
    let q = lloyd_max(&s, 2, 0).unwrap();
    let d_star = q.distortion();
    let (c, rep) = constrain_deterministic(&q, &s).unwrap();
    assert!((rep.scale_c - sigma2 / (sigma2 - d_star)).abs() < 1e-9);
    assert!((rep.scale_c / (PI / 2.0) - 1.0).abs() < 0.02);
    assert!((c.reconstructions()[1] / (PI / 2.0).sqrt() - 1.0).abs() < 0.02);
    let (_, dt) = truncated_two_level();
    assert!((c.distortion() - sigma2 * dt / (sigma2 - dt)).abs() < 1e-5);
    assert_eq!(c.boundaries(), q.boundaries());
    assert!(rep.orthogonality_residual.abs() < 1e-8 * sigma2);
    assert!((c.cross_moment() - sigma2).abs() < 1e-8 * sigma2);
}

#[test]
fn distortion_identity_in_closed_form() {
    let d_star = 1.0 - 2.0 / PI;
    let report = ConstraintReport {
        scale_c: PI / 2.0,
        orthogonality_residual: 0.0,
        distortion_unconstrained: d_star,
        distortion_constrained: PI / 2.0 - 1.0,
    };
    assert!(verify_distortion_identity(&report, 1.0).unwrap() < 1e-15);
    let full = ConstraintReport { distortion_unconstrained: 1.0, ..report };
    assert!(matches!(verify_distortion_identity(&full, 1.0), Err(QuantError::InvalidArgument(_))));
}

#[test]
fn constrained_designs_satisfy_the_identity() {
    let s = unit_gaussian();
    let sigma2 = s.second_moment();
    for q in [lloyd_max(&s, 2, 0), lloyd_max(&s, 4, 0), lloyd_max(&s, 8, 0), ecsq(&s, 0.05, 16, 0)] {
        let q = q.unwrap();
        let (c, rep) = constrain_deterministic(&q, &s).unwrap();
        assert!(verify_distortion_identity(&rep, sigma2).unwrap() < 1e-6);
        assert!(rep.distortion_constrained > rep.distortion_unconstrained);
        assert!(orthogonality_residual(&c, &s).abs() < 1e-8 * sigma2);
    }
}

#[test]
fn unit_scale_is_a_fixed_point() {
    let s = unit_gaussian();
    let q = lloyd_max(&s, 4, 0).unwrap();
    let power: f64 = q.probs().iter().zip(q.reconstructions()).map(|(p, r)| p * r * r).sum();
    let k = (s.second_moment() / power).sqrt();
    let r = q.reconstructions().iter().map(|r| k * r).collect();
    let input = CellQuantizer::new(&s, q.boundaries().to_vec(), r, CellRate::Fixed).unwrap();
    let (out, rep) = constrain_deterministic(&input, &s).unwrap();
    assert!((rep.scale_c - 1.0).abs() < 1e-12);
    for (a, b) in out.reconstructions().iter().zip(input.reconstructions()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn residual_of_unconstrained_and_null_quantizers() {
    let s = unit_gaussian();
    let q = lloyd_max(&s, 2, 0).unwrap();
    assert!((orthogonality_residual(&q, &s) - q.distortion()).abs() < 1e-10);
    let zero = CellQuantizer::new(&s, q.boundaries().to_vec(), vec![0.0, 0.0], CellRate::Fixed).unwrap();
    assert!((orthogonality_residual(&zero, &s) - s.second_moment()).abs() < 1e-12);
    let one = lloyd_max(&s, 1, 0).unwrap();
    assert!(matches!(constrain_deterministic(&one, &s), Err(QuantError::ConstraintInfeasible(_))));
}

#[test]
fn direct_constrained_design_keeps_the_partition() {
    let s = unit_gaussian();
    let h = s.pdf().spacing();
    for m in [2, 4, 8] {
        let q = lloyd_max(&s, m, 0).unwrap();
        let (scaled, _) = constrain_deterministic(&q, &s).unwrap();
        let direct = constrained_direct(&s, m, CellRate::Fixed, 0).unwrap();
        assert_eq!(direct.levels(), m);
        for (a, b) in direct.boundaries().iter().zip(q.boundaries()) {
            assert!((a - b).abs() <= h, "M {m}: boundary {a} vs {b}");
        }
        for (a, b) in direct.reconstructions().iter().zip(scaled.reconstructions()) {
            assert!((a - b).abs() < 1e-4, "M {m}: reconstruction {a} vs {b}");
        }
    }
}

#[test]
fn csv_round_trip() {
    let s = unit_gaussian();
    for q in [lloyd_max(&s, 4, 0).unwrap(), ecsq(&s, 0.1, 8, 0).unwrap()] {
        let mut buf = Vec::new();
        q.write_csv(&mut buf).unwrap();
        let back = CellQuantizer::read_csv(buf.as_slice(), &s).unwrap();
        assert_eq!(back.rate_mode(), q.rate_mode());
        assert_eq!(back.boundaries(), q.boundaries());
        assert_eq!(back.reconstructions(), q.reconstructions());
        assert!((back.distortion() - q.distortion()).abs() < 1e-12);
    }
    assert!(CellQuantizer::read_csv("garbage".as_bytes(), &s).is_err());
}
