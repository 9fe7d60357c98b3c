//! One-dimensional searches used to place operating points.

use crate::error::{invalid, Result};

/// Golden-section minimization of a unimodal `f` on `[a, b]`.
pub fn golden_min(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Root of a decreasing function by bisection on `[a, b]`, assuming
/// `f(a) > 0 > f(b)`.
pub fn bisect_decreasing(mut f: impl FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let fa = f(a)?;
    let fb = f(b)?;
    if !(fa >= 0.0 && fb <= 0.0) {
        return Err(invalid(format!("root not bracketed: f({a}) = {fa}, f({b}) = {fb}")));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= tol * m.abs().max(1.0) {
            return Ok(m);
        }
        if f(m)? > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Outcome of a search for a target value of a monotone but expensive,
/// possibly noisy response.
#[derive(Debug, Clone)]
pub struct Matched<T> {
    /// The argument tried last among the best.
    pub arg: f64,
    pub value: f64,
    pub item: T,
    /// Whether `|value - target| <= tol` was reached.
    pub hit: bool,
    pub evaluations: usize,
}

/// Finds `u` with `eval(u).0` within `tol` of `target`, for a response that
/// decreases in `u`. Brackets by steps of `step` from `u0`, then refines by
/// Illinois false position. The closest item seen is returned.
pub fn match_decreasing<T>(
    target: f64,
    tol: f64,
    u0: f64,
    step: f64,
    max_evals: usize,
    mut eval: impl FnMut(f64) -> Result<(f64, T)>,
) -> Result<Matched<T>> {
    let mut evaluations = 0;
    let mut best: Option<Matched<T>> = None;
    let mut probe = |u: f64, best: &mut Option<Matched<T>>, evaluations: &mut usize| -> Result<f64> {
        let (v, item) = eval(u)?;
        *evaluations += 1;
        let better = best.as_ref().is_none_or(|b| (v - target).abs() < (b.value - target).abs());
        if better {
            *best = Some(Matched { arg: u, value: v, item, hit: (v - target).abs() <= tol, evaluations: 0 });
        }
        Ok(v - target)
    };
    let finish = |best: Option<Matched<T>>, evaluations: usize| {
        let mut b = best.expect("at least one evaluation");
        b.evaluations = evaluations;
        b
    };
    let f0 = probe(u0, &mut best, &mut evaluations)?;
    if f0.abs() <= tol {
        return Ok(finish(best, evaluations));
    }
    // response too high means u is too small
    let dir = if f0 > 0.0 { 1.0 } else { -1.0 };
    let (mut a, mut fa) = (u0, f0);
    let (mut b, mut fb);
    loop {
        let u = a + dir * step;
        let fu = probe(u, &mut best, &mut evaluations)?;
        if fu.abs() <= tol {
            return Ok(finish(best, evaluations));
        }
        if fu.signum() != fa.signum() {
            b = u;
            fb = fu;
            break;
        }
        a = u;
        fa = fu;
        if evaluations >= max_evals {
            return Ok(finish(best, evaluations));
        }
    }
    let mut side = 0i32;
    while evaluations < max_evals {
        let u = if fa != fb { b - fb * (b - a) / (fb - fa) } else { 0.5 * (a + b) };
        let u = if u.is_finite() && (u - a) * (u - b) < 0.0 { u } else { 0.5 * (a + b) };
        let fu = probe(u, &mut best, &mut evaluations)?;
        if fu.abs() <= tol {
            break;
        }
        if fu.signum() == fb.signum() {
            b = u;
            fb = fu;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = u;
            fa = fu;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        if (b - a).abs() < 1e-12 {
            break;
        }
    }
    Ok(finish(best, evaluations))
}
