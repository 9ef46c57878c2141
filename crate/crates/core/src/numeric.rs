//! Scalar root finding and one-dimensional optimisation used by the analytic modules.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// Stops when the bracket is narrower than `tol` or after 200 halvings, and returns the
/// midpoint of the final bracket.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || !f_lo.is_finite() || !f_hi.is_finite() {
        return Err(Error::NoBracket { lo, hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= tol || mid == lo || mid == hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bisection on a monotone predicate: `pred(lo)` is true, `pred(hi)` is false, and the
/// returned point is the last one known to satisfy the predicate.
pub fn bisect_predicate<P: Fn(f64) -> bool>(pred: P, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    for _ in 0..200 {
        if (hi - lo).abs() <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Golden-section search for a maximiser of a unimodal `f` on `[lo, hi]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..300 {
        if (hi - lo).abs() <= tol {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    let mid = 0.5 * (lo + hi);
    let fm = f(mid);
    [(x1, f1), (x2, f2), (mid, fm)]
        .into_iter()
        .fold((mid, fm), |best, cand| if cand.1 > best.1 { cand } else { best })
}

/// Golden-section search for a minimiser.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (x, v) = golden_max(|x| -f(x), lo, hi, tol);
    (x, -v)
}

/// Global maximum on `[lo, hi]` by a dense scan followed by golden-section refinement of the
/// best sample. The endpoints are always candidates.
pub fn dense_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, samples: usize) -> (f64, f64) {
    if hi <= lo {
        return (lo, f(lo));
    }
    let samples = samples.max(2);
    let step = (hi - lo) / (samples - 1) as f64;
    let mut best = (lo, f(lo));
    let mut best_i = 0;
    for i in 1..samples {
        let x = if i == samples - 1 { hi } else { lo + step * i as f64 };
        let v = f(x);
        if v > best.1 {
            best = (x, v);
            best_i = i;
        }
    }
    let a = lo + step * best_i.saturating_sub(1) as f64;
    let b = (lo + step * (best_i + 1) as f64).min(hi);
    let refined = golden_max(&f, a, b, 1e-13 * (1.0 + b.abs()));
    if refined.1 > best.1 {
        refined
    } else {
        best
    }
}

/// Quintic smoothstep `6t⁵ − 15t⁴ + 10t³` on `[0, 1]`, clamped outside. C² at both ends.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

pub fn smoothstep_deriv(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    30.0 * t * t * (1.0 - t) * (1.0 - t)
}

/// Largest slope of [`smoothstep`], attained at t = 1/2.
pub const SMOOTHSTEP_MAX_SLOPE: f64 = 1.875;
