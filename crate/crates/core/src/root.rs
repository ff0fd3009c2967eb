//! Bracketing root-finder for monotone, possibly noisy, functions.

use crate::error::{Error, Result};

/// Iteration cap; every step shrinks the bracket by at least `tol / 2` and
/// every other failed interpolation falls back to bisection, so this is
/// never reached for any sane `tol`.
const MAX_ITER: usize = 200;

/// Find `c` in `[lo, hi]` with `f(c) = target` for a nondecreasing `f`.
///
/// A bracketing method: the invariant `f(a) < target <= f(b)` is kept and
/// the upper end `b` is returned once `b - a <= tol`, i.e. the smallest
/// point found with `f(c) >= target`. Interior points come from regula falsi
/// with the Illinois modification, pulled at least `tol / 2` inside the
/// bracket so a good estimate is straddled on the next step; a step that
/// fails to halve the bracket is followed by plain bisection. Jumps in `f`
/// (from adaptive quasi-Monte Carlo estimates) only cost extra steps.
///
/// If `f(lo)` already reaches the target, `lo` itself is returned: with noisy
/// estimates an exact tie at the lower end can land a hair above target.
/// Fails when `f(hi)` stays below the target.
pub fn solve_monotone<F>(mut f: F, target: f64, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(lo <= hi) || !(tol > 0.0) || !target.is_finite() {
        return Err(Error::Domain(format!("invalid bracket [{lo}, {hi}] or tolerance {tol}")));
    }
    let mut fa = f(lo);
    if fa >= target {
        return Ok(lo);
    }
    let mut fb = f(hi);
    if !(fb >= target) {
        return Err(Error::BadBracket { lo, hi, target });
    }

    let (mut a, mut b) = (lo, hi);
    // which end moved last: -1 lower, 1 upper
    let mut last = 0i8;
    let mut bisect = false;
    for _ in 0..MAX_ITER {
        let width = b - a;
        if width <= tol {
            break;
        }
        let c = if bisect || !(fb > fa) || !fa.is_finite() || !fb.is_finite() {
            0.5 * (a + b)
        } else {
            let guess = a + (target - fa) / (fb - fa) * width;
            guess.clamp(a + 0.5 * tol, b - 0.5 * tol)
        };
        let fc = f(c);
        if fc >= target {
            b = c;
            fb = fc;
            if last == 1 {
                // Illinois: halve the stale end's distance to the target
                fa = target - 0.5 * (target - fa);
            }
            last = 1;
        } else {
            a = c;
            fa = fc;
            if last == -1 {
                fb = target + 0.5 * (fb - target);
            }
            last = -1;
        }
        bisect = !bisect && b - a > 0.5 * width;
    }
    Ok(b)
}
