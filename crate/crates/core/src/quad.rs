//! Adaptive Simpson quadrature.

use crate::error::{Error, Result};

/// Default absolute tolerance used by horizon integrals.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Maximum number of subintervals the recursion may create.
pub const MAX_INTERVALS: usize = 1_000_000;

const MAX_DEPTH: u32 = 60;

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    /// Sum of the local Richardson error estimates.
    pub error: f64,
    pub intervals: usize,
}

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<QuadResult> {
    if !(tol > 0.0) {
        return Err(Error::param("quadrature tolerance must be positive"));
    }
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, intervals: 0 });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let fa = f(lo);
    let fb = f(hi);
    let m = 0.5 * (lo + hi);
    let fm = f(m);
    let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);

    let mut state = State { intervals: 1, error: 0.0, converged: true };
    let value = recurse(&f, lo, hi, fa, fm, fb, whole, tol, MAX_DEPTH, &mut state);
    if !state.converged || !value.is_finite() {
        return Err(Error::Quadrature { achieved: state.error.max(tol), tolerance: tol });
    }
    Ok(QuadResult { value: sign * value, error: state.error, intervals: state.intervals })
}

struct State {
    intervals: usize,
    error: f64,
    converged: bool,
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    state: &mut State,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;

    if delta.abs() <= 15.0 * tol || depth == 0 || state.intervals >= MAX_INTERVALS {
        if delta.abs() > 15.0 * tol {
            state.converged = false;
        }
        state.error += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    state.intervals += 1;
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, state)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, state)
}
