//! Test-function machinery: the cutoff `η`, the weights `ψ_τ = η(t/τ)^{2p'}`, and the
//! functionals `I_τ`, `J`, `K₁`, `K₂`, `E(τ)` evaluated on stored solver runs.
//!
//! Multiplying the equation by `ψ_τ(t)` and integrating over `[0, ∞) × Rⁿ` gives
//!
//! ```text
//! I_τ + J = K₁ + K₂,   I_τ = ∫∫ψ_τ N(u),   J = ε∫(μu₀ + u₁),
//! K₁ = ∫∫u ψ_τ'',      K₂ = −μ∫∫u ψ_τ'.
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldState, Grid};
use crate::solver::{Nonlinearity, ProblemSpec, Run};

/// `exp(−1/x)` for `x > 0`, else 0, with its first two derivatives.
fn f3(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let f = (-1.0 / x).exp();
    if f == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let x2 = x * x;
    (f, f / x2, f * (1.0 - 2.0 * x) / (x2 * x2))
}

/// `(η, η', η'')` at `t ≥ 0`.
pub fn eta_derivatives(t: f64) -> (f64, f64, f64) {
    if t <= 0.5 {
        return (1.0, 0.0, 0.0);
    }
    if t >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let (g0, g1, g2) = f3(2.0 - 2.0 * t);
    let (k0, k1, k2) = f3(2.0 * t - 1.0);
    // chain rule for g(t) = f(2 − 2t), k(t) = f(2t − 1)
    let (g, dg, ddg) = (g0, -2.0 * g1, 4.0 * g2);
    let (k, dk, ddk) = (k0, 2.0 * k1, 4.0 * k2);
    let s = g + k;
    let ds = dg + dk;
    let num = dg * k - g * dk;
    let dnum = ddg * k - g * ddk;
    let eta = g / s;
    let d1 = num / (s * s);
    let d2 = dnum / (s * s) - 2.0 * num * ds / (s * s * s);
    (eta, d1, d2)
}

/// Smooth cutoff: 1 on `[0, 1/2]`, 0 on `[1, ∞)`.
pub fn eta(t: f64) -> f64 {
    eta_derivatives(t).0
}

pub fn eta_prime(t: f64) -> f64 {
    eta_derivatives(t).1
}

pub fn eta_second(t: f64) -> f64 {
    eta_derivatives(t).2
}

/// `η` restricted to the transition interval `(1/2, 1)`.
pub fn eta_star(t: f64) -> f64 {
    if t > 0.5 && t < 1.0 {
        eta(t)
    } else {
        0.0
    }
}

/// `ψ_τ(t) = η(t/τ)^{2p'}` and its derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestWeight {
    pub tau: f64,
    pub p: f64,
    /// Hölder conjugate `p/(p−1)`.
    pub pprime: f64,
}

impl TestWeight {
    pub fn new(tau: f64, p: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::param(format!("tau must be positive, got {tau}")));
        }
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::param(format!("p must exceed 1, got {p}")));
        }
        Ok(TestWeight { tau, p, pprime: p / (p - 1.0) })
    }

    fn exponent(&self) -> f64 {
        2.0 * self.pprime
    }

    pub fn psi(&self, t: f64) -> f64 {
        eta(t / self.tau).powf(self.exponent())
    }

    pub fn psi_prime(&self, t: f64) -> f64 {
        let (e, d1, _) = eta_derivatives(t / self.tau);
        let q = self.exponent();
        if d1 == 0.0 {
            return 0.0;
        }
        q * e.powf(q - 1.0) * d1 / self.tau
    }

    pub fn psi_second(&self, t: f64) -> f64 {
        let (e, d1, d2) = eta_derivatives(t / self.tau);
        let q = self.exponent();
        if d1 == 0.0 && d2 == 0.0 {
            return 0.0;
        }
        (q * (q - 1.0) * e.powf(q - 2.0) * d1 * d1 + q * e.powf(q - 1.0) * d2) / (self.tau * self.tau)
    }

    pub fn psi_star(&self, t: f64) -> f64 {
        eta_star(t / self.tau).powf(self.exponent())
    }
}

/// Sampled constants in `|ψ_τ'| ≤ C₁τ^{−1}(ψ*_τ)^{1/p}` and `|ψ_τ''| ≤ C₂τ^{−2}(ψ*_τ)^{1/p}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightBounds {
    pub tau: f64,
    pub p: f64,
    pub c1: f64,
    pub c2: f64,
    pub samples: usize,
    /// A sample had a nonzero derivative where `ψ*_τ` vanished.
    pub non_finite: bool,
}

fn bound_ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Maximum ratios over `samples` midpoints of `(τ/2, τ)`.
pub fn weight_bounds_check(tau: f64, p: f64, samples: usize) -> Result<WeightBounds> {
    if samples < 1000 {
        return Err(Error::param("weight bounds need at least 1000 samples"));
    }
    let w = TestWeight::new(tau, p)?;
    let q = w.exponent();
    let (mut c1, mut c2) = (0.0f64, 0.0f64);
    let mut non_finite = false;
    for k in 0..samples {
        let s = 0.5 + (k as f64 + 0.5) / (2.0 * samples as f64);
        let (e, d1, d2) = eta_derivatives(s);
        // ψ' = qη^{q−1}η'/τ and ψ'' = η^{q−2}(q(q−1)η'² + qηη'')/τ², while (ψ*)^{1/p} = η^{q−2};
        // dividing out the common power keeps the ratio finite where η^q underflows
        let (r1, r2) = if e > 0.0 {
            (q * e * d1.abs(), (q * (q - 1.0) * d1 * d1 + q * e * d2).abs())
        } else {
            (bound_ratio(d1.abs(), 0.0), bound_ratio(d2.abs(), 0.0))
        };
        if !r1.is_finite() || !r2.is_finite() {
            non_finite = true;
        }
        c1 = c1.max(r1);
        c2 = c2.max(r2);
    }
    Ok(WeightBounds { tau, p, c1, c2, samples, non_finite })
}

/// `E(τ) = τ^{−2+1/p'} + μτ^{−1+1/p'}`.
pub fn e_of_tau(tau: f64, p: f64, mu: f64) -> f64 {
    let inv = (p - 1.0) / p;
    tau.powf(-2.0 + inv) + mu * tau.powf(-1.0 + inv)
}

/// Exponent of `τ` in `E(τ)^{p'}` for the undamped term: `p'(−2 + 1/p') = −(p+1)/(p−1)`.
pub fn undamped_closure_exponent(p: f64) -> f64 {
    let pp = p / (p - 1.0);
    pp * (-2.0 + 1.0 / pp)
}

/// Lifespan exponent obtained by solving `ε ≲ E(τ)^{p'}` for `τ`:
/// `−(p−1)` with damping (the `μτ^{−1+1/p'}` term dominates at large `τ`), and
/// `−(p−1)/(p+1)` without.
pub fn lifespan_exponent_from_closure(p: f64, damped: bool) -> f64 {
    let pp = p / (p - 1.0);
    let tau_power = if damped { pp * (-1.0 + 1.0 / pp) } else { undamped_closure_exponent(p) };
    1.0 / tau_power
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub tau: f64,
    pub i_tau: f64,
    pub j: f64,
    pub k1: f64,
    pub k2: f64,
    pub e_tau: f64,
    /// `|I_τ + J − K₁ − K₂|`.
    pub residual: f64,
    /// Residual over `|I_τ| + |J| + |K₁| + |K₂|`.
    pub relative_residual: f64,
    pub snapshots_used: usize,
    /// Time-quadrature step (largest snapshot gap inside `[0, τ]`).
    pub dt_snapshot: f64,
}

/// Source density `N(u)` at every grid point.
fn source(spec: &ProblemSpec, grid: &Grid, state: &FieldState, scratch: &mut [f64]) -> Vec<f64> {
    let p = spec.p;
    match spec.nonlinearity {
        Nonlinearity::PowerU => state.u.iter().map(|x| x.abs().powf(p)).collect(),
        Nonlinearity::PowerGradU => {
            grid.gradient(&state.u, scratch);
            scratch.iter().map(|g| g.abs().powf(p)).collect()
        }
        Nonlinearity::None => vec![0.0; state.u.len()],
    }
}

/// Functionals from snapshots covering `[0, τ]`, trapezoidal in time.
///
/// `J` is the closed-form data integral.
pub fn compute_functionals(
    spec: &ProblemSpec,
    grid: &Grid,
    snapshots: &[FieldState],
    tau: f64,
) -> Result<FunctionalReport> {
    let w = TestWeight::new(tau, spec.p)?;
    if snapshots.is_empty() || snapshots[0].t != 0.0 {
        return Err(Error::param("functionals need a snapshot at t = 0"));
    }
    if snapshots.windows(2).any(|s| !(s[1].t > s[0].t)) {
        return Err(Error::param("snapshot times must increase strictly"));
    }
    let last = snapshots.last().map(|s| s.t).unwrap_or(0.0);
    if last < tau * (1.0 - 1e-12) {
        return Err(Error::param(format!("tau = {tau} exceeds the stored horizon {last}")));
    }
    let end = snapshots.iter().position(|s| s.t >= tau * (1.0 - 1e-12)).unwrap_or(snapshots.len() - 1);
    let used = &snapshots[..=end];
    if used.len() < 3 {
        return Err(Error::param("need at least 3 snapshots inside [0, tau]"));
    }
    let mut scratch = vec![0.0; grid.len()];
    // per-snapshot integrands of I, K₁, K₂
    let rows: Vec<(f64, f64, f64, f64)> = used
        .iter()
        .map(|s| {
            if s.u.len() != grid.len() {
                return Err(Error::param("snapshot size does not match the grid"));
            }
            let src = source(spec, grid, s, &mut scratch);
            let mass = grid.integrate(|i| s.u[i]);
            let i = w.psi(s.t) * grid.integrate(|k| src[k]);
            let k1 = w.psi_second(s.t) * mass;
            let k2 = -spec.mu * w.psi_prime(s.t) * mass;
            Ok((s.t, i, k1, k2))
        })
        .collect::<Result<_>>()?;
    let (mut i_tau, mut k1, mut k2, mut gap) = (0.0, 0.0, 0.0, 0.0f64);
    for pair in rows.windows(2) {
        let (t0, i0, a0, b0) = pair[0];
        let (t1, i1, a1, b1) = pair[1];
        let h = t1 - t0;
        gap = gap.max(h);
        i_tau += 0.5 * h * (i0 + i1);
        k1 += 0.5 * h * (a0 + a1);
        k2 += 0.5 * h * (b0 + b1);
    }
    let j = spec.data_functional();
    let residual = (i_tau + j - k1 - k2).abs();
    let scale = i_tau.abs() + j.abs() + k1.abs() + k2.abs();
    Ok(FunctionalReport {
        tau,
        i_tau,
        j,
        k1,
        k2,
        e_tau: e_of_tau(tau, spec.p, spec.mu),
        residual,
        relative_residual: if scale > 0.0 { residual / scale } else { 0.0 },
        snapshots_used: used.len(),
        dt_snapshot: gap,
    })
}

impl Run {
    /// [`compute_functionals`] on this run's stored snapshots.
    pub fn functionals(&self, spec: &ProblemSpec, tau: f64) -> Result<FunctionalReport> {
        compute_functionals(spec, &self.grid, &self.snapshots, tau)
    }
}

/// Empirical constants of the inequality chain at one `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeRow {
    pub tau: f64,
    /// `(I_τ + J)/(E(τ)I_τ^{1/p})`; absent when `I_τ = 0`.
    pub c_hat: Option<f64>,
    /// `J/E(τ)^{p'}`.
    pub closure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeReport {
    pub rows: Vec<CeRow>,
    pub c_hat_max: Option<f64>,
    /// `max Ĉ / min Ĉ` over the grid.
    pub c_hat_spread: Option<f64>,
    pub closure_max: f64,
    /// `Ĉ_max^{p'}(2/p)^{p'−1}/p'`: Young's inequality turns `I + J ≤ ĈEI^{1/p}` into
    /// `J ≤ (this)·E^{p'}`.
    pub young_bound: Option<f64>,
    /// Every constant finite and every closure constant below `young_bound`.
    pub bounded: bool,
    /// `J = 0` and `I_τ = 0` everywhere.
    pub degenerate: bool,
}

/// Constant `C'` with `ĈEI^{1/p} ≤ I/2 + C'E^{p'}` for every `I ≥ 0` (weighted Young).
pub fn young_constant(c_hat: f64, p: f64) -> f64 {
    let pp = p / (p - 1.0);
    c_hat.powf(pp) * (2.0 / p).powf(pp - 1.0) / pp
}

pub fn check_ce_inequality(reports: &[FunctionalReport], p: f64, mu: f64) -> Result<CeReport> {
    if reports.is_empty() {
        return Err(Error::param("no functional reports to check"));
    }
    let pp = p / (p - 1.0);
    let rows: Vec<CeRow> = reports
        .iter()
        .map(|r| {
            let e = e_of_tau(r.tau, p, mu);
            let c_hat = (r.i_tau > 0.0).then(|| (r.i_tau + r.j) / (e * r.i_tau.powf(1.0 / p)));
            CeRow { tau: r.tau, c_hat, closure: r.j / e.powf(pp) }
        })
        .collect();
    let degenerate = reports.iter().all(|r| r.j == 0.0 && r.i_tau == 0.0);
    let chats: Vec<f64> = rows.iter().filter_map(|r| r.c_hat).collect();
    let c_hat_max = chats.iter().copied().reduce(f64::max);
    let c_hat_spread = c_hat_max.map(|m| m / chats.iter().copied().fold(f64::INFINITY, f64::min));
    let closure_max = rows.iter().map(|r| r.closure).fold(f64::NEG_INFINITY, f64::max);
    let young_bound = c_hat_max.map(|c| young_constant(c, p));
    let finite = rows.iter().all(|r| r.closure.is_finite() && r.c_hat.map_or(true, f64::is_finite));
    let bounded = !degenerate
        && finite
        && young_bound.is_some_and(|y| rows.iter().all(|r| r.closure <= y * (1.0 + 1e-12)));
    Ok(CeReport { rows, c_hat_max, c_hat_spread, closure_max, young_bound, bounded, degenerate })
}

/// Functionals on a `τ`-grid, evaluated concurrently.
pub fn functionals_on_grid(
    spec: &ProblemSpec,
    grid: &Grid,
    snapshots: &[FieldState],
    taus: &[f64],
) -> Result<Vec<FunctionalReport>> {
    taus.par_iter().map(|&tau| compute_functionals(spec, grid, snapshots, tau)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareReport {
    /// `∫|∇u|^p / (ρ^{−p}∫|u|^p)`; absent for the zero state.
    pub ratio: Option<f64>,
    /// `1 − 5h/ρ`.
    pub threshold: f64,
    pub pass: bool,
    pub degenerate: bool,
}

/// Poincaré ratio of a state supported in the ball of radius `radius`.
///
/// The sharp 1D constant is `(p−1)(π_p/2)^p`, which drops below 1 for `p` near 1
/// (about 0.94 at `p = 1.5`); in radial mode it is larger.
pub fn poincare_check(grid: &Grid, state: &FieldState, p: f64, radius: f64) -> Result<PoincareReport> {
    if !(radius > 0.0) || !(p >= 1.0) {
        return Err(Error::param("poincare check needs radius > 0 and p >= 1"));
    }
    let mut grad = vec![0.0; grid.len()];
    grid.gradient(&state.u, &mut grad);
    let num = grid.integrate(|i| grad[i].abs().powf(p));
    let den = radius.powf(-p) * grid.integrate(|i| state.u[i].abs().powf(p));
    let threshold = 1.0 - 5.0 * grid.spacing / radius;
    if den == 0.0 {
        return Ok(PoincareReport { ratio: None, threshold, pass: true, degenerate: true });
    }
    let ratio = num / den;
    Ok(PoincareReport { ratio: Some(ratio), threshold, pass: ratio >= threshold, degenerate: false })
}
