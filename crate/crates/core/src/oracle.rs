//! Spatially flat companion ODE `v'' + μv' = |v|^p`.
//!
//! Its blow-up times carry the same small-amplitude exponents as the lifespan bounds
//! for the PDE: `T ~ ε^{−(p−1)}` with damping and `T ~ ε^{−(p−1)/(p+1)}` without.
//! The PDE solver is validated against it before its sweeps are trusted.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;

/// Time left to blow-up for `v'' = v^p` started at `v = value > 0` with `v' = velocity`:
/// `∫_V^∞ dv / √(W² + 2(v^{p+1} − V^{p+1})/(p+1))`.
///
/// The damping term is negligible at the thresholds where this is applied
/// (`μv' / v^p ~ μ V^{−(p−1)/2}`).
pub fn blowup_tail(p: f64, value: f64, velocity: f64) -> Result<f64> {
    if !(p > 1.0) || !(value > 0.0) || !value.is_finite() {
        return Err(Error::param(format!("tail needs p > 1 and a positive value, got p = {p}, v = {value}")));
    }
    // v = V(1 − y²)^{−q} with q = 2/(p−1) makes the integrand bounded on [0, 1]
    let q = 2.0 / (p - 1.0);
    let e = 2.0 * q + 2.0;
    let c = 2.0 * value.powf(p + 1.0) / (p + 1.0);
    let ratio = velocity * velocity / c;
    let integrand = |y: f64| {
        if y == 0.0 {
            return if ratio > 0.0 { 0.0 } else { 2.0 * q / e.sqrt() };
        }
        let ln1m = (-y * y).ln_1p();
        let pow = (e * ln1m).exp(); // (1 − y²)^{2q+2}
        let one_minus = -(e * ln1m).exp_m1();
        2.0 * q * y / (ratio * pow + one_minus).sqrt()
    };
    let integral = adaptive_simpson(integrand, 0.0, 1.0, 1e-12)?.value;
    Ok(((p + 1.0) / 2.0).sqrt() * value.powf(-(p - 1.0) / 2.0) * integral)
}

/// Largest `μ·dt` allowed; keeps the damped mode well inside the RK4 stability region.
const DAMPING_STEP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeSpec {
    pub p: f64,
    pub mu: f64,
    pub v0: f64,
    pub v1: f64,
    /// Blow-up threshold `M`.
    pub threshold: f64,
    /// Step-size factor: `dt = min(κ / max(|v|^{(p−1)/2}, min(1, |v'/v|)), 0.5/μ, dt_max)`.
    pub kappa: f64,
    pub dt_max: f64,
    pub t_max: f64,
}

impl OdeSpec {
    pub fn new(p: f64, mu: f64, v0: f64, v1: f64) -> Self {
        OdeSpec { p, mu, v0, v1, threshold: 1e8, kappa: 0.01, dt_max: 1.0, t_max: 1e9 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(Error::param("p must exceed 1"));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::param("mu must be nonnegative"));
        }
        if !self.v0.is_finite() || !self.v1.is_finite() {
            return Err(Error::param("initial data must be finite"));
        }
        if !(self.threshold > 0.0) || !(self.kappa > 0.0) || !(self.dt_max > 0.0) || !(self.t_max > 0.0) {
            return Err(Error::param("threshold, kappa, dt_max and t_max must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeBlowup {
    /// Crossing time plus analytic tail at the configured threshold.
    pub time: f64,
    pub crossing_time: f64,
    pub tail: f64,
    pub steps: usize,
    /// Same estimate with the threshold raised a hundredfold.
    pub time_high_threshold: f64,
    pub threshold_relative_change: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum OdeOutcome {
    BlowUp(OdeBlowup),
    NoBlowUp { t_max: f64 },
}

impl OdeOutcome {
    pub fn time(&self) -> Option<f64> {
        match self {
            OdeOutcome::BlowUp(b) => Some(b.time),
            OdeOutcome::NoBlowUp { .. } => None,
        }
    }
}

struct Crossing {
    t: f64,
    v: f64,
    w: f64,
    steps: usize,
}

fn integrate_to_threshold(spec: &OdeSpec, threshold: f64) -> Option<Crossing> {
    let OdeSpec { p, mu, kappa, dt_max, t_max, .. } = *spec;
    let f = |v: f64, w: f64| -> (f64, f64) { (w, v.abs().powf(p) - mu * w) };
    let (mut t, mut v, mut w) = (0.0, spec.v0, spec.v1);
    let mut steps = 0;
    if v == 0.0 && w == 0.0 {
        return None;
    }
    while t < t_max {
        if v.abs() >= threshold {
            return Some(Crossing { t, v: v.abs(), w: w * v.signum(), steps });
        }
        let rel = if v == 0.0 { 1.0 } else { (w / v).abs().min(1.0) };
        let rate = v.abs().powf(0.5 * (p - 1.0)).max(rel);
        let mut dt = (kappa / rate).min(dt_max).min(t_max - t);
        if mu > 0.0 {
            dt = dt.min(DAMPING_STEP / mu);
        }
        let (k1v, k1w) = f(v, w);
        let (k2v, k2w) = f(v + 0.5 * dt * k1v, w + 0.5 * dt * k1w);
        let (k3v, k3w) = f(v + 0.5 * dt * k2v, w + 0.5 * dt * k2w);
        let (k4v, k4w) = f(v + dt * k3v, w + dt * k3w);
        v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        w += dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
        t += dt;
        steps += 1;
        if !v.is_finite() || !w.is_finite() {
            return None;
        }
    }
    None
}

/// Blow-up time of the flat ODE, with the threshold-independence check built in.
pub fn ode_blowup_time(spec: &OdeSpec) -> Result<OdeOutcome> {
    spec.validate()?;
    let estimate = |m: f64| -> Result<Option<(Crossing, f64)>> {
        match integrate_to_threshold(spec, m) {
            Some(c) => {
                let tail = blowup_tail(spec.p, c.v, c.w)?;
                Ok(Some((c, tail)))
            }
            None => Ok(None),
        }
    };
    let Some((low, tail)) = estimate(spec.threshold)? else {
        return Ok(OdeOutcome::NoBlowUp { t_max: spec.t_max });
    };
    let time = low.t + tail;
    let high = estimate(spec.threshold * 100.0)?.map(|(c, tl)| c.t + tl).unwrap_or(f64::NAN);
    Ok(OdeOutcome::BlowUp(OdeBlowup {
        time,
        crossing_time: low.t,
        tail,
        steps: low.steps,
        time_high_threshold: high,
        threshold_relative_change: ((high - time) / time).abs(),
    }))
}

/// One point of an oracle sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    /// `None` when no blow-up was detected; such points are excluded from fits.
    pub lifespan: Option<f64>,
}

/// Geometric list `start · ratio^k`, `k = 0..count`.
pub fn geometric_epsilons(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start * ratio.powi(k as i32)).collect()
}

/// Blow-up times for data `ε·(v0, v1)` over a decreasing list of amplitudes.
pub fn ode_lifespan_sweep(p: f64, mu: f64, direction: (f64, f64), epsilons: &[f64]) -> Result<Vec<SweepPoint>> {
    ode_lifespan_sweep_with(&OdeSpec::new(p, mu, direction.0, direction.1), epsilons)
}

/// As [`ode_lifespan_sweep`], taking step controls from `template` and scaling its
/// `(v0, v1)` by each amplitude.
pub fn ode_lifespan_sweep_with(template: &OdeSpec, epsilons: &[f64]) -> Result<Vec<SweepPoint>> {
    if epsilons.len() < 6 {
        return Err(Error::param("an oracle sweep needs at least 6 amplitudes"));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) || epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::param("sweep amplitudes must be positive and strictly decreasing"));
    }
    epsilons
        .par_iter()
        .map(|&eps| {
            let spec = OdeSpec { v0: eps * template.v0, v1: eps * template.v1, ..*template };
            Ok(SweepPoint { epsilon: eps, lifespan: ode_blowup_time(&spec)?.time() })
        })
        .collect()
}
