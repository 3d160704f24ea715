//! Amplitude sweeps over the solver and the oracle, and log-log fits of lifespan against `ε`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{ode_lifespan_sweep_with, OdeSpec, SweepPoint};
use crate::solver::{estimate_lifespan, ProblemSpec, SimulationOutcome, Verdict};

/// Exponent of `ε` in the lifespan bound: `−(p−1)` with damping, `−(p−1)/(p+1)` without.
pub fn theorem_exponent(p: f64, mu: f64) -> f64 {
    if mu > 0.0 {
        -(p - 1.0)
    } else {
        -(p - 1.0) / (p + 1.0)
    }
}

/// Exponent `−(p−1)/2` quoted for comparison with earlier FLRW results.
pub fn flrw_comparison_exponent(p: f64) -> f64 {
    -(p - 1.0) / 2.0
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub outcome: SimulationOutcome,
}

impl SweepEntry {
    /// `(ε, T)` when the run blew up.
    pub fn point(&self) -> Option<(f64, f64)> {
        match (self.outcome.verdict, self.outcome.lifespan) {
            (Verdict::BlewUp, Some(t)) => Some((self.epsilon, t)),
            _ => None,
        }
    }
}

/// Runs the template at each amplitude on a pool of `workers` threads (0 = rayon default).
///
/// No checks on the amplitude list beyond positivity; see [`run_sweep`].
pub fn run_points(template: &ProblemSpec, epsilons: &[f64], workers: usize) -> Result<Vec<SweepEntry>> {
    if epsilons.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::param("sweep amplitudes must be positive"));
    }
    template.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::param(format!("cannot start {workers} workers: {e}")))?;
    let mut entries: Vec<SweepEntry> = pool.install(|| {
        epsilons
            .par_iter()
            .map(|&epsilon| {
                let spec = ProblemSpec { epsilon, ..template.clone() };
                Ok(SweepEntry { epsilon, outcome: estimate_lifespan(&spec)? })
            })
            .collect::<Result<_>>()
    })?;
    entries.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    Ok(entries)
}

/// Checks that a sweep has at least 6 amplitudes, each at most half the previous one.
pub fn validate_sweep_epsilons(epsilons: &[f64]) -> Result<()> {
    if epsilons.len() < 6 {
        return Err(Error::config("a sweep needs at least 6 amplitudes"));
    }
    if epsilons.windows(2).any(|w| !(w[1] <= 0.5 * w[0] * (1.0 + 1e-12))) {
        return Err(Error::config("consecutive sweep amplitudes must shrink by a factor of at least 2"));
    }
    Ok(())
}

/// Independent solver runs over a decreasing geometric list of amplitudes.
///
/// Runs that do not blow up are kept in the result and left out of fits.
pub fn run_sweep(template: &ProblemSpec, epsilons: &[f64], workers: usize) -> Result<Vec<SweepEntry>> {
    validate_sweep_epsilons(epsilons)?;
    run_points(template, epsilons, workers)
}

/// `ε₀·ratio^k`, `k = 0..count`.
pub fn sweep_epsilons(eps0: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| eps0 * ratio.powi(k as i32)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFit {
    /// All points with a finite lifespan, by decreasing `ε`.
    pub points: Vec<(f64, f64)>,
    pub tail: usize,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub theorem_exponent: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Least squares of `log T` on `log ε` over the `tail` smallest amplitudes.
pub fn fit_loglog(points: &[(f64, f64)], tail: usize, theorem_exponent: f64, tolerance: f64) -> Result<SweepFit> {
    if tail < 4 {
        return Err(Error::param("a fit needs a tail of at least 4 points"));
    }
    let mut pts: Vec<(f64, f64)> =
        points.iter().copied().filter(|&(e, t)| e > 0.0 && t > 0.0 && t.is_finite()).collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    if pts.len() < tail {
        return Err(Error::param(format!("only {} usable points for a tail of {tail}", pts.len())));
    }
    let used = &pts[pts.len() - tail..];
    let xs: Vec<f64> = used.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.1.ln()).collect();
    let n = tail as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::param("fit amplitudes must differ"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    let pass = slope.is_finite() && (slope - theorem_exponent).abs() <= tolerance;
    Ok(SweepFit { points: pts, tail, slope, intercept, r_squared, theorem_exponent, tolerance, pass })
}

/// Slopes for each tail length in `tails` (lengths exceeding the data are skipped).
pub fn slope_vs_tail(points: &[(f64, f64)], tails: &[usize]) -> Vec<(usize, f64)> {
    tails.iter().filter_map(|&k| fit_loglog(points, k, 0.0, f64::INFINITY).ok().map(|f| (k, f.slope))).collect()
}

/// Indices `k` (into points sorted by decreasing `ε`) where `T(ε_{k+1}) < T(ε_k)`.
pub fn monotonicity_violations(points: &[(f64, f64)]) -> Vec<usize> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    pts.windows(2).enumerate().filter(|(_, w)| w[1].1 < w[0].1).map(|(k, _)| k).collect()
}

/// Oracle data matched to the solver's initial values at the center of the bump.
pub fn matched_oracle(spec: &ProblemSpec) -> OdeSpec {
    OdeSpec {
        threshold: spec.stepping.threshold,
        ..OdeSpec::new(spec.p, spec.mu, spec.data.u0_amp, spec.data.u1_amp)
    }
}

/// Oracle sweep over the same amplitudes with [`matched_oracle`] data.
pub fn matched_oracle_sweep(spec: &ProblemSpec, epsilons: &[f64]) -> Result<Vec<SweepPoint>> {
    ode_lifespan_sweep_with(&matched_oracle(spec), epsilons)
}

/// `(ε, T)` pairs with a finite lifespan.
pub fn sweep_points(entries: &[SweepEntry]) -> Vec<(f64, f64)> {
    entries.iter().filter_map(SweepEntry::point).collect()
}

pub fn oracle_points(points: &[SweepPoint]) -> Vec<(f64, f64)> {
    points.iter().filter_map(|p| p.lifespan.map(|t| (p.epsilon, t))).collect()
}
