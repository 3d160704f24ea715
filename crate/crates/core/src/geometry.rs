//! Finite-speed-of-propagation geometry.
//!
//! The backward cone `{(t, x) : 0 ≤ t < T, |x − x₀| < A(T) − A(t)}` is swept by the level
//! surfaces `t = ψ(λ, x)`, `0 ≤ λ < A(T)`. The observable consequence checked on solver
//! runs is that data supported in `|x| ≤ R` stay supported in `|x| ≤ R + A(t)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scale_factor::ScaleFactor;

#[derive(Debug, Clone, PartialEq)]
pub struct Cone {
    sf: ScaleFactor,
    t_apex: f64,
    x0: Vec<f64>,
    /// `A(T)`.
    radius: f64,
}

/// `√a(ψ)·|∇ₓψ|` at a sample point together with the bound it must respect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeCheck {
    pub value: f64,
    pub theta: f64,
    pub holds: bool,
}

impl Cone {
    pub fn new(sf: ScaleFactor, t_apex: f64, x0: Vec<f64>) -> Result<Self> {
        if !(t_apex > 0.0) || !t_apex.is_finite() {
            return Err(Error::param("cone apex time must be positive and finite"));
        }
        if x0.is_empty() || x0.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("cone center must be a finite point"));
        }
        let radius = sf.horizon(t_apex)?;
        if !(radius > 0.0) {
            return Err(Error::param("A(T) must be positive"));
        }
        Ok(Cone { sf, t_apex, x0, radius })
    }

    pub fn apex_time(&self) -> f64 {
        self.t_apex
    }

    /// `A(T)`, the base radius of the cone.
    pub fn base_radius(&self) -> f64 {
        self.radius
    }

    pub fn scale_factor(&self) -> &ScaleFactor {
        &self.sf
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.x0.len() {
            return Err(Error::param(format!("point has dimension {}, cone has {}", x.len(), self.x0.len())));
        }
        Ok(x.iter().zip(&self.x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
    }

    pub fn contains(&self, t: f64, x: &[f64]) -> Result<bool> {
        if t < 0.0 || t >= self.t_apex {
            return Ok(false);
        }
        Ok(self.distance(x)? < self.radius - self.sf.horizon(t)?)
    }

    fn check_lambda(&self, lambda: f64) -> Result<()> {
        if !(lambda >= 0.0 && lambda < self.radius) {
            return Err(Error::param(format!("λ = {lambda} outside [0, A(T) = {})", self.radius)));
        }
        Ok(())
    }

    /// The square root `{(A−λ)² + A^{−2}(2λA − λ²)r²}^{1/2}` and `q = 2λA − λ²`.
    fn root(&self, lambda: f64, r: f64) -> (f64, f64) {
        let a = self.radius;
        let q = 2.0 * lambda * a - lambda * lambda;
        (((a - lambda).powi(2) + q * r * r / (a * a)).sqrt(), q)
    }

    /// `ψ(λ, x)` in terms of `r = |x − x₀|`.
    pub fn psi_at(&self, lambda: f64, r: f64) -> Result<f64> {
        self.check_lambda(lambda)?;
        if !(r >= 0.0 && r <= self.radius) {
            return Err(Error::param(format!("|x − x₀| = {r} exceeds A(T) = {}", self.radius)));
        }
        if lambda == 0.0 {
            return Ok(0.0);
        }
        let (root, _) = self.root(lambda, r);
        let arg = (self.radius - root).max(0.0);
        self.sf.horizon_inverse(arg)
    }

    pub fn psi(&self, lambda: f64, x: &[f64]) -> Result<f64> {
        self.psi_at(lambda, self.distance(x)?)
    }

    /// `|∇ₓψ(λ, x)|` from the closed form, using `(A⁻¹)' = 1/√a(A⁻¹)`.
    pub fn grad_psi_norm_at(&self, lambda: f64, r: f64) -> Result<f64> {
        let psi = self.psi_at(lambda, r)?;
        Ok(self.scaled_slope(lambda, r) / self.sf.value(psi)?.sqrt())
    }

    /// `√a(ψ)·|∇ₓψ| = (2λA − λ²)r / (A² · root)`; the `a`-factors cancel exactly.
    fn scaled_slope(&self, lambda: f64, r: f64) -> f64 {
        let (root, q) = self.root(lambda, r);
        if r == 0.0 || q == 0.0 {
            return 0.0;
        }
        q * r / (self.radius * self.radius * root)
    }

    /// `∂ψ/∂λ` from the closed form.
    pub fn psi_lambda_at(&self, lambda: f64, r: f64) -> Result<f64> {
        let psi = self.psi_at(lambda, r)?;
        let a = self.radius;
        let (root, _) = self.root(lambda, r);
        Ok((a - lambda) * (1.0 - r * r / (a * a)) / (root * self.sf.value(psi)?.sqrt()))
    }

    /// `θ(λ₀) = A^{−1}(2λ₀A − λ₀²)^{1/2}`.
    pub fn theta(&self, lambda0: f64) -> Result<f64> {
        if !(lambda0 > 0.0 && lambda0 < self.radius) {
            return Err(Error::param(format!("λ₀ = {lambda0} outside (0, A(T) = {})", self.radius)));
        }
        let a = self.radius;
        Ok((2.0 * lambda0 * a - lambda0 * lambda0).sqrt() / a)
    }

    /// Checks `√a(ψ(λ,x))·|∇ₓψ(λ,x)| ≤ θ(λ₀)` for `0 ≤ λ ≤ λ₀ < A(T)`.
    pub fn char_slope_bound(&self, lambda: f64, x: &[f64], lambda0: f64) -> Result<SlopeCheck> {
        self.char_slope_bound_at(lambda, self.distance(x)?, lambda0)
    }

    pub fn char_slope_bound_at(&self, lambda: f64, r: f64, lambda0: f64) -> Result<SlopeCheck> {
        self.check_lambda(lambda)?;
        if lambda > lambda0 {
            return Err(Error::param("slope bound needs λ ≤ λ₀"));
        }
        if !(r >= 0.0 && r <= self.radius) {
            return Err(Error::param("point outside the cone base"));
        }
        let theta = self.theta(lambda0)?;
        let value = self.scaled_slope(lambda, r);
        Ok(SlopeCheck { value, theta, holds: value <= theta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportViolation {
    pub t: f64,
    pub radius: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    pub pass: bool,
    /// Largest `radius − (R + A(t))`, without the slack; may be negative.
    pub max_excess: f64,
    pub slack: f64,
    pub checked: usize,
    pub violations: Vec<SupportViolation>,
}

/// Compares measured support radii against `R + A(t) + slack`.
pub fn check_support_containment(
    history: &[(f64, f64)],
    data_radius: f64,
    sf: &ScaleFactor,
    slack: f64,
) -> Result<SupportReport> {
    if !(slack > 0.0) {
        return Err(Error::param("support slack must be positive (at least one grid spacing)"));
    }
    let mut max_excess = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    for &(t, radius) in history {
        let cone = data_radius + sf.horizon(t)?;
        max_excess = max_excess.max(radius - cone);
        if radius > cone + slack {
            violations.push(SupportViolation { t, radius, bound: cone + slack });
        }
    }
    if history.is_empty() {
        max_excess = 0.0;
    }
    Ok(SupportReport { pass: violations.is_empty(), max_excess, slack, checked: history.len(), violations })
}
