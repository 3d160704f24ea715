//! Spatial grids and the finite-difference operators used by the solver.
//!
//! Two layouts share the spacing `h = L/(N−1)`:
//! * `Cartesian1d`: `2N−1` points on `[−L, L]`;
//! * `Radial`: `N` points on `r ∈ [0, L]` for radially symmetric fields in `n` dimensions.
//!
//! Outer boundary values are pinned to zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    Cartesian1d,
    Radial,
}

/// Surface area of the unit sphere in `Rⁿ` (2 for n = 1).
pub fn unit_sphere_area(n: usize) -> f64 {
    use std::f64::consts::PI;
    match n {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI * unit_sphere_area(n - 2) / (n as f64 - 2.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub mode: GridMode,
    /// Spatial dimension of the problem.
    pub dim: usize,
    pub length: f64,
    pub spacing: f64,
    /// Coordinates: `x` in Cartesian mode, `r` in radial mode.
    pub coords: Vec<f64>,
    /// Quadrature weights for `∫ f dx` over `Rⁿ`.
    pub weights: Vec<f64>,
    /// Reference point for distances (data center in Cartesian mode, origin in radial mode).
    pub center: f64,
}

impl Grid {
    /// `points` is the number of points on a radius, `N ≥ 5`.
    pub fn new(mode: GridMode, dim: usize, length: f64, points: usize, center: f64) -> Result<Self> {
        if points < 5 {
            return Err(Error::param(format!("grid needs at least 5 points per radius, got {points}")));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::param("domain radius must be positive"));
        }
        let h = length / (points - 1) as f64;
        let (coords, weights, center) = match mode {
            GridMode::Cartesian1d => {
                if dim != 1 {
                    return Err(Error::param("Cartesian mode is one-dimensional"));
                }
                let m = 2 * points - 1;
                let coords: Vec<f64> = (0..m).map(|i| -length + i as f64 * h).collect();
                let mut w = vec![h; m];
                w[0] = 0.5 * h;
                w[m - 1] = 0.5 * h;
                (coords, w, center)
            }
            GridMode::Radial => {
                if dim < 2 {
                    return Err(Error::param("radial mode needs n >= 2; use Cartesian mode for n = 1"));
                }
                let area = unit_sphere_area(dim);
                let coords: Vec<f64> = (0..points).map(|i| i as f64 * h).collect();
                let mut w: Vec<f64> = coords.iter().map(|&r| area * r.powi(dim as i32 - 1) * h).collect();
                w[points - 1] *= 0.5;
                (coords, w, 0.0)
            }
        };
        Ok(Grid { mode, dim, length, spacing: h, coords, weights, center })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Distance of grid point `i` from the reference point.
    pub fn distance(&self, i: usize) -> f64 {
        match self.mode {
            GridMode::Cartesian1d => (self.coords[i] - self.center).abs(),
            GridMode::Radial => self.coords[i],
        }
    }

    /// `∫ f dx` for grid values `f`.
    pub fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.weights.iter().enumerate().map(|(i, w)| w * f(i)).sum()
    }

    /// Centered second-order Laplacian; boundary entries are left at zero.
    pub fn laplacian(&self, u: &[f64], out: &mut [f64]) {
        let m = u.len();
        let h2 = self.spacing * self.spacing;
        out[m - 1] = 0.0;
        match self.mode {
            GridMode::Cartesian1d => {
                out[0] = 0.0;
                for i in 1..m - 1 {
                    out[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h2;
                }
            }
            GridMode::Radial => {
                let nm1 = self.dim as f64 - 1.0;
                // r → 0 limit of u_rr + (n−1)u_r/r is n·u_rr, with u even in r
                out[0] = self.dim as f64 * 2.0 * (u[1] - u[0]) / h2;
                for i in 1..m - 1 {
                    let urr = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h2;
                    let ur = (u[i + 1] - u[i - 1]) / (2.0 * self.spacing);
                    out[i] = urr + nm1 * ur / self.coords[i];
                }
            }
        }
    }

    /// First derivative along the grid coordinate.
    ///
    /// Centered where both neighbours lie in the numerical support (nonzero values) and
    /// one-sided at the support edge: an edge point differences toward the neighbour that
    /// shares its support status, so points outside the support get zero gradient.
    pub fn gradient(&self, u: &[f64], out: &mut [f64]) {
        let m = u.len();
        let h = self.spacing;
        let last = m - 1;
        out[last] = 0.0;
        // wall in Cartesian mode, symmetry axis in radial mode
        out[0] = 0.0;
        for i in 1..last {
            let (l, c, r) = (u[i - 1] != 0.0, u[i] != 0.0, u[i + 1] != 0.0);
            out[i] = if l == r {
                if !c && !l {
                    0.0
                } else {
                    (u[i + 1] - u[i - 1]) / (2.0 * h)
                }
            } else if r == c {
                (u[i + 1] - u[i]) / h
            } else {
                (u[i] - u[i - 1]) / h
            };
        }
    }

    /// Largest distance from the reference point with `|u| > tol` or `|v| > tol`.
    pub fn support_radius(&self, u: &[f64], v: &[f64], tol: f64) -> f64 {
        (0..self.len())
            .filter(|&i| u[i].abs() > tol || v[i].abs() > tol)
            .map(|i| self.distance(i))
            .fold(0.0, f64::max)
    }
}

/// Discretized `(u, u_t)` at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FieldState {
    pub fn zeros(len: usize) -> Self {
        FieldState { t: 0.0, u: vec![0.0; len], v: vec![0.0; len] }
    }

    pub fn sup_u(&self) -> f64 {
        self.u.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn sup_v(&self) -> f64 {
        self.v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

/// Support radius of a state; see [`Grid::support_radius`].
pub fn support_radius(grid: &Grid, state: &FieldState, tol: f64) -> f64 {
    grid.support_radius(&state.u, &state.v, tol)
}
