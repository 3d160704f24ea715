//! Method-of-lines solver for
//!
//! ```text
//! u_tt − a(t)Δu + μu_t = N(u),   N(u) ∈ { |u|^p, |∇ₓu|^p, 0 },
//! u(0) = εu₀,  u_t(0) = εu₁,
//! ```
//!
//! on a 1D Cartesian or radially symmetric grid, with classical RK4 in time.
//! Blow-up is declared when the sup-norm crosses a threshold `M` (or the step size
//! collapses while the solution grows); the remaining time past `M` is added from the
//! energy identity of `v'' = v^p`.

use rayon::join;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_support_containment, SupportReport};
use crate::grid::{unit_sphere_area, FieldState, Grid, GridMode};
use crate::oracle::blowup_tail;
use crate::scale_factor::ScaleFactor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    /// `|u|^p`
    PowerU,
    /// `|∇ₓu|^p`
    PowerGradU,
    None,
}

/// Bump data `u₀ = A₀(1 − (d/R)²)³`, `u₁ = A₁(1 − (d/R)²)²` on `d = |x − x₀| ≤ R`.
///
/// `u₀` is C² and `u₁` is C¹ across `d = R`. The sign of the amplitudes sets the polarity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataProfile {
    pub radius: f64,
    #[serde(default = "one")]
    pub u0_amp: f64,
    #[serde(default = "one")]
    pub u1_amp: f64,
    /// Center `x₀`; Cartesian mode only.
    #[serde(default)]
    pub center: f64,
}

fn one() -> f64 {
    1.0
}

/// `∫_{|x|≤R} (1 − |x|²/R²)^k dx` in `Rⁿ`: `ωₙRⁿ·B(n/2, k+1)/2`.
pub fn bump_integral(dim: usize, radius: f64, k: u32) -> f64 {
    // B(n/2, k+1) = k! / ∏_{j=0..k} (n/2 + j)
    let half = dim as f64 / 2.0;
    let mut beta = 1.0;
    for j in 1..=k {
        beta *= j as f64;
    }
    for j in 0..=k {
        beta /= half + j as f64;
    }
    unit_sphere_area(dim) * radius.powi(dim as i32) * 0.5 * beta
}

impl DataProfile {
    pub fn u0(&self, d: f64) -> f64 {
        let s = 1.0 - (d / self.radius).powi(2);
        if s > 0.0 {
            self.u0_amp * s * s * s
        } else {
            0.0
        }
    }

    pub fn u1(&self, d: f64) -> f64 {
        let s = 1.0 - (d / self.radius).powi(2);
        if s > 0.0 {
            self.u1_amp * s * s
        } else {
            0.0
        }
    }

    /// Closed-form `(∫u₀ dx, ∫u₁ dx)`.
    pub fn integrals(&self, dim: usize) -> (f64, f64) {
        (self.u0_amp * bump_integral(dim, self.radius, 3), self.u1_amp * bump_integral(dim, self.radius, 2))
    }

    /// `J = ε∫(μu₀ + u₁)dx` from the closed-form integrals.
    pub fn data_functional(&self, dim: usize, epsilon: f64, mu: f64) -> f64 {
        let (i0, i1) = self.integrals(dim);
        epsilon * (mu * i0 + i1)
    }

    pub fn peak(&self) -> f64 {
        self.u0_amp.abs().max(self.u1_amp.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Domain radius `L`.
    #[serde(rename = "L")]
    pub length: f64,
    /// Points per radius `N`.
    #[serde(rename = "N")]
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stepping {
    /// CFL fraction: `dt ≤ cfl·h/√a(t)`.
    pub cfl: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Growth limiter: `dt ≤ κ/‖u‖^{(p−1)/2}`.
    pub kappa: f64,
    /// Blow-up threshold `M`.
    pub threshold: f64,
    pub t_max: f64,
    /// Support threshold relative to the initial sup-norm of `(u, u_t)`.
    pub support_tol: f64,
}

impl Default for Stepping {
    fn default() -> Self {
        Stepping { cfl: 0.5, dt_min: 1e-12, dt_max: 0.05, kappa: 0.1, threshold: 1e8, t_max: 100.0, support_tol: 1e-3 }
    }
}

/// Largest `μ·dt` the controller allows.
const DAMPING_STEP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub n: usize,
    pub p: f64,
    pub mu: f64,
    pub epsilon: f64,
    pub nonlinearity: Nonlinearity,
    pub data: DataProfile,
    #[serde(rename = "scale_factor")]
    pub sf: ScaleFactor,
    pub grid: GridSpec,
    #[serde(default)]
    pub stepping: Stepping,
    /// Defaults to Cartesian for `n = 1` and radial otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<GridMode>,
    /// Skip the admissibility and sign-condition gates (d'Alembert checks and the like).
    #[serde(default)]
    pub validation_override: bool,
}

impl ProblemSpec {
    pub fn grid_mode(&self) -> GridMode {
        self.mode.unwrap_or(if self.n == 1 { GridMode::Cartesian1d } else { GridMode::Radial })
    }

    pub fn spacing(&self) -> f64 {
        self.grid.length / (self.grid.points.max(2) - 1) as f64
    }

    pub fn build_grid(&self, points: usize) -> Result<Grid> {
        Grid::new(self.grid_mode(), self.n, self.grid.length, points, self.data.center)
    }

    /// `J` computed in closed form.
    pub fn data_functional(&self) -> f64 {
        self.data.data_functional(self.n, self.epsilon, self.mu)
    }

    /// Checks every structural constraint; returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if self.n == 0 {
            return Err(Error::config("dimension n must be at least 1"));
        }
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(Error::config(format!("exponent p must exceed 1, got {}", self.p)));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::config(format!("damping mu must be nonnegative, got {}", self.mu)));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        let d = &self.data;
        if !(d.radius > 0.0) || !d.u0_amp.is_finite() || !d.u1_amp.is_finite() || !d.center.is_finite() {
            return Err(Error::config("data radius must be positive and amplitudes finite"));
        }
        let s = &self.stepping;
        if !(s.cfl > 0.0 && s.cfl <= 1.0) {
            return Err(Error::config("cfl must lie in (0, 1]"));
        }
        if !(s.dt_min > 0.0) || !(s.dt_max > s.dt_min) || !(s.kappa > 0.0) || !(s.threshold > 0.0) || !(s.t_max > 0.0)
        {
            return Err(Error::config("stepping controls must be positive with dt_max > dt_min"));
        }
        if !s.t_max.is_finite() {
            return Err(Error::config("t_max must be finite"));
        }
        if !(s.support_tol > 0.0 && s.support_tol < 1.0) {
            return Err(Error::config("support_tol must lie in (0, 1)"));
        }
        match (self.grid_mode(), self.n) {
            (GridMode::Cartesian1d, 1) => {}
            (GridMode::Cartesian1d, _) => return Err(Error::config("Cartesian mode is for n = 1 only")),
            (GridMode::Radial, 1) => return Err(Error::config("radial mode needs n >= 2")),
            (GridMode::Radial, n) => {
                if d.center != 0.0 {
                    return Err(Error::config("radial mode is centered at the origin"));
                }
                if n > 3 {
                    warnings.push(format!("radial mode with n = {n} is experimental"));
                }
            }
        }
        let grid = self.build_grid(self.grid.points).map_err(|e| Error::config(e.to_string()))?;
        if s.t_max > self.sf.max_time() {
            return Err(Error::config(format!(
                "t_max {} exceeds the coefficient's last sample {}",
                s.t_max,
                self.sf.max_time()
            )));
        }
        let reach = d.center.abs() + d.radius + self.sf.horizon(s.t_max)?;
        if reach >= self.grid.length - 2.0 * grid.spacing {
            return Err(Error::config(format!(
                "domain radius L = {} does not contain the cone |x0| + R + A(t_max) = {reach} with two cells to spare",
                self.grid.length
            )));
        }
        if self.validation_override {
            warnings.push("validation override: admissibility and sign-condition gates skipped".into());
        } else {
            let adm = self.sf.check_admissible();
            if !adm.admissible() {
                return Err(Error::config(format!(
                    "scale factor is not admissible (positivity {}, monotonicity {}, integrable root {}); \
                     set validation_override for validation runs",
                    adm.positivity, adm.monotonicity, adm.integrable_root
                )));
            }
            if self.nonlinearity != Nonlinearity::None && !(self.data_functional() > 0.0) {
                return Err(Error::config("blow-up experiments need ∫(μu₀ + u₁)dx > 0"));
            }
        }
        Ok(warnings)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    BlewUp,
    ReachedTmax,
    Quiescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub t: f64,
    pub supnorm: f64,
    pub l1: f64,
    pub support_radius: f64,
    /// Step that led to this row (0 for the initial row).
    pub dt: f64,
}

/// A single run at one resolution.
#[derive(Debug, Clone, Serialize)]
pub struct Run {
    pub points: usize,
    pub spacing: f64,
    pub verdict: Verdict,
    pub lifespan: Option<f64>,
    pub crossing_time: Option<f64>,
    pub tail: Option<f64>,
    pub final_time: f64,
    pub steps: usize,
    /// Blow-up declared from a non-finite state rather than the threshold.
    pub overflow: bool,
    /// Threshold used for support radii.
    pub support_tol: f64,
    #[serde(skip)]
    pub history: Vec<HistoryRow>,
    #[serde(skip)]
    pub snapshots: Vec<FieldState>,
    #[serde(skip)]
    pub grid: Grid,
}

impl Run {
    /// `(t, support_radius)` pairs from the history.
    pub fn support_history(&self) -> Vec<(f64, f64)> {
        self.history.iter().map(|r| (r.t, r.support_radius)).collect()
    }

    /// Support containment with slack `cells·h`.
    pub fn check_support(&self, spec: &ProblemSpec, cells: f64) -> Result<SupportReport> {
        check_support_containment(&self.support_history(), spec.data.radius, &spec.sf, cells * self.spacing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub points: usize,
    pub spacing: f64,
    pub verdict: Verdict,
    pub lifespan: Option<f64>,
}

/// Relative lifespan disagreement tolerated between the two resolutions.
pub const REFINEMENT_BAND: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct SimulationOutcome {
    pub verdict: Verdict,
    pub lifespan: Option<f64>,
    pub crossing_time: Option<f64>,
    pub tail: Option<f64>,
    pub refinement: Vec<Resolution>,
    /// `|T(N) − T(2N−1)| / T(2N−1)` when both runs blew up.
    pub refinement_rel_diff: Option<f64>,
    pub refinement_within_band: bool,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub primary: Run,
    #[serde(skip)]
    pub fine: Run,
}

impl SimulationOutcome {
    pub fn histories(&self) -> &[HistoryRow] {
        &self.primary.history
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    /// Store full fields at multiples of this interval.
    pub snapshot_interval: Option<f64>,
    /// Stop storing snapshots after this time.
    pub snapshot_until: Option<f64>,
}

/// Initial state `(εu₀, εu₁)` on `grid`.
pub fn initial_state(spec: &ProblemSpec, grid: &Grid) -> FieldState {
    let m = grid.len();
    let mut u = Vec::with_capacity(m);
    let mut v = Vec::with_capacity(m);
    for i in 0..m {
        let d = grid.distance(i);
        u.push(spec.epsilon * spec.data.u0(d));
        v.push(spec.epsilon * spec.data.u1(d));
    }
    pin_boundary(grid, &mut u);
    pin_boundary(grid, &mut v);
    FieldState { t: 0.0, u, v }
}

fn pin_boundary(grid: &Grid, w: &mut [f64]) {
    let m = w.len();
    w[m - 1] = 0.0;
    if grid.mode == GridMode::Cartesian1d {
        w[0] = 0.0;
    }
}

/// Discrete Laplacian of `state.u`.
pub fn discrete_laplacian(grid: &Grid, state: &FieldState) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    grid.laplacian(&state.u, &mut out);
    out
}

/// Evaluates the semi-discrete right-hand side into `du`, `dv`.
struct Rhs<'a> {
    spec: &'a ProblemSpec,
    grid: &'a Grid,
    scratch: Vec<f64>,
}

impl<'a> Rhs<'a> {
    fn new(spec: &'a ProblemSpec, grid: &'a Grid) -> Self {
        Rhs { spec, grid, scratch: vec![0.0; grid.len()] }
    }

    fn eval(&mut self, t: f64, u: &[f64], v: &[f64], du: &mut [f64], dv: &mut [f64]) -> Result<()> {
        let a = self.spec.sf.value(t)?;
        let mu = self.spec.mu;
        let p = self.spec.p;
        du.copy_from_slice(v);
        self.grid.laplacian(u, dv);
        match self.spec.nonlinearity {
            Nonlinearity::PowerU => {
                for i in 0..u.len() {
                    dv[i] = a * dv[i] - mu * v[i] + u[i].abs().powf(p);
                }
            }
            Nonlinearity::PowerGradU => {
                self.grid.gradient(u, &mut self.scratch);
                for i in 0..u.len() {
                    dv[i] = a * dv[i] - mu * v[i] + self.scratch[i].abs().powf(p);
                }
            }
            Nonlinearity::None => {
                for i in 0..u.len() {
                    dv[i] = a * dv[i] - mu * v[i];
                }
            }
        }
        pin_boundary(self.grid, du);
        pin_boundary(self.grid, dv);
        Ok(())
    }
}

/// `(u̇, v̇) = (v, aΔu − μv + N(u))`.
pub fn rhs(spec: &ProblemSpec, grid: &Grid, state: &FieldState) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = grid.len();
    let (mut du, mut dv) = (vec![0.0; m], vec![0.0; m]);
    Rhs::new(spec, grid).eval(state.t, &state.u, &state.v, &mut du, &mut dv)?;
    Ok((du, dv))
}

/// Classical RK4 with preallocated stage buffers.
struct Rk4<'a> {
    rhs: Rhs<'a>,
    k: [Vec<f64>; 8],
    tmp_u: Vec<f64>,
    tmp_v: Vec<f64>,
}

impl<'a> Rk4<'a> {
    fn new(spec: &'a ProblemSpec, grid: &'a Grid) -> Self {
        let m = grid.len();
        Rk4 {
            rhs: Rhs::new(spec, grid),
            k: std::array::from_fn(|_| vec![0.0; m]),
            tmp_u: vec![0.0; m],
            tmp_v: vec![0.0; m],
        }
    }

    fn step(&mut self, state: &mut FieldState, dt: f64) -> Result<()> {
        let t = state.t;
        let m = state.u.len();
        let [k1u, k1v, k2u, k2v, k3u, k3v, k4u, k4v] = &mut self.k;
        self.rhs.eval(t, &state.u, &state.v, k1u, k1v)?;
        for i in 0..m {
            self.tmp_u[i] = state.u[i] + 0.5 * dt * k1u[i];
            self.tmp_v[i] = state.v[i] + 0.5 * dt * k1v[i];
        }
        self.rhs.eval(t + 0.5 * dt, &self.tmp_u, &self.tmp_v, k2u, k2v)?;
        for i in 0..m {
            self.tmp_u[i] = state.u[i] + 0.5 * dt * k2u[i];
            self.tmp_v[i] = state.v[i] + 0.5 * dt * k2v[i];
        }
        self.rhs.eval(t + 0.5 * dt, &self.tmp_u, &self.tmp_v, k3u, k3v)?;
        for i in 0..m {
            self.tmp_u[i] = state.u[i] + dt * k3u[i];
            self.tmp_v[i] = state.v[i] + dt * k3v[i];
        }
        self.rhs.eval(t + dt, &self.tmp_u, &self.tmp_v, k4u, k4v)?;
        for i in 0..m {
            state.u[i] += dt / 6.0 * (k1u[i] + 2.0 * k2u[i] + 2.0 * k3u[i] + k4u[i]);
            state.v[i] += dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
        state.t = t + dt;
        Ok(())
    }
}

/// One RK4 step of size `dt`.
pub fn step(spec: &ProblemSpec, grid: &Grid, state: &FieldState, dt: f64) -> Result<FieldState> {
    let mut next = state.clone();
    Rk4::new(spec, grid).step(&mut next, dt)?;
    Ok(next)
}

/// Quantity monitored for blow-up: `‖u‖_∞`, or `max(‖u‖_∞, ‖∇u‖_∞)` for the gradient source.
fn growth_metric(spec: &ProblemSpec, grid: &Grid, state: &FieldState, scratch: &mut [f64]) -> f64 {
    let sup = state.sup_u();
    match spec.nonlinearity {
        Nonlinearity::PowerGradU => {
            grid.gradient(&state.u, scratch);
            scratch.iter().fold(sup, |m, g| m.max(g.abs()))
        }
        _ => sup,
    }
}

/// Step size from the CFL bound, the growth limiter, the damping limit and `dt_max`.
pub fn choose_dt(spec: &ProblemSpec, spacing: f64, t: f64, metric: f64) -> Result<f64> {
    let s = &spec.stepping;
    let mut dt = s.dt_max;
    let root_a = spec.sf.value(t)?.sqrt();
    if root_a > 0.0 {
        dt = dt.min(s.cfl * spacing / root_a);
    }
    if spec.nonlinearity != Nonlinearity::None && metric > 0.0 {
        dt = dt.min(s.kappa / metric.powf(0.5 * (spec.p - 1.0)));
    }
    if spec.mu > 0.0 {
        dt = dt.min(DAMPING_STEP / spec.mu);
    }
    Ok(dt)
}

/// Integrates one resolution until blow-up, quiescence or `t_max`.
pub fn simulate(spec: &ProblemSpec, points: usize, opts: &RunOptions) -> Result<Run> {
    let grid = spec.build_grid(points)?;
    let mut state = initial_state(spec, &grid);
    let mut stepper = Rk4::new(spec, &grid);
    let mut scratch = vec![0.0; grid.len()];
    let h = grid.spacing;
    let s = spec.stepping;

    let initial_peak = state.sup_u().max(state.sup_v());
    let support_tol = (s.support_tol * initial_peak).max(f64::MIN_POSITIVE);
    let quiescent_floor = 1e-3 * spec.epsilon * spec.data.peak();

    let row = |state: &FieldState, dt: f64| HistoryRow {
        t: state.t,
        supnorm: state.sup_u(),
        l1: grid.integrate(|i| state.u[i].abs()),
        support_radius: grid.support_radius(&state.u, &state.v, support_tol),
        dt,
    };
    let mut history = vec![row(&state, 0.0)];
    let mut snapshots = Vec::new();
    let snap_until = opts.snapshot_until.unwrap_or(f64::INFINITY);
    let mut next_snap = match opts.snapshot_interval {
        Some(dt) if dt > 0.0 => {
            snapshots.push(state.clone());
            Some(dt)
        }
        Some(_) => return Err(Error::param("snapshot interval must be positive")),
        None => None,
    };
    let mut snap_index = 1usize;

    let mut steps = 0usize;
    let mut prev_metric = growth_metric(spec, &grid, &state, &mut scratch);
    let finish = |verdict, lifespan, crossing, tail, overflow, state: &FieldState, steps, history, snapshots| Run {
        points,
        spacing: h,
        verdict,
        lifespan,
        crossing_time: crossing,
        tail,
        final_time: state.t,
        steps,
        overflow,
        support_tol,
        history,
        snapshots,
        grid: grid.clone(),
    };

    loop {
        let metric = growth_metric(spec, &grid, &state, &mut scratch);
        if spec.nonlinearity != Nonlinearity::None && metric >= s.threshold {
            let (lifespan, tail) = match spec.nonlinearity {
                Nonlinearity::PowerU => {
                    let (i, _) = state
                        .u
                        .iter()
                        .enumerate()
                        .fold((0, 0.0), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) });
                    let value = state.u[i].abs();
                    let velocity = (state.v[i] * state.u[i].signum()).abs();
                    let tail = blowup_tail(spec.p, value, velocity)?;
                    (state.t + tail, Some(tail))
                }
                _ => (state.t, None),
            };
            let t = state.t;
            return Ok(finish(Verdict::BlewUp, Some(lifespan), Some(t), tail, false, &state, steps, history, snapshots));
        }
        let sup_all = state.sup_u().max(state.sup_v());
        if sup_all < quiescent_floor || sup_all == 0.0 {
            return Ok(finish(Verdict::Quiescent, None, None, None, false, &state, steps, history, snapshots));
        }
        if state.t >= s.t_max {
            return Ok(finish(Verdict::ReachedTmax, None, None, None, false, &state, steps, history, snapshots));
        }

        let mut dt = choose_dt(spec, h, state.t, metric)?;
        if dt < s.dt_min {
            if metric > prev_metric {
                let t = state.t;
                return Ok(finish(Verdict::BlewUp, Some(t), Some(t), None, false, &state, steps, history, snapshots));
            }
            dt = s.dt_min;
        }
        dt = dt.min(s.t_max - state.t);
        if let Some(ts) = next_snap {
            if ts > state.t {
                dt = dt.min(ts - state.t);
            }
        }

        let before = state.t;
        stepper.step(&mut state, dt)?;
        steps += 1;
        if !state.is_finite() {
            return Ok(finish(Verdict::BlewUp, Some(before), Some(before), None, true, &state, steps, history, snapshots));
        }
        if let Some(ts) = next_snap {
            // snapshot times are hit exactly by the step clamp above
            if (state.t - ts).abs() <= 1e-12 * ts.max(1.0) {
                state.t = ts;
                snapshots.push(state.clone());
                snap_index += 1;
                let next = opts.snapshot_interval.unwrap() * snap_index as f64;
                next_snap = (next <= snap_until).then_some(next);
            }
        }
        history.push(row(&state, dt));
        prev_metric = metric;
    }
}

/// Runs at `N` and `2N − 1` points and reports both lifespans.
pub fn estimate_lifespan(spec: &ProblemSpec) -> Result<SimulationOutcome> {
    estimate_lifespan_with(spec, &RunOptions::default())
}

pub fn estimate_lifespan_with(spec: &ProblemSpec, opts: &RunOptions) -> Result<SimulationOutcome> {
    let warnings = spec.validate()?;
    let n = spec.grid.points;
    let (coarse, fine) = join(|| simulate(spec, n, opts), || simulate(spec, 2 * n - 1, opts));
    let (coarse, fine) = (coarse?, fine?);
    let rel = match (coarse.lifespan, fine.lifespan) {
        (Some(a), Some(b)) if coarse.verdict == Verdict::BlewUp && fine.verdict == Verdict::BlewUp => {
            Some(((a - b) / b).abs())
        }
        _ => None,
    };
    let within = match rel {
        Some(r) => r <= REFINEMENT_BAND,
        None => coarse.verdict == fine.verdict,
    };
    let mut warnings = warnings;
    if !within {
        warnings.push("lifespans at N and 2N-1 points disagree beyond the refinement band".into());
    }
    let res = |r: &Run| Resolution { points: r.points, spacing: r.spacing, verdict: r.verdict, lifespan: r.lifespan };
    Ok(SimulationOutcome {
        verdict: coarse.verdict,
        lifespan: coarse.lifespan,
        crossing_time: coarse.crossing_time,
        tail: coarse.tail,
        refinement: vec![res(&coarse), res(&fine)],
        refinement_rel_diff: rel,
        refinement_within_band: within,
        warnings,
        primary: coarse,
        fine,
    })
}

/// Discrete energy `∫(v² + a|∇u|²)` with one-sided differences on cell edges.
pub fn discrete_energy(grid: &Grid, state: &FieldState, a: f64) -> f64 {
    let h = grid.spacing;
    let kinetic = grid.integrate(|i| state.v[i] * state.v[i]);
    let mut potential = 0.0;
    for i in 0..grid.len() - 1 {
        let du = (state.u[i + 1] - state.u[i]) / h;
        let w = match grid.mode {
            GridMode::Cartesian1d => h,
            GridMode::Radial => {
                let r = 0.5 * (grid.coords[i] + grid.coords[i + 1]);
                unit_sphere_area(grid.dim) * r.powi(grid.dim as i32 - 1) * h
            }
        };
        potential += w * du * du;
    }
    kinetic + a * potential
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn de_sitter_spec(p: f64, eps: f64) -> ProblemSpec {
        ProblemSpec {
            n: 3,
            p,
            mu: 3.0,
            epsilon: eps,
            nonlinearity: Nonlinearity::PowerU,
            data: DataProfile { radius: 1.0, u0_amp: 1.0, u1_amp: 1.0, center: 0.0 },
            sf: ScaleFactor::de_sitter(1.0).unwrap(),
            grid: GridSpec { length: 2.5, points: 201 },
            stepping: Stepping { t_max: 50.0, ..Stepping::default() },
            mode: None,
            validation_override: false,
        }
    }

    #[test]
    fn bump_integrals_match_quadrature() {
        for dim in 1..=4 {
            for k in [2u32, 3] {
                let area = unit_sphere_area(dim);
                let q = crate::quad::adaptive_simpson(
                    |r: f64| area * r.powi(dim as i32 - 1) * (1.0 - r * r).powi(k as i32),
                    0.0,
                    1.0,
                    1e-13,
                )
                .unwrap()
                .value;
                assert_relative_eq!(bump_integral(dim, 1.0, k), q, max_relative = 1e-10);
            }
        }
        // R scaling
        assert_relative_eq!(bump_integral(3, 2.0, 3), 8.0 * bump_integral(3, 1.0, 3), max_relative = 1e-14);
    }

    #[test]
    fn zero_state_has_zero_derivative() {
        let spec = de_sitter_spec(2.0, 1.0);
        let grid = spec.build_grid(51).unwrap();
        let z = FieldState::zeros(grid.len());
        let (du, dv) = rhs(&spec, &grid, &z).unwrap();
        assert!(du.iter().chain(&dv).all(|&x| x == 0.0));
        let next = step(&spec, &grid, &z, 0.01).unwrap();
        assert!(next.u.iter().chain(&next.v).all(|&x| x == 0.0));
    }

    #[test]
    fn plateau_source_is_one() {
        let mut spec = de_sitter_spec(3.0, 1.0);
        spec.mu = 0.0;
        let grid = spec.build_grid(51).unwrap();
        let m = grid.len();
        let u: Vec<f64> = (0..m).map(|i| if grid.coords[i] < 1.0 { 1.0 } else { 0.0 }).collect();
        let state = FieldState { t: 0.3, u, v: vec![0.0; m] };
        let (_, dv) = rhs(&spec, &grid, &state).unwrap();
        for i in 0..m {
            if grid.coords[i] < 0.9 {
                assert_relative_eq!(dv[i], 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn standing_cosine_follows_discrete_dispersion() {
        // u = cos(kx) on [−L, L] with k = π/(2L)·(2j+1) vanishes at the walls; the
        // semi-discrete frequency is ω = (2/h) sin(kh/2)
        let mut spec = de_sitter_spec(2.0, 1.0);
        spec.n = 1;
        spec.mu = 0.0;
        spec.nonlinearity = Nonlinearity::None;
        spec.sf = ScaleFactor::constant(1.0).unwrap();
        let grid = spec.build_grid(101).unwrap();
        let h = grid.spacing;
        let k = std::f64::consts::PI / (2.0 * grid.length) * 5.0;
        let u: Vec<f64> = grid.coords.iter().map(|&x| (k * x).cos()).collect();
        let state = FieldState { t: 0.0, u: u.clone(), v: vec![0.0; grid.len()] };
        let (_, dv) = rhs(&spec, &grid, &state).unwrap();
        let omega2 = (2.0 / h * (k * h / 2.0).sin()).powi(2);
        for i in 1..grid.len() - 1 {
            assert_relative_eq!(dv[i], -omega2 * u[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn linear_run_reaches_tmax_and_zero_data_is_quiescent() {
        let mut spec = de_sitter_spec(2.0, 0.5);
        spec.nonlinearity = Nonlinearity::None;
        spec.stepping.t_max = 3.0;
        let out = estimate_lifespan(&spec).unwrap();
        assert_eq!(out.verdict, Verdict::ReachedTmax);
        assert!(out.lifespan.is_none());

        let mut zero = de_sitter_spec(2.0, 0.5);
        zero.data.u0_amp = 0.0;
        zero.data.u1_amp = 0.0;
        zero.validation_override = true;
        let out = estimate_lifespan(&zero).unwrap();
        assert_eq!(out.verdict, Verdict::Quiescent);
    }

    #[test]
    fn validation_gates() {
        let mut spec = de_sitter_spec(2.0, 0.5);
        spec.sf = ScaleFactor::constant(1.0).unwrap();
        spec.stepping.t_max = 0.5;
        assert!(spec.validate().is_err());
        spec.validation_override = true;
        assert!(spec.validate().is_ok());

        let mut small = de_sitter_spec(2.0, 0.5);
        small.grid.length = 1.5;
        assert!(matches!(small.validate(), Err(Error::Config(_))));

        let mut neg = de_sitter_spec(2.0, 0.5);
        neg.data.u0_amp = -1.0;
        neg.data.u1_amp = -1.0;
        assert!(neg.validate().is_err());

        let mut p = de_sitter_spec(1.0, 0.5);
        p.p = 1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn small_blowup_run_is_consistent() {
        let spec = de_sitter_spec(2.0, 2.0);
        let out = estimate_lifespan(&spec).unwrap();
        assert_eq!(out.verdict, Verdict::BlewUp);
        let t = out.lifespan.unwrap();
        assert!(t > 0.0 && t.is_finite());
        assert!(out.refinement_within_band, "{:?}", out.refinement);
        let rep = out.primary.check_support(&spec, 2.0).unwrap();
        assert!(rep.pass, "{rep:?}");
    }
}
