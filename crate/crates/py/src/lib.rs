use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use serde::Serialize;

use dampwave_core::config::{self, Config};
use dampwave_core::experiments;
use dampwave_core::functional;
use dampwave_core::geometry::Cone;
use dampwave_core::oracle::{self, OdeSpec};
use dampwave_core::scale_factor::{self as sf, ScaleFactorSpec};
use dampwave_core::solver::{self, RunOptions};

fn err(e: dampwave_core::Error) -> PyErr {
    if e.is_config_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// Serializes through JSON into plain dicts and lists.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn load_config(text: &str) -> PyResult<Config> {
    let cfg = Config::from_json(text).map_err(err)?;
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

#[pyclass(frozen, module = "dampwave")]
struct ScaleFactor {
    inner: sf::ScaleFactor,
}

#[pymethods]
impl ScaleFactor {
    #[staticmethod]
    fn de_sitter(h: f64) -> PyResult<Self> {
        Ok(ScaleFactor { inner: sf::ScaleFactor::de_sitter(h).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (alpha, a0 = 1.0))]
    fn power_law(alpha: f64, a0: f64) -> PyResult<Self> {
        Ok(ScaleFactor { inner: sf::ScaleFactor::power_law(a0, alpha).map_err(err)? })
    }

    #[staticmethod]
    fn flrw(n: usize, w: f64) -> PyResult<Self> {
        Ok(ScaleFactor { inner: sf::ScaleFactor::flrw(n, w).map_err(err)? })
    }

    #[staticmethod]
    fn constant(c: f64) -> PyResult<Self> {
        Ok(ScaleFactor { inner: sf::ScaleFactor::constant(c).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (samples, tail_alpha = None))]
    fn tabulated(samples: Vec<[f64; 2]>, tail_alpha: Option<f64>) -> PyResult<Self> {
        Ok(ScaleFactor { inner: sf::ScaleFactor::tabulated(&samples, tail_alpha).map_err(err)? })
    }

    /// Parses the `scale_factor` object of a config file.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec: ScaleFactorSpec = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(ScaleFactor { inner: sf::ScaleFactor::try_from(spec).map_err(err)? })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind_name()
    }

    fn value(&self, t: f64) -> PyResult<f64> {
        self.inner.value(t).map_err(err)
    }

    fn derivative(&self, t: f64) -> PyResult<f64> {
        self.inner.derivative(t).map_err(err)
    }

    fn horizon(&self, t: f64) -> PyResult<f64> {
        self.inner.horizon(t).map_err(err)
    }

    fn horizon_inverse(&self, s: f64) -> PyResult<f64> {
        self.inner.horizon_inverse(s).map_err(err)
    }

    #[getter]
    fn horizon_limit(&self) -> f64 {
        self.inner.horizon_limit()
    }

    fn check_admissible<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let a = self.inner.check_admissible();
        let out = to_py(py, &a)?;
        out.set_item("admissible", a.admissible())?;
        Ok(out)
    }

    /// `(√a(ψ)|∇ψ|, θ(λ₀), holds)` for the cone with apex time `t_apex`.
    fn slope_bound(&self, t_apex: f64, lam: f64, r: f64, lam0: f64) -> PyResult<(f64, f64, bool)> {
        let cone = Cone::new(self.inner.clone(), t_apex, vec![0.0]).map_err(err)?;
        let c = cone.char_slope_bound_at(lam, r, lam0).map_err(err)?;
        Ok((c.value, c.theta, c.holds))
    }

    fn __repr__(&self) -> String {
        format!("ScaleFactor({:?})", self.inner)
    }
}

/// JSON text of a bundled preset config.
#[pyfunction]
fn preset(name: &str) -> PyResult<String> {
    config::preset(name)
        .map(str::to_string)
        .ok_or_else(|| PyValueError::new_err(format!("unknown preset {name:?}; known: {:?}", config::PRESETS.iter().map(|p| p.0).collect::<Vec<_>>())))
}

/// Runs the solver at `N` and `2N−1` points; returns the outcome as a dict.
#[pyfunction]
fn estimate_lifespan<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyAny>> {
    let spec = load_config(config)?.problem_spec();
    let out = py.detach(|| solver::estimate_lifespan(&spec)).map_err(err)?;
    let d = to_py(py, &out.refinement)?;
    let result = to_py(py, &serde_json::json!({
        "verdict": out.verdict,
        "lifespan": out.lifespan,
        "crossing_time": out.crossing_time,
        "tail": out.tail,
        "refinement_rel_diff": out.refinement_rel_diff,
        "refinement_within_band": out.refinement_within_band,
        "warnings": out.warnings,
        "history": out.primary.history,
    }))?;
    result.set_item("refinement", d)?;
    Ok(result)
}

/// Single run with snapshots, then `I_τ`, `J`, `K₁`, `K₂` for each `τ` and the closure check.
#[pyfunction]
fn functionals<'py>(py: Python<'py>, config: &str, taus: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = load_config(config)?;
    let spec = cfg.problem_spec();
    let opts = RunOptions { snapshot_interval: cfg.output.snapshot_interval, snapshot_until: cfg.output.snapshot_until };
    if opts.snapshot_interval.is_none() {
        return Err(PyValueError::new_err("config needs output.snapshot_interval for functionals"));
    }
    let (reports, ce) = py
        .detach(|| -> dampwave_core::Result<_> {
            let run = solver::simulate(&spec, spec.grid.points, &opts)?;
            let reports = taus.iter().map(|&tau| run.functionals(&spec, tau)).collect::<dampwave_core::Result<Vec<_>>>()?;
            let ce = functional::check_ce_inequality(&reports, spec.p, spec.mu)?;
            Ok((reports, ce))
        })
        .map_err(err)?;
    to_py(py, &serde_json::json!({ "reports": reports, "ce": ce }))
}

#[pyfunction]
#[pyo3(signature = (p, mu, v0, v1, threshold = 1e8))]
fn ode_blowup_time<'py>(py: Python<'py>, p: f64, mu: f64, v0: f64, v1: f64, threshold: f64) -> PyResult<Bound<'py, PyAny>> {
    let spec = OdeSpec { threshold, ..OdeSpec::new(p, mu, v0, v1) };
    to_py(py, &oracle::ode_blowup_time(&spec).map_err(err)?)
}

/// `[(ε, T(ε) or None)]` for the ODE with data `ε·direction`.
#[pyfunction]
#[pyo3(signature = (p, mu, epsilons, direction = (1.0, 1.0)))]
fn ode_lifespan_sweep(py: Python<'_>, p: f64, mu: f64, epsilons: Vec<f64>, direction: (f64, f64)) -> PyResult<Vec<(f64, Option<f64>)>> {
    let pts = py.detach(|| oracle::ode_lifespan_sweep(p, mu, direction, &epsilons)).map_err(err)?;
    Ok(pts.iter().map(|s| (s.epsilon, s.lifespan)).collect())
}

#[pyfunction]
#[pyo3(signature = (points, exponent, tail = 4, tolerance = 0.1))]
fn fit_loglog<'py>(py: Python<'py>, points: Vec<(f64, f64)>, exponent: f64, tail: usize, tolerance: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &experiments::fit_loglog(&points, tail, exponent, tolerance).map_err(err)?)
}

#[pyfunction]
fn theorem_exponent(p: f64, mu: f64) -> f64 {
    experiments::theorem_exponent(p, mu)
}

#[pyfunction]
#[pyo3(signature = (tau, p, samples = 10_000))]
fn weight_bounds<'py>(py: Python<'py>, tau: f64, p: f64, samples: usize) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &functional::weight_bounds_check(tau, p, samples).map_err(err)?)
}

/// `(ψ_τ, ψ_τ', ψ_τ'')` at `t`.
#[pyfunction]
fn test_weight(tau: f64, p: f64, t: f64) -> PyResult<(f64, f64, f64)> {
    let w = functional::TestWeight::new(tau, p).map_err(err)?;
    Ok((w.psi(t), w.psi_prime(t), w.psi_second(t)))
}

#[pyfunction]
fn e_of_tau(tau: f64, p: f64, mu: f64) -> f64 {
    functional::e_of_tau(tau, p, mu)
}

#[pymodule]
fn dampwave(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ScaleFactor>()?;
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_lifespan, m)?)?;
    m.add_function(wrap_pyfunction!(functionals, m)?)?;
    m.add_function(wrap_pyfunction!(ode_blowup_time, m)?)?;
    m.add_function(wrap_pyfunction!(ode_lifespan_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(fit_loglog, m)?)?;
    m.add_function(wrap_pyfunction!(theorem_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(weight_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(test_weight, m)?)?;
    m.add_function(wrap_pyfunction!(e_of_tau, m)?)?;
    Ok(())
}
