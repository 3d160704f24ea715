//! Time-dependent coefficients `a(t)` of the wave operator and their light-cone radius
//! `A(t) = ∫₀ᵗ √a(s) ds`.
//!
//! Admissible coefficients are positive, non-increasing and have an integrable square
//! root, so that `A(∞)` is finite. The constant coefficient is kept for validation runs
//! (d'Alembert) but is never admissible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{adaptive_simpson, DEFAULT_TOL};

/// Sample table of a piecewise-linear coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    times: Vec<f64>,
    values: Vec<f64>,
    /// `A` at each knot.
    cumulative: Vec<f64>,
    tail_alpha: Option<f64>,
}

impl Table {
    pub fn new(samples: &[[f64; 2]], tail_alpha: Option<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::param("tabulated coefficient needs at least two samples"));
        }
        if samples[0][0] != 0.0 {
            return Err(Error::param("tabulated coefficient must start at t = 0"));
        }
        for w in samples.windows(2) {
            if !(w[1][0] > w[0][0]) {
                return Err(Error::param("tabulated times must be strictly increasing"));
            }
        }
        for s in samples {
            if !s[0].is_finite() || !s[1].is_finite() || s[1] <= 0.0 {
                return Err(Error::param(format!(
                    "tabulated coefficient must be finite and positive, got a({}) = {}",
                    s[0], s[1]
                )));
            }
        }
        if let Some(alpha) = tail_alpha {
            if !(alpha > 0.0) || !alpha.is_finite() {
                return Err(Error::param("tail exponent must be positive"));
            }
        }
        let times: Vec<f64> = samples.iter().map(|s| s[0]).collect();
        let values: Vec<f64> = samples.iter().map(|s| s[1]).collect();
        let mut cumulative = Vec::with_capacity(times.len());
        cumulative.push(0.0);
        for i in 0..times.len() - 1 {
            let seg = segment_integral(times[i], values[i], times[i + 1], values[i + 1], times[i + 1])?;
            cumulative.push(cumulative[i] + seg);
        }
        Ok(Table { times, values, cumulative, tail_alpha })
    }

    pub fn samples(&self) -> Vec<[f64; 2]> {
        self.times.iter().zip(&self.values).map(|(&t, &a)| [t, a]).collect()
    }

    pub fn tail_alpha(&self) -> Option<f64> {
        self.tail_alpha
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    fn segment(&self, t: f64) -> Result<usize> {
        if t > self.last_time() {
            return Err(Error::OutOfDomain {
                t,
                reason: format!("beyond the last tabulated sample {}", self.last_time()),
            });
        }
        // index i with times[i] <= t < times[i+1]; the last knot belongs to the last segment
        let idx = self.times.partition_point(|&x| x <= t);
        Ok(idx.saturating_sub(1).min(self.times.len() - 2))
    }

    fn value(&self, t: f64) -> Result<f64> {
        let i = self.segment(t)?;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let (a0, a1) = (self.values[i], self.values[i + 1]);
        Ok(a0 + (a1 - a0) * (t - t0) / (t1 - t0))
    }

    fn slope(&self, t: f64) -> Result<f64> {
        let i = self.segment(t)?;
        Ok((self.values[i + 1] - self.values[i]) / (self.times[i + 1] - self.times[i]))
    }

    fn horizon(&self, t: f64) -> Result<f64> {
        let i = self.segment(t)?;
        let partial = segment_integral(self.times[i], self.values[i], self.times[i + 1], self.values[i + 1], t)?;
        Ok(self.cumulative[i] + partial)
    }

    fn non_increasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0])
    }
}

/// `∫_{t0}^{t} √(linear interpolant)`, by quadrature.
fn segment_integral(t0: f64, a0: f64, t1: f64, a1: f64, t: f64) -> Result<f64> {
    let slope = (a1 - a0) / (t1 - t0);
    Ok(adaptive_simpson(|s| (a0 + slope * (s - t0)).sqrt(), t0, t, DEFAULT_TOL)?.value)
}

/// Coefficient `a(t)` multiplying the Laplacian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScaleFactorSpec", into = "ScaleFactorSpec")]
pub enum ScaleFactor {
    /// `a(t) = e^{−2Ht}`.
    DeSitter { h: f64 },
    /// `a(t) = a₀(1+t)^{−α}`. The FLRW metric `t^{4/(n(1+w))}` maps to `α = 4/(n(1+w))`,
    /// shifted by one to stay regular at `t = 0`.
    PowerLaw { a0: f64, alpha: f64 },
    Constant { c: f64 },
    Tabulated(Table),
}

/// Serialized form, `{"kind": ..., <params>}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScaleFactorSpec {
    DeSitter {
        #[serde(rename = "H")]
        h: f64,
    },
    PowerLaw {
        a0: f64,
        alpha: f64,
    },
    Constant {
        c: f64,
    },
    /// Power law from the FLRW parameters, `α = 4/(n(1+w))`, `a₀ = 1`.
    Flrw {
        n: usize,
        w: f64,
    },
    Tabulated {
        table: Vec<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tail_alpha: Option<f64>,
    },
}

impl TryFrom<ScaleFactorSpec> for ScaleFactor {
    type Error = Error;

    fn try_from(spec: ScaleFactorSpec) -> Result<Self> {
        match spec {
            ScaleFactorSpec::DeSitter { h } => ScaleFactor::de_sitter(h),
            ScaleFactorSpec::PowerLaw { a0, alpha } => ScaleFactor::power_law(a0, alpha),
            ScaleFactorSpec::Constant { c } => ScaleFactor::constant(c),
            ScaleFactorSpec::Flrw { n, w } => ScaleFactor::flrw(n, w),
            ScaleFactorSpec::Tabulated { table, tail_alpha } => ScaleFactor::tabulated(&table, tail_alpha),
        }
    }
}

impl From<ScaleFactor> for ScaleFactorSpec {
    fn from(sf: ScaleFactor) -> Self {
        match sf {
            ScaleFactor::DeSitter { h } => ScaleFactorSpec::DeSitter { h },
            ScaleFactor::PowerLaw { a0, alpha } => ScaleFactorSpec::PowerLaw { a0, alpha },
            ScaleFactor::Constant { c } => ScaleFactorSpec::Constant { c },
            ScaleFactor::Tabulated(t) => ScaleFactorSpec::Tabulated { table: t.samples(), tail_alpha: t.tail_alpha },
        }
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::param(format!("{name} must be finite and positive, got {v}")))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::OutOfDomain { t, reason: "negative time".into() });
    }
    Ok(())
}

/// Result of [`ScaleFactor::check_admissible`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub positivity: bool,
    pub monotonicity: bool,
    pub integrable_root: bool,
    /// `A(∞)` when finite.
    pub horizon_limit: Option<f64>,
}

impl Admissibility {
    pub fn admissible(&self) -> bool {
        self.positivity && self.monotonicity && self.integrable_root
    }
}

impl ScaleFactor {
    pub fn de_sitter(h: f64) -> Result<Self> {
        Ok(ScaleFactor::DeSitter { h: positive("H", h)? })
    }

    pub fn power_law(a0: f64, alpha: f64) -> Result<Self> {
        Ok(ScaleFactor::PowerLaw { a0: positive("a0", a0)?, alpha: positive("alpha", alpha)? })
    }

    /// Power law for the accelerated FLRW family with equation of state `w`:
    /// `α = 4/(n(1+w))`.
    pub fn flrw(n: usize, w: f64) -> Result<Self> {
        if n == 0 || !(w > -1.0) {
            return Err(Error::param("FLRW mapping needs n >= 1 and w > -1"));
        }
        ScaleFactor::power_law(1.0, 4.0 / (n as f64 * (1.0 + w)))
    }

    pub fn constant(c: f64) -> Result<Self> {
        Ok(ScaleFactor::Constant { c: positive("c", c)? })
    }

    pub fn tabulated(samples: &[[f64; 2]], tail_alpha: Option<f64>) -> Result<Self> {
        Ok(ScaleFactor::Tabulated(Table::new(samples, tail_alpha)?))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ScaleFactor::DeSitter { .. } => "de_sitter",
            ScaleFactor::PowerLaw { .. } => "power_law",
            ScaleFactor::Constant { .. } => "constant",
            ScaleFactor::Tabulated(_) => "tabulated",
        }
    }

    /// Largest time at which the coefficient is defined.
    pub fn max_time(&self) -> f64 {
        match self {
            ScaleFactor::Tabulated(t) => t.last_time(),
            _ => f64::INFINITY,
        }
    }

    /// `a(t)`.
    pub fn value(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        let a = match self {
            ScaleFactor::DeSitter { h } => (-2.0 * h * t).exp(),
            ScaleFactor::PowerLaw { a0, alpha } => a0 * (1.0 + t).powf(-alpha),
            ScaleFactor::Constant { c } => *c,
            ScaleFactor::Tabulated(table) => table.value(t)?,
        };
        Ok(a)
    }

    /// `a'(t)`. For tabulated coefficients this is the one-sided slope of the segment
    /// containing `t` (see [`ScaleFactor::derivative_is_exact`]).
    pub fn derivative(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        let d = match self {
            ScaleFactor::DeSitter { h } => -2.0 * h * (-2.0 * h * t).exp(),
            ScaleFactor::PowerLaw { a0, alpha } => -alpha * a0 * (1.0 + t).powf(-alpha - 1.0),
            ScaleFactor::Constant { .. } => 0.0,
            ScaleFactor::Tabulated(table) => table.slope(t)?,
        };
        Ok(d)
    }

    pub fn derivative_is_exact(&self) -> bool {
        !matches!(self, ScaleFactor::Tabulated(_))
    }

    /// Light-cone radius `A(t)`, closed form where one exists.
    pub fn horizon(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        let a = match self {
            ScaleFactor::DeSitter { h } => -(-h * t).exp_m1() / h,
            ScaleFactor::PowerLaw { a0, alpha } => {
                let k = 1.0 - 0.5 * alpha;
                if k.abs() < 1e-12 {
                    a0.sqrt() * t.ln_1p()
                } else {
                    a0.sqrt() * ((k * t.ln_1p()).exp_m1()) / k
                }
            }
            ScaleFactor::Constant { c } => c.sqrt() * t,
            ScaleFactor::Tabulated(table) => table.horizon(t)?,
        };
        Ok(a)
    }

    /// `A(t)` by adaptive Simpson quadrature of `√a`, regardless of kind.
    pub fn horizon_quadrature(&self, t: f64, tol: f64) -> Result<f64> {
        check_time(t)?;
        if t > self.max_time() {
            return Err(Error::OutOfDomain { t, reason: "beyond the last tabulated sample".into() });
        }
        let r = adaptive_simpson(|s| self.value(s).map(f64::sqrt).unwrap_or(f64::NAN), 0.0, t, tol)?;
        Ok(r.value)
    }

    /// `A(∞)`, or `f64::INFINITY` when `√a` is not integrable (or not known to be).
    pub fn horizon_limit(&self) -> f64 {
        match self {
            ScaleFactor::DeSitter { h } => 1.0 / h,
            ScaleFactor::PowerLaw { a0, alpha } if *alpha > 2.0 => a0.sqrt() * 2.0 / (alpha - 2.0),
            ScaleFactor::PowerLaw { .. } | ScaleFactor::Constant { .. } => f64::INFINITY,
            ScaleFactor::Tabulated(table) => match table.tail_alpha {
                // a(t) = a_last ((1+t)/(1+t_last))^{-α} beyond the table
                Some(alpha) if alpha > 2.0 => {
                    let tl = table.last_time();
                    let al = *table.values.last().unwrap();
                    table.cumulative.last().unwrap() + al.sqrt() * (1.0 + tl) / (0.5 * alpha - 1.0)
                }
                _ => f64::INFINITY,
            },
        }
    }

    /// `A⁻¹(s)` for `0 ≤ s < A(∞)`.
    pub fn horizon_inverse(&self, s: f64) -> Result<f64> {
        let limit = self.horizon_limit();
        if s.is_nan() || s < 0.0 {
            return Err(Error::param(format!("horizon inverse needs s >= 0, got {s}")));
        }
        if s >= limit {
            return Err(Error::HorizonInverse { s, limit });
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        let t = match self {
            ScaleFactor::DeSitter { h } => -(-h * s).ln_1p() / h,
            ScaleFactor::PowerLaw { a0, alpha } => {
                let k = 1.0 - 0.5 * alpha;
                let x = s / a0.sqrt();
                if k.abs() < 1e-12 {
                    x.exp_m1()
                } else {
                    ((k * x).ln_1p() / k).exp_m1()
                }
            }
            ScaleFactor::Constant { c } => s / c.sqrt(),
            ScaleFactor::Tabulated(table) => {
                let a_end = *table.cumulative.last().unwrap();
                if s >= a_end {
                    return Err(Error::HorizonInverse { s, limit: a_end });
                }
                let i = table.cumulative.partition_point(|&c| c <= s) - 1;
                self.invert_bracketed(s, table.times[i], table.times[i + 1], DEFAULT_TOL)?
            }
        };
        Ok(t)
    }

    /// Safeguarded Newton iteration on the increasing function `A` inside `[lo, hi]`.
    fn invert_bracketed(&self, s: f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let g = self.horizon(t)? - s;
            if g.abs() <= tol {
                return Ok(t);
            }
            if g > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let newton = t - g / self.value(t)?.sqrt();
            t = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo < f64::EPSILON * hi.max(1.0) {
                return Ok(t);
            }
        }
        Ok(t)
    }

    pub fn check_admissible(&self) -> Admissibility {
        let (positivity, monotonicity) = match self {
            // parameters are validated positive on construction
            ScaleFactor::DeSitter { .. } | ScaleFactor::PowerLaw { .. } | ScaleFactor::Constant { .. } => (true, true),
            ScaleFactor::Tabulated(table) => (table.values.iter().all(|&a| a > 0.0), table.non_increasing()),
        };
        let limit = self.horizon_limit();
        Admissibility {
            positivity,
            monotonicity,
            integrable_root: limit.is_finite(),
            horizon_limit: limit.is_finite().then_some(limit),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn value_examples() {
        let ds = ScaleFactor::de_sitter(1.0).unwrap();
        assert_eq!(ds.value(0.0).unwrap(), 1.0);
        assert_relative_eq!(ds.value(2f64.ln()).unwrap(), 0.25, epsilon = 1e-15);
        assert_eq!(ScaleFactor::constant(1.0).unwrap().value(5.0).unwrap(), 1.0);
    }

    #[test]
    fn negative_time_rejected() {
        let ds = ScaleFactor::de_sitter(1.0).unwrap();
        assert!(matches!(ds.value(-1.0), Err(Error::OutOfDomain { .. })));
        assert!(ds.horizon(-0.5).is_err());
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(ScaleFactor::de_sitter(1.0).unwrap().derivative(0.0).unwrap(), -2.0);
        assert_eq!(ScaleFactor::constant(1.0).unwrap().derivative(3.0).unwrap(), 0.0);
        assert_eq!(ScaleFactor::power_law(1.0, 4.0).unwrap().derivative(0.0).unwrap(), -4.0);
    }

    #[test]
    fn horizon_examples() {
        let ds = ScaleFactor::de_sitter(1.0).unwrap();
        assert_eq!(ds.horizon(0.0).unwrap(), 0.0);
        assert_relative_eq!(ds.horizon(50.0).unwrap(), 1.0, epsilon = 1e-15);
        let pl = ScaleFactor::power_law(1.0, 4.0).unwrap();
        assert_relative_eq!(pl.horizon(1.0).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn horizon_limit_examples() {
        assert_eq!(ScaleFactor::de_sitter(2.0).unwrap().horizon_limit(), 0.5);
        assert!(ScaleFactor::constant(1.0).unwrap().horizon_limit().is_infinite());
        assert_eq!(ScaleFactor::power_law(1.0, 4.0).unwrap().horizon_limit(), 1.0);
        assert!(ScaleFactor::power_law(1.0, 2.0).unwrap().horizon_limit().is_infinite());
    }

    #[test]
    fn horizon_inverse_examples() {
        let ds = ScaleFactor::de_sitter(1.0).unwrap();
        assert_eq!(ds.horizon_inverse(0.0).unwrap(), 0.0);
        assert_relative_eq!(ds.horizon_inverse(1.0 - (-1f64).exp()).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(ScaleFactor::constant(1.0).unwrap().horizon_inverse(3.0).unwrap(), 3.0);
        assert!(matches!(ds.horizon_inverse(1.0), Err(Error::HorizonInverse { .. })));
        assert!(ds.horizon_inverse(1.5).is_err());
    }

    #[test]
    fn admissibility_examples() {
        let ds = ScaleFactor::de_sitter(1.0).unwrap().check_admissible();
        assert!(ds.admissible());
        assert_eq!(ds.horizon_limit, Some(1.0));
        let c = ScaleFactor::constant(1.0).unwrap().check_admissible();
        assert!(c.positivity && c.monotonicity && !c.integrable_root);
        assert!(!ScaleFactor::power_law(1.0, 1.0).unwrap().check_admissible().integrable_root);
        assert!(!ScaleFactor::power_law(1.0, 2.0).unwrap().check_admissible().admissible());
        assert!(ScaleFactor::power_law(1.0, 2.0 + 1e-9).unwrap().check_admissible().admissible());
    }

    #[test]
    fn flrw_mapping() {
        // w = -2/3 in three dimensions gives α = 4
        let sf = ScaleFactor::flrw(3, -2.0 / 3.0).unwrap();
        match sf {
            ScaleFactor::PowerLaw { alpha, .. } => assert_relative_eq!(alpha, 4.0, epsilon = 1e-12),
            _ => unreachable!(),
        }
        // the boundary w = 2/n - 1 gives α = 2, not admissible
        let edge = ScaleFactor::flrw(3, 2.0 / 3.0 - 1.0).unwrap();
        assert!(!edge.check_admissible().admissible());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(ScaleFactor::de_sitter(0.0).is_err());
        assert!(ScaleFactor::de_sitter(f64::NAN).is_err());
        assert!(ScaleFactor::power_law(-1.0, 3.0).is_err());
        assert!(ScaleFactor::constant(-2.0).is_err());
    }

    #[test]
    fn tabulated_interpolates_and_integrates() {
        let sf = ScaleFactor::tabulated(&[[0.0, 1.0], [1.0, 0.5], [3.0, 0.25]], None).unwrap();
        assert_relative_eq!(sf.value(0.5).unwrap(), 0.75, epsilon = 1e-15);
        assert_relative_eq!(sf.value(2.0).unwrap(), 0.375, epsilon = 1e-15);
        assert_relative_eq!(sf.derivative(0.5).unwrap(), -0.5);
        assert!(!sf.derivative_is_exact());
        assert!(sf.value(3.5).is_err());
        // ∫₀¹ √(1 - s/2) ds = (4/3)(1 - (1/2)^{3/2})
        let exact = 4.0 / 3.0 * (1.0 - 0.5f64.powf(1.5));
        assert_relative_eq!(sf.horizon(1.0).unwrap(), exact, epsilon = 1e-10);
        let t = sf.horizon_inverse(0.9).unwrap();
        assert!((sf.horizon(t).unwrap() - 0.9).abs() <= 1e-10);
        assert!(sf.horizon_limit().is_infinite());
        let report = sf.check_admissible();
        assert!(report.positivity && report.monotonicity && !report.integrable_root);
    }

    #[test]
    fn tabulated_validation() {
        assert!(ScaleFactor::tabulated(&[[0.0, 1.0]], None).is_err());
        assert!(ScaleFactor::tabulated(&[[0.0, 1.0], [0.0, 0.5]], None).is_err());
        assert!(ScaleFactor::tabulated(&[[0.0, 1.0], [1.0, 0.0]], None).is_err());
        assert!(ScaleFactor::tabulated(&[[0.5, 1.0], [1.0, 0.5]], None).is_err());
        let rising = ScaleFactor::tabulated(&[[0.0, 1.0], [1.0, 2.0]], None).unwrap();
        assert!(!rising.check_admissible().monotonicity);
    }

    #[test]
    fn tabulated_tail_gives_finite_limit() {
        let sf = ScaleFactor::tabulated(&[[0.0, 1.0], [1.0, 0.25]], Some(4.0)).unwrap();
        let lim = sf.horizon_limit();
        // cumulative to t=1 plus √0.25 · 2 / (2 - 1)
        assert_relative_eq!(lim, sf.horizon(1.0).unwrap() + 1.0, epsilon = 1e-12);
        assert!(sf.check_admissible().admissible());
    }

    #[test]
    fn serde_round_trip_and_unknown_keys() {
        let sf: ScaleFactor = serde_json::from_str(r#"{"kind":"de_sitter","H":1.5}"#).unwrap();
        assert_eq!(sf, ScaleFactor::DeSitter { h: 1.5 });
        let json = serde_json::to_string(&sf).unwrap();
        assert_eq!(json, r#"{"kind":"de_sitter","H":1.5}"#);
        let pl: ScaleFactor = serde_json::from_str(r#"{"kind":"power_law","a0":1,"alpha":4}"#).unwrap();
        assert_eq!(pl.horizon_limit(), 1.0);
        let tab: ScaleFactor = serde_json::from_str(r#"{"kind":"tabulated","table":[[0,1],[2,0.5]]}"#).unwrap();
        assert_eq!(tab.kind_name(), "tabulated");
        assert!(serde_json::from_str::<ScaleFactor>(r#"{"kind":"de_sitter","H":1,"x":2}"#).is_err());
        assert!(serde_json::from_str::<ScaleFactor>(r#"{"kind":"de_sitter","H":-1}"#).is_err());
    }
}
