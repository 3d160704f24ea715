//! Run configuration files: `{problem, scale_factor, experiment, output}`.
//!
//! Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridMode;
use crate::scale_factor::ScaleFactor;
use crate::solver::{DataProfile, GridSpec, Nonlinearity, ProblemSpec, Stepping};

/// Problem fields other than the scale factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFields {
    pub n: usize,
    pub p: f64,
    pub mu: f64,
    pub epsilon: f64,
    pub nonlinearity: Nonlinearity,
    pub data: DataProfile,
    pub grid: GridSpec,
    #[serde(default)]
    pub stepping: Stepping,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<GridMode>,
    #[serde(default)]
    pub validation_override: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Largest sweep amplitude.
    pub eps0: Option<f64>,
    pub ratio: f64,
    pub count: usize,
    /// Number of smallest amplitudes used in fits.
    pub tail: usize,
    /// Allowed distance between fitted and reference slopes.
    pub slope_tolerance: f64,
    /// Reference exponent; defaults to the theorem exponent for `(p, μ)`.
    pub exponent: Option<f64>,
    pub workers: Option<usize>,
    /// `τ` values for the functional checks.
    pub tau_list: Option<Vec<f64>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            eps0: None,
            ratio: 0.5,
            count: 8,
            tail: 4,
            slope_tolerance: 0.15,
            exponent: None,
            workers: None,
            tau_list: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Store full fields at this cadence (needed by the functional checks).
    pub snapshot_interval: Option<f64>,
    pub snapshot_until: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub problem: ProblemFields,
    pub scale_factor: ScaleFactor,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)?;
        Ok((Config::from_json(&text)?, text))
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        let p = &self.problem;
        ProblemSpec {
            n: p.n,
            p: p.p,
            mu: p.mu,
            epsilon: p.epsilon,
            nonlinearity: p.nonlinearity,
            data: p.data,
            sf: self.scale_factor.clone(),
            grid: p.grid,
            stepping: p.stepping,
            mode: p.mode,
            validation_override: p.validation_override,
        }
    }

    /// Checks the problem and the experiment block; returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let warnings = self.problem_spec().validate()?;
        let e = &self.experiment;
        if !(e.ratio > 0.0 && e.ratio <= 0.5) {
            return Err(Error::config("experiment.ratio must lie in (0, 1/2]"));
        }
        if e.tail < 4 || e.tail > e.count {
            return Err(Error::config("experiment.tail must lie in [4, count]"));
        }
        if e.eps0.is_some_and(|x| !(x > 0.0)) {
            return Err(Error::config("experiment.eps0 must be positive"));
        }
        if e.workers == Some(0) {
            return Err(Error::config("experiment.workers must be positive"));
        }
        if let Some(taus) = &e.tau_list {
            if taus.iter().any(|&t| !(t > 0.0)) {
                return Err(Error::config("experiment.tau_list entries must be positive"));
            }
        }
        let o = &self.output;
        if o.snapshot_interval.is_some_and(|x| !(x > 0.0)) {
            return Err(Error::config("output.snapshot_interval must be positive"));
        }
        Ok(warnings)
    }
}

/// Preset configurations shipped with the crate.
pub const PRESETS: [(&str, &str); 4] = [
    ("desitter_p2", include_str!("../presets/desitter_p2.json")),
    ("desitter_p3_mu0", include_str!("../presets/desitter_p3_mu0.json")),
    ("flrw_accelerated", include_str!("../presets/flrw_accelerated.json")),
    ("dalembert_validation", include_str!("../presets/dalembert_validation.json")),
];

/// Text of a named preset.
pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for (name, text) in PRESETS {
            let cfg = Config::from_json(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(preset("desitter_p2").unwrap()).unwrap();
        v["problem"]["speed"] = 1.0.into();
        let err = Config::from_json(&v.to_string()).unwrap_err();
        assert!(err.is_config_error());
        let mut v: serde_json::Value = serde_json::from_str(preset("desitter_p2").unwrap()).unwrap();
        v["extra"] = 1.into();
        assert!(Config::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn round_trip() {
        let cfg = Config::from_json(preset("flrw_accelerated").unwrap()).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(Config::from_json(&text).unwrap(), cfg);
    }
}
