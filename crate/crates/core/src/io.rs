//! Run archives: CSV time series and JSON reports.
//!
//! Files are created with `create_new`, so an existing result is never overwritten.

use std::fs::{File, OpenOptions};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::SweepEntry;
use crate::grid::FieldState;
use crate::solver::{HistoryRow, Verdict};

pub const CONFIG_FILE: &str = "config.json";
pub const HISTORY_FILE: &str = "histories.csv";
pub const OUTCOME_FILE: &str = "outcome.json";
pub const SNAPSHOT_FILE: &str = "snapshots.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const FIT_FILE: &str = "fit.json";
pub const SUPPORT_REPORT_FILE: &str = "support_report.json";
pub const FUNCTIONAL_REPORT_FILE: &str = "functional_report.json";

fn create(path: &Path) -> Result<File> {
    OpenOptions::new().write(true).create_new(true).open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::AlreadyExists {
            Error::config(format!("{} already exists; results are append-only", path.display()))
        } else {
            e.into()
        }
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    use std::io::Write;
    create(path)?.write_all(text.as_bytes())?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// `t,supnorm,l1,support_radius,dt`
pub fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>> {
    read_rows(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct SnapshotRow {
    t: f64,
    index: usize,
    x: f64,
    u: f64,
    v: f64,
}

/// `t,index,x,u,v`, one row per grid point per stored time.
pub fn write_snapshots(path: &Path, coords: &[f64], snapshots: &[FieldState]) -> Result<()> {
    write_rows(
        path,
        snapshots.iter().flat_map(|s| {
            (0..coords.len()).map(move |i| SnapshotRow { t: s.t, index: i, x: coords[i], u: s.u[i], v: s.v[i] })
        }),
    )
}

/// Stored snapshots and the grid coordinates they were taken on.
pub fn read_snapshots(path: &Path) -> Result<(Vec<f64>, Vec<FieldState>)> {
    let rows: Vec<SnapshotRow> = read_rows(path)?;
    let mut coords = Vec::new();
    let mut states: Vec<FieldState> = Vec::new();
    for row in rows {
        if row.index == 0 {
            states.push(FieldState { t: row.t, u: Vec::new(), v: Vec::new() });
        }
        let first = states.len() == 1;
        let Some(state) = states.last_mut() else {
            return Err(Error::config("snapshot file does not start at index 0"));
        };
        if row.index != state.u.len() || row.t != state.t {
            return Err(Error::config(format!("snapshot rows out of order at t = {}", row.t)));
        }
        if first {
            coords.push(row.x);
        } else if coords.get(row.index) != Some(&row.x) {
            return Err(Error::config("snapshots were taken on different grids"));
        }
        state.u.push(row.u);
        state.v.push(row.v);
    }
    if states.iter().any(|s| s.u.len() != coords.len()) {
        return Err(Error::config("truncated snapshot"));
    }
    Ok((coords, states))
}

/// One line of `sweep.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub verdict: Verdict,
    pub lifespan: Option<f64>,
    pub lifespan_fine: Option<f64>,
    pub refinement_rel_diff: Option<f64>,
    pub within_band: bool,
}

impl From<&SweepEntry> for SweepRow {
    fn from(e: &SweepEntry) -> Self {
        SweepRow {
            epsilon: e.epsilon,
            verdict: e.outcome.verdict,
            lifespan: e.outcome.lifespan,
            lifespan_fine: e.outcome.refinement.get(1).and_then(|r| r.lifespan),
            refinement_rel_diff: e.outcome.refinement_rel_diff,
            within_band: e.outcome.refinement_within_band,
        }
    }
}

impl SweepRow {
    pub fn point(&self) -> Option<(f64, f64)> {
        match (self.verdict, self.lifespan) {
            (Verdict::BlewUp, Some(t)) => Some((self.epsilon, t)),
            _ => None,
        }
    }
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepRow>> {
    read_rows(path)
}
