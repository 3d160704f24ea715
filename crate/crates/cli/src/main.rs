//! `dampwave`: command-line front end for the solver, oracle and diagnostics.
//!
//! Exit status: 0 on success, 1 when a check fails, 2 on configuration errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use dampwave_core::config::{preset, Config};
use dampwave_core::experiments::{
    fit_loglog, matched_oracle_sweep, monotonicity_violations, oracle_points, run_sweep, slope_vs_tail,
    sweep_epsilons, theorem_exponent, SweepFit,
};
use dampwave_core::functional::{check_ce_inequality, functionals_on_grid, poincare_check, CeReport, PoincareReport};
use dampwave_core::geometry::{check_support_containment, SupportReport};
use dampwave_core::io::{self, SweepRow};
use dampwave_core::oracle::{ode_lifespan_sweep_with, OdeSpec};
use dampwave_core::scale_factor::ScaleFactor;
use dampwave_core::solver::{estimate_lifespan_with, HistoryRow, RunOptions, SimulationOutcome};

#[derive(Parser)]
#[command(name = "dampwave", version, about = "Blow-up experiments for damped waves with decaying speed")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one problem at N and 2N−1 points and store the run directory.
    Simulate(SimulateArgs),
    /// Lifespan sweep over geometric amplitudes with a log-log fit.
    Sweep(SweepArgs),
    /// Lifespan sweep of the flat ODE.
    Oracle(OracleArgs),
    /// Refit a stored sweep.
    Fit(FitArgs),
    /// Check support containment of a stored run.
    VerifySupport(VerifySupportArgs),
    /// Evaluate the test-function identity and inequalities on a stored run.
    VerifyFunctional(VerifyFunctionalArgs),
    /// Admissibility and horizon of a scale factor.
    CheckScaleFactor(CheckScaleFactorArgs),
}

#[derive(Args)]
struct ConfigSource {
    /// JSON config file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Name of a shipped preset.
    #[arg(long)]
    preset: Option<String>,
}

impl ConfigSource {
    fn load(&self) -> Result<(Config, String), CliError> {
        let text = match (&self.config, &self.preset) {
            (Some(path), _) => {
                std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
            }
            (None, Some(name)) => {
                preset(name).ok_or_else(|| CliError::config(format!("unknown preset {name}")))?.to_string()
            }
            (None, None) => return Err(CliError::config("one of --config or --preset is required")),
        };
        let cfg = Config::from_json(&text)?;
        Ok((cfg, text))
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: ConfigSource,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: ConfigSource,
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, env = "DAMPWAVE_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    p: f64,
    #[arg(long)]
    mu: f64,
    #[arg(long)]
    eps_start: f64,
    #[arg(long, default_value_t = 0.5)]
    eps_ratio: f64,
    #[arg(long, default_value_t = 8)]
    count: usize,
    #[arg(long, default_value_t = 1.0)]
    v0: f64,
    #[arg(long, default_value_t = 1.0)]
    v1: f64,
    #[arg(long, default_value_t = 4)]
    tail: usize,
    /// Allowed distance from the theorem exponent.
    #[arg(long, default_value_t = 0.1)]
    tolerance: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Sweep directory containing sweep.csv and config.json.
    #[arg(long)]
    sweep: PathBuf,
    #[arg(long, default_value_t = 4)]
    tail: usize,
    /// Reference exponent; defaults to the theorem exponent.
    #[arg(long, allow_hyphen_values = true)]
    exponent: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct VerifySupportArgs {
    #[arg(long)]
    run: PathBuf,
    /// Slack in grid spacings.
    #[arg(long, default_value_t = 2.0)]
    slack_cells: f64,
}

#[derive(Args)]
struct VerifyFunctionalArgs {
    #[arg(long)]
    run: PathBuf,
    /// Comma-separated τ values; defaults to experiment.tau_list.
    #[arg(long, value_delimiter = ',')]
    tau_list: Option<Vec<f64>>,
}

#[derive(Args)]
struct CheckScaleFactorArgs {
    /// Inline scale-factor JSON, e.g. '{"kind":"de_sitter","H":1}'.
    #[arg(long, conflicts_with_all = ["config", "preset"])]
    sf: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
}

/// Failure with the exit status it maps to.
#[derive(Debug)]
struct CliError {
    code: u8,
    kind: &'static str,
    message: String,
}

impl CliError {
    fn config(msg: impl Into<String>) -> Self {
        CliError { code: 2, kind: "config", message: msg.into() }
    }
}

impl From<dampwave_core::Error> for CliError {
    fn from(e: dampwave_core::Error) -> Self {
        let config = e.is_config_error() || matches!(e, dampwave_core::Error::Io(_));
        CliError { code: if config { 2 } else { 1 }, kind: if config { "config" } else { "runtime" }, message: e.to_string() }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<dampwave_core::Error>() {
            Ok(core) => core.into(),
            Err(e) => CliError { code: 1, kind: "runtime", message: format!("{e:#}") },
        }
    }
}

/// Outcome of a subcommand: `true` when every check passed.
type Outcome = Result<bool, CliError>;

fn print_json(value: &impl Serialize) {
    use std::io::Write;
    // a closed pipe (`| head`) is not an error for a report printer
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

fn out_dir(flag: &Option<PathBuf>, cfg: &Config) -> Result<PathBuf, CliError> {
    let dir = flag.clone().or_else(|| cfg.output.dir.clone()).ok_or_else(|| CliError::config("no output directory"))?;
    std::fs::create_dir_all(&dir).map_err(|e| CliError::config(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

#[derive(Serialize)]
struct StoredOutcome<'a> {
    #[serde(flatten)]
    outcome: &'a SimulationOutcome,
    support_tol: f64,
    support: SupportReport,
    support_fine: SupportReport,
}

fn simulate(args: &SimulateArgs) -> Outcome {
    let (cfg, text) = args.source.load()?;
    cfg.validate()?;
    let spec = cfg.problem_spec();
    let dir = out_dir(&args.out, &cfg)?;
    if dir.join(io::CONFIG_FILE).exists() {
        return Err(CliError::config(format!("{} already holds a run; results are append-only", dir.display())));
    }
    let opts = RunOptions { snapshot_interval: cfg.output.snapshot_interval, snapshot_until: cfg.output.snapshot_until };
    let outcome = estimate_lifespan_with(&spec, &opts)?;
    let support = outcome.primary.check_support(&spec, 2.0)?;
    let support_fine = outcome.fine.check_support(&spec, 2.0)?;

    io::write_text(&dir.join(io::CONFIG_FILE), &text)?;
    io::write_history(&dir.join(io::HISTORY_FILE), &outcome.primary.history)?;
    io::write_history(&dir.join("histories_fine.csv"), &outcome.fine.history)?;
    if opts.snapshot_interval.is_some() {
        io::write_snapshots(&dir.join(io::SNAPSHOT_FILE), &outcome.primary.grid.coords, &outcome.primary.snapshots)?;
    }
    let stored = StoredOutcome { outcome: &outcome, support_tol: outcome.primary.support_tol, support, support_fine };
    io::write_json(&dir.join(io::OUTCOME_FILE), &stored)?;
    print_json(&json!({
        "verdict": outcome.verdict,
        "lifespan": outcome.lifespan,
        "refinement_rel_diff": outcome.refinement_rel_diff,
        "refinement_within_band": outcome.refinement_within_band,
        "support_pass": stored.support.pass && stored.support_fine.pass,
        "warnings": outcome.warnings,
        "out": dir,
    }));
    Ok(outcome.refinement_within_band)
}

#[derive(Serialize)]
struct FitReport {
    sweep: Option<SweepFit>,
    oracle: Option<SweepFit>,
    /// `|slope − oracle slope|`.
    oracle_gap: Option<f64>,
    slope_vs_tail: Vec<(usize, f64)>,
    monotonicity_violations: Vec<usize>,
    refinement_failures: Vec<f64>,
}

fn sweep_fit_report(cfg: &Config, rows: &[SweepRow], tail: usize, exponent: f64, tolerance: f64) -> FitReport {
    let points: Vec<(f64, f64)> = rows.iter().filter_map(SweepRow::point).collect();
    let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let sweep = fit_loglog(&points, tail, exponent, tolerance).ok();
    let oracle = matched_oracle_sweep(&cfg.problem_spec(), &eps)
        .ok()
        .and_then(|o| fit_loglog(&oracle_points(&o), tail, exponent, tolerance).ok());
    let oracle_gap = match (&sweep, &oracle) {
        (Some(s), Some(o)) => Some((s.slope - o.slope).abs()),
        _ => None,
    };
    FitReport {
        slope_vs_tail: slope_vs_tail(&points, &(4..=points.len()).collect::<Vec<_>>()),
        monotonicity_violations: monotonicity_violations(&points),
        refinement_failures: rows.iter().filter(|r| !r.within_band).map(|r| r.epsilon).collect(),
        sweep,
        oracle,
        oracle_gap,
    }
}

fn fit_passes(report: &FitReport, tolerance: f64) -> bool {
    let slope_ok = match (report.sweep.as_ref(), report.oracle_gap) {
        (Some(s), Some(gap)) => s.pass || gap <= tolerance,
        (Some(s), None) => s.pass,
        _ => false,
    };
    slope_ok && report.monotonicity_violations.is_empty()
}

fn reference_exponent(cfg: &Config) -> f64 {
    cfg.experiment.exponent.unwrap_or_else(|| theorem_exponent(cfg.problem.p, cfg.problem.mu))
}

fn sweep(args: &SweepArgs) -> Outcome {
    let (cfg, text) = args.source.load()?;
    cfg.validate()?;
    let e = &cfg.experiment;
    let eps0 = args.eps0.or(e.eps0).ok_or_else(|| CliError::config("sweep needs --eps0 or experiment.eps0"))?;
    let ratio = args.ratio.unwrap_or(e.ratio);
    let count = args.count.unwrap_or(e.count);
    let workers = args.workers.or(e.workers).unwrap_or(0);
    let dir = out_dir(&args.out, &cfg)?;
    if dir.join(io::SWEEP_FILE).exists() {
        return Err(CliError::config(format!("{} already holds a sweep; sweeps are append-only", dir.display())));
    }
    let eps = sweep_epsilons(eps0, ratio, count);
    let entries = run_sweep(&cfg.problem_spec(), &eps, workers)?;

    io::write_text(&dir.join(io::CONFIG_FILE), &text)?;
    for (k, entry) in entries.iter().enumerate() {
        let run_dir = dir.join(format!("run_{k:02}"));
        std::fs::create_dir_all(&run_dir).map_err(dampwave_core::Error::from)?;
        io::write_history(&run_dir.join(io::HISTORY_FILE), &entry.outcome.primary.history)?;
        io::write_json(&run_dir.join(io::OUTCOME_FILE), &entry.outcome)?;
    }
    let rows: Vec<SweepRow> = entries.iter().map(SweepRow::from).collect();
    io::write_sweep(&dir.join(io::SWEEP_FILE), &rows)?;
    let report = sweep_fit_report(&cfg, &rows, e.tail.min(rows.len()), reference_exponent(&cfg), e.slope_tolerance);
    io::write_json(&dir.join(io::FIT_FILE), &report)?;
    print_json(&report);
    Ok(fit_passes(&report, e.slope_tolerance))
}

fn oracle(args: &OracleArgs) -> Outcome {
    let template = OdeSpec::new(args.p, args.mu, args.v0, args.v1);
    let eps = sweep_epsilons(args.eps_start, args.eps_ratio, args.count);
    let points = ode_lifespan_sweep_with(&template, &eps)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::config(format!("{}: {e}", args.out.display())))?;
    let sweep_path = args.out.join(io::SWEEP_FILE);
    let mut w = csv::Writer::from_writer(
        std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&sweep_path)
            .with_context(|| format!("{} already exists or cannot be created", sweep_path.display()))?,
    );
    for p in &points {
        w.serialize(p).context("writing sweep.csv")?;
    }
    w.flush().context("writing sweep.csv")?;
    let fit = fit_loglog(&oracle_points(&points), args.tail, theorem_exponent(args.p, args.mu), args.tolerance)?;
    io::write_json(&args.out.join(io::FIT_FILE), &fit)?;
    print_json(&fit);
    Ok(fit.pass)
}

fn fit(args: &FitArgs) -> Outcome {
    let (cfg, _) = Config::load(&args.sweep.join(io::CONFIG_FILE))?;
    let rows = io::read_sweep(&args.sweep.join(io::SWEEP_FILE))?;
    let tolerance = args.tolerance.unwrap_or(cfg.experiment.slope_tolerance);
    let exponent = args.exponent.unwrap_or_else(|| reference_exponent(&cfg));
    if args.tail < 4 || args.tail > rows.len() {
        return Err(CliError::config(format!("tail must lie in [4, {}]", rows.len())));
    }
    let report = sweep_fit_report(&cfg, &rows, args.tail, exponent, tolerance);
    io::write_json(&args.sweep.join(format!("fit_tail{}.json", args.tail)), &report)?;
    print_json(&report);
    Ok(fit_passes(&report, tolerance))
}

fn load_run(dir: &Path) -> Result<(Config, serde_json::Value), CliError> {
    let (cfg, _) = Config::load(&dir.join(io::CONFIG_FILE))?;
    let outcome: serde_json::Value = io::read_json(&dir.join(io::OUTCOME_FILE))?;
    Ok((cfg, outcome))
}

fn resolution_spacing(outcome: &serde_json::Value, k: usize) -> anyhow::Result<f64> {
    match outcome["refinement"][k]["spacing"].as_f64() {
        Some(h) => Ok(h),
        None => bail!("outcome.json lacks refinement[{k}].spacing"),
    }
}

fn verify_support(args: &VerifySupportArgs) -> Outcome {
    let (cfg, outcome) = load_run(&args.run)?;
    let spec = cfg.problem_spec();
    let mut reports = Vec::new();
    for (k, file) in [(0, io::HISTORY_FILE), (1, "histories_fine.csv")] {
        let path = args.run.join(file);
        if !path.exists() {
            continue;
        }
        let history: Vec<HistoryRow> = io::read_history(&path)?;
        let h = resolution_spacing(&outcome, k)?;
        let pairs: Vec<(f64, f64)> = history.iter().map(|r| (r.t, r.support_radius)).collect();
        reports.push(check_support_containment(&pairs, spec.data.radius, &spec.sf, args.slack_cells * h)?);
    }
    if reports.is_empty() {
        return Err(CliError::config("run directory has no histories"));
    }
    let pass = reports.iter().all(|r| r.pass);
    let report = json!({
        "pass": pass,
        "max_excess": reports.iter().map(|r| r.max_excess).fold(f64::NEG_INFINITY, f64::max),
        "violations": reports.iter().flat_map(|r| r.violations.iter()).collect::<Vec<_>>(),
        "resolutions": reports,
    });
    io::write_json(&args.run.join(io::SUPPORT_REPORT_FILE), &report)?;
    print_json(&report);
    Ok(pass)
}

#[derive(Serialize)]
struct PoincareRow {
    t: f64,
    radius: f64,
    #[serde(flatten)]
    report: PoincareReport,
}

fn verify_functional(args: &VerifyFunctionalArgs) -> Outcome {
    let (cfg, outcome) = load_run(&args.run)?;
    let spec = cfg.problem_spec();
    let taus = args
        .tau_list
        .clone()
        .or_else(|| cfg.experiment.tau_list.clone())
        .ok_or_else(|| CliError::config("no --tau-list and no experiment.tau_list"))?;
    let (coords, snapshots) = io::read_snapshots(&args.run.join(io::SNAPSHOT_FILE))?;
    let points = outcome["refinement"][0]["points"]
        .as_u64()
        .ok_or_else(|| CliError::config("outcome.json lacks refinement[0].points"))? as usize;
    let grid = spec.build_grid(points)?;
    if grid.coords.len() != coords.len() || grid.coords.iter().zip(&coords).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(CliError::config("stored snapshots do not match the configured grid"));
    }
    let reports = functionals_on_grid(&spec, &grid, &snapshots, &taus)?;
    let ce: CeReport = check_ce_inequality(&reports, spec.p, spec.mu)?;
    let poincare: Vec<PoincareRow> = snapshots
        .iter()
        .map(|s| {
            let radius = spec.data.radius + spec.sf.horizon(s.t)?;
            Ok(PoincareRow { t: s.t, radius, report: poincare_check(&grid, s, spec.p, radius)? })
        })
        .collect::<dampwave_core::Result<_>>()?;
    let poincare_pass = poincare.iter().all(|r| r.report.pass);
    let report = json!({
        "functionals": reports,
        "ce": ce,
        "poincare_pass": poincare_pass,
        "poincare": poincare,
    });
    io::write_json(&args.run.join(io::FUNCTIONAL_REPORT_FILE), &report)?;
    print_json(&json!({ "ce": ce, "poincare_pass": poincare_pass }));
    Ok(ce.bounded && poincare_pass)
}

fn check_scale_factor(args: &CheckScaleFactorArgs) -> Outcome {
    let sf: ScaleFactor = match (&args.sf, &args.config, &args.preset) {
        (Some(text), _, _) => serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))?,
        (None, config, preset) if config.is_some() || preset.is_some() => {
            ConfigSource { config: config.clone(), preset: preset.clone() }.load()?.0.scale_factor
        }
        _ => return Err(CliError::config("one of --sf, --config or --preset is required")),
    };
    let adm = sf.check_admissible();
    let limit = sf.horizon_limit();
    print_json(&json!({
        "kind": sf.kind_name(),
        "admissible": adm.admissible(),
        "positivity": adm.positivity,
        "monotonicity": adm.monotonicity,
        "integrable_root": adm.integrable_root,
        "horizon_limit": limit.is_finite().then_some(limit),
    }));
    Ok(adm.admissible())
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Oracle(a) => oracle(a),
        Command::Fit(a) => fit(a),
        Command::VerifySupport(a) => verify_support(a),
        Command::VerifyFunctional(a) => verify_functional(a),
        Command::CheckScaleFactor(a) => check_scale_factor(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind, "message": e.message }));
            ExitCode::from(e.code)
        }
    }
}
