//! The `dsgid` subcommands as library functions.
//!
//! Every command writes plain files into an output directory. CSV payloads
//! are deterministic; wall-clock timings live in separate `*timing.csv`
//! files and in the JSON summaries.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::adjoint::adjoint_solve;
use crate::config::RunConfig;
use crate::data::{generate_observations, ObservationSet};
use crate::dsg::export::{write_coefficients, write_grid, PlotGrid};
use crate::dsg::{forward_solve, project_initial};
use crate::error::DsgError;
use crate::optimizer::{identify, IdentificationProblem, IdentifyOutcome, Status};

pub const OBSERVATION_FILE: &str = "observations.obs";
pub const RESOLVED_CONFIG_FILE: &str = "config.toml";

/// Failure classes with their process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Solver,
    Optimizer,
    Data,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Solver => 3,
            ErrorKind::Optimizer => 4,
            ErrorKind::Data => 5,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            ErrorKind::Config => "E_CONFIG",
            ErrorKind::Solver => "E_SOLVER",
            ErrorKind::Optimizer => "E_OPTIMIZER",
            ErrorKind::Data => "E_DATA",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        // Keep the report on one line whatever the source produced.
        let message = message
            .into()
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        Self { kind, message }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.kind.tag(), self.message)
    }
}

impl std::error::Error for CliError {}

impl From<DsgError> for CliError {
    fn from(e: DsgError) -> Self {
        let kind = match &e {
            DsgError::Argument(_) | DsgError::Domain(_) | DsgError::Config(_) => ErrorKind::Config,
            DsgError::BlowUp { .. } => ErrorKind::Solver,
            DsgError::NoDescentDirection { .. } | DsgError::LineSearchFailed { .. } => {
                ErrorKind::Optimizer
            }
            DsgError::Data(_)
            | DsgError::Checksum { .. }
            | DsgError::SchemaVersion { .. }
            | DsgError::Io(_) => ErrorKind::Data,
        };
        CliError::new(kind, e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::new(ErrorKind::Data, format!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

/// Writes through a buffered file, mapping every failure to a data error.
fn write_file<F>(path: &Path, body: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> crate::Result<()>,
{
    let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(CliError::from)?;
    w.flush().map_err(|e| io_error(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("summary serializes");
    fs::write(path, text + "\n").map_err(|e| io_error(path, e))
}

pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    RunConfig::load(path).map_err(|e| CliError::new(ErrorKind::Config, e.to_string()))
}

fn output_dir(cfg: &RunConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output_dir.clone())
}

#[derive(Debug, Clone)]
pub struct GenerateReport {
    pub observations: PathBuf,
    pub config_echo: PathBuf,
}

/// Forward solve at the reference endpoints; stores `u(T)` and the resolved config.
pub fn cmd_generate(cfg: &RunConfig, out: Option<&Path>) -> CliResult<GenerateReport> {
    let dir = output_dir(cfg, out);
    let obs = generate_observations(
        &cfg.problem_definition()?,
        &cfg.discretization()?,
        cfg.reference_params()?,
    )?;
    create_dir(&dir)?;
    let observations = dir.join(OBSERVATION_FILE);
    obs.save(&observations)?;
    let config_echo = dir.join(RESOLVED_CONFIG_FILE);
    fs::write(&config_echo, cfg.to_toml()).map_err(|e| io_error(&config_echo, e))?;
    Ok(GenerateReport {
        observations,
        config_echo,
    })
}

/// Snapshot indices: at most `count`, evenly spread, always first and last.
fn snapshot_indices(len: usize, count: usize) -> Vec<usize> {
    if len <= count {
        return (0..len).collect();
    }
    let mut idx: Vec<usize> = (0..count).map(|n| n * (len - 1) / (count - 1)).collect();
    idx.dedup();
    idx
}

/// Plot resolution: one sample per polynomial degree of freedom.
fn plot_grid(cfg: &RunConfig) -> PlotGrid {
    PlotGrid {
        nx: cfg.nx * (cfg.kx + 1),
        nxi: cfg.nxi * (cfg.kxi + 1),
    }
}

pub const FORWARD_SNAPSHOTS: usize = 11;

#[derive(Debug, Clone, Serialize)]
pub struct ForwardReport {
    pub params: [f64; 2],
    pub steps: usize,
    pub dt: f64,
    pub final_time: f64,
    pub snapshot_times: Vec<f64>,
    pub mean_sum_initial: f64,
    pub mean_sum_final: f64,
    pub seconds: f64,
}

/// Solves at the reference endpoints and writes `coefficients.csv` with a
/// few snapshots plus `grid.csv` with the initial and final fields.
pub fn cmd_forward(cfg: &RunConfig, out: Option<&Path>) -> CliResult<ForwardReport> {
    let clock = Instant::now();
    let dir = output_dir(cfg, out);
    let def = cfg.problem_definition()?;
    let params = cfg.reference_params()?;
    let disc = cfg.discretization()?;
    let scheme = disc.scheme(def.flux, params)?;
    let traj = forward_solve(
        &scheme,
        project_initial(&scheme, &def.initial),
        &disc.forward,
    )?;

    let picked: Vec<(f64, &_)> = snapshot_indices(traj.states.len(), FORWARD_SNAPSHOTS)
        .into_iter()
        .map(|n| (traj.times[n], &traj.states[n]))
        .collect();
    let ends: Vec<(f64, &_)> = if traj.states.len() == 1 {
        vec![picked[0]]
    } else {
        vec![picked[0], *picked.last().unwrap()]
    };
    create_dir(&dir)?;
    write_file(&dir.join("coefficients.csv"), |w| {
        write_coefficients(w, &picked)
    })?;
    write_file(&dir.join("grid.csv"), |w| {
        write_grid(w, &scheme, &ends, plot_grid(cfg), "u")
    })?;
    let report = ForwardReport {
        params: params.as_array(),
        steps: traj.steps,
        dt: traj.dt,
        final_time: traj.final_time(),
        snapshot_times: picked.iter().map(|(t, _)| *t).collect(),
        mean_sum_initial: traj.states[0].mean_sum(),
        mean_sum_final: traj.final_state().mean_sum(),
        seconds: clock.elapsed().as_secs_f64(),
    };
    write_json(&dir.join("forward_summary.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentifySummary {
    pub problem: String,
    pub status: Status,
    pub xi_left: f64,
    pub xi_right: f64,
    pub iterations: usize,
    pub final_cost: Option<f64>,
    pub final_gradient_norm: Option<f64>,
    pub message: Option<String>,
    pub seconds: f64,
}

impl IdentifySummary {
    fn new(cfg: &RunConfig, outcome: &IdentifyOutcome) -> Self {
        let last = outcome.trace.records.last();
        Self {
            problem: cfg.problem.clone(),
            status: outcome.status,
            xi_left: outcome.params.xi_left,
            xi_right: outcome.params.xi_right,
            iterations: outcome.iterations(),
            final_cost: last.map(|r| r.cost),
            final_gradient_norm: last.map(|r| r.gradient_norm),
            message: outcome.message.clone(),
            seconds: outcome.seconds,
        }
    }
}

/// Builds the reduced-cost objective after checking the data against the run.
pub fn identification_problem(
    cfg: &RunConfig,
    obs: ObservationSet,
) -> CliResult<IdentificationProblem> {
    obs.validate_compatibility(&cfg.signature())?;
    Ok(IdentificationProblem {
        problem: cfg.problem_definition()?,
        disc: cfg.discretization()?,
        data: obs.coefficients,
        prior: cfg.prior,
        delta: cfg.delta,
        quadrature: Default::default(),
    })
}

fn run_identification(
    cfg: &RunConfig,
    obs: ObservationSet,
) -> CliResult<(IdentificationProblem, IdentifyOutcome)> {
    let mut problem = identification_problem(cfg, obs)?;
    let outcome = identify(&mut problem, cfg.start_params()?, &cfg.optimizer())?;
    Ok((problem, outcome))
}

/// Runs the identification loop and writes `trace.csv`, `timing.csv` and
/// `summary.json`; with `adjoint_grid`, also the adjoint at the final
/// endpoints on the plot grid. A run that ends without convergence still
/// writes its outputs before the error is returned.
pub fn cmd_identify(
    cfg: &RunConfig,
    data: &Path,
    out: Option<&Path>,
    adjoint_grid: bool,
) -> CliResult<IdentifySummary> {
    let dir = output_dir(cfg, out);
    let obs = ObservationSet::load(data)?;
    let (problem, outcome) = run_identification(cfg, obs)?;
    create_dir(&dir)?;
    write_file(&dir.join("trace.csv"), |w| outcome.trace.write_csv(w))?;
    write_file(&dir.join("timing.csv"), |w| {
        outcome.trace.write_timing_csv(w)
    })?;
    let summary = IdentifySummary::new(cfg, &outcome);
    write_json(&dir.join("summary.json"), &summary)?;

    if adjoint_grid && outcome.status != Status::BlowUp {
        let (_, traj, scheme) = problem.reduced_cost(&outcome.params)?;
        let adj = adjoint_solve(&scheme, &traj, &problem.data)?;
        let ends: Vec<(f64, &_)> = [0, adj.states.len() - 1]
            .into_iter()
            .map(|n| (adj.times[n], &adj.states[n]))
            .collect();
        write_file(&dir.join("adjoint_grid.csv"), |w| {
            write_grid(w, &scheme, &ends, plot_grid(cfg), "p")
        })?;
    }

    let detail = |what: &str| {
        format!(
            "{what} after {} iterations at [{}, {}]",
            summary.iterations, summary.xi_left, summary.xi_right
        )
    };
    match outcome.status {
        Status::Converged => Ok(summary),
        Status::BlowUp => Err(CliError::new(
            ErrorKind::Solver,
            outcome
                .message
                .clone()
                .unwrap_or_else(|| detail("solver blow-up")),
        )),
        Status::NoDescentDirection => Err(CliError::new(
            ErrorKind::Optimizer,
            detail("no descent direction"),
        )),
        Status::LineSearchFailed => Err(CliError::new(
            ErrorKind::Optimizer,
            detail("line search failed"),
        )),
        Status::MaxIterations => Err(CliError::new(
            ErrorKind::Optimizer,
            detail("iteration limit reached"),
        )),
    }
}

/// Parameter studies of the smooth advection example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    Nx,
    NXi,
    KX,
    KXi,
    Delta,
}

impl Study {
    pub const ALL: [Study; 5] = [Study::Nx, Study::NXi, Study::KX, Study::KXi, Study::Delta];

    pub fn name(self) -> &'static str {
        match self {
            Study::Nx => "Nx",
            Study::NXi => "NXi",
            Study::KX => "KX",
            Study::KXi => "KXi",
            Study::Delta => "delta",
        }
    }

    /// The values swept by the published table.
    pub fn values(self) -> &'static [f64] {
        match self {
            Study::Nx => &[100.0, 300.0, 500.0, 700.0],
            Study::NXi => &[1.0, 20.0, 40.0, 80.0],
            Study::KX => &[0.0, 1.0, 2.0, 3.0],
            Study::KXi => &[1.0, 2.0, 4.0, 8.0],
            Study::Delta => &[1.0, 1e-1, 1e-2, 1e-3, 0.0],
        }
    }

    /// Fixed settings of the study: sinus advection with `a(ξ) = ξ` at
    /// `T = 0.01`, `tol = 1e-5`, `α = 1` and the inverted prior `[1, −1]`.
    pub fn base_config(self) -> RunConfig {
        let nx = match self {
            Study::Nx => 100,
            Study::NXi | Study::Delta => 300,
            Study::KX | Study::KXi => 500,
        };
        let mut cfg = RunConfig::from_toml(SINUS_DEFAULTS).expect("built-in config is valid");
        cfg.nx = nx;
        cfg
    }

    /// `base` with the study variable set to `value`.
    pub fn apply(self, base: &RunConfig, value: f64) -> CliResult<RunConfig> {
        let mut cfg = base.clone();
        let count = || {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(CliError::new(
                    ErrorKind::Config,
                    format!("{} needs a whole number, got {value}", self.name()),
                ))
            }
        };
        match self {
            Study::Nx => cfg.nx = count()?,
            Study::NXi => cfg.nxi = count()?,
            Study::KX => cfg.kx = count()?,
            Study::KXi => cfg.kxi = count()?,
            Study::Delta => cfg.delta = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

const SINUS_DEFAULTS: &str = r#"
problem = "advection-sinus"
boundary = "periodic"
x_start = 0.0
x_end = 1.0
final_time = 0.01
nx = 100
nxi = 20
kx = 1
kxi = 4
delta = 1e-2
tol = 1e-5
alpha_init = 1.0
prior = [1.0, -1.0]
reference = [-1.0, 1.0]
start = [-0.5, 0.5]
"#;

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Study {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '_' | '-'))
            .collect::<String>()
            .to_lowercase();
        match key.as_str() {
            "nx" => Ok(Study::Nx),
            "nxi" | "nξ" => Ok(Study::NXi),
            "kx" => Ok(Study::KX),
            "kxi" | "kξ" => Ok(Study::KXi),
            "delta" | "δ" => Ok(Study::Delta),
            _ => Err(CliError::new(
                ErrorKind::Config,
                format!("unknown study '{s}' (expected one of Nx, NXi, KX, KXi, delta)"),
            )),
        }
    }
}

/// One row of a parameter study.
#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub value: f64,
    pub status: Status,
    pub iterations: usize,
    pub xi_left: f64,
    pub xi_right: f64,
    pub seconds: f64,
}

/// Runs generate and identify for every value. Rows that stop without
/// converging are reported with their status; setup failures abort.
pub fn run_study(base: &RunConfig, study: Study, values: &[f64]) -> CliResult<Vec<StudyRow>> {
    values
        .iter()
        .map(|&value| {
            let cfg = study.apply(base, value)?;
            let clock = Instant::now();
            let obs = generate_observations(
                &cfg.problem_definition()?,
                &cfg.discretization()?,
                cfg.reference_params()?,
            )?;
            let (_, outcome) = run_identification(&cfg, obs)?;
            Ok(StudyRow {
                value,
                status: outcome.status,
                iterations: outcome.iterations(),
                xi_left: outcome.params.xi_left,
                xi_right: outcome.params.xi_right,
                seconds: clock.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

fn status_name(s: Status) -> String {
    serde_json::to_value(s)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn write_study_csv<W: Write>(
    out: &mut W,
    study: Study,
    rows: &[StudyRow],
) -> crate::Result<()> {
    writeln!(out, "study,value,iterations,xi_left,xi_right,status")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{}",
            study.name(),
            r.value,
            r.iterations,
            r.xi_left,
            r.xi_right,
            status_name(r.status)
        )?;
    }
    Ok(())
}

/// Runs a published parameter study and writes `table1_<study>.csv` plus
/// `table1_<study>_timing.csv`. With `base` the fixed settings come from
/// that config instead of the built-in ones.
pub fn cmd_table1(study: Study, base: Option<&RunConfig>, out: &Path) -> CliResult<Vec<StudyRow>> {
    let base = base.cloned().unwrap_or_else(|| study.base_config());
    let rows = run_study(&base, study, study.values())?;
    create_dir(out)?;
    let stem = format!("table1_{}", study.name());
    write_file(&out.join(format!("{stem}.csv")), |w| {
        write_study_csv(w, study, &rows)
    })?;
    write_file(&out.join(format!("{stem}_timing.csv")), |w| {
        writeln!(w, "study,value,seconds")?;
        for r in &rows {
            writeln!(w, "{},{},{}", study.name(), r.value, r.seconds)?;
        }
        Ok(())
    })?;
    Ok(rows)
}
