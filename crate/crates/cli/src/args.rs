use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use aderdec::{ImplicitMethod, Method, NodeFamily, OdeProblemId, PdeProblem};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "aderdec", version, about = "ADER and DeC time integrators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one ODE problem and write its trajectory.
    Solve(SolveArgs),
    /// Error table over a list of step sizes (ODE) or grids (`--pde`).
    Converge(ConvergeArgs),
    /// Amplification factor scan over the complex plane.
    Stability(StabilityArgs),
    /// Run a spectral difference problem and write solution snapshots.
    PdeSolve(PdeSolveArgs),
    /// Run every entry of a JSON experiment manifest.
    Manifest(ManifestArgs),
}

/// Any of the four time integrators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(into = "String")]
pub enum Solver {
    Explicit(Method),
    Implicit(ImplicitMethod),
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Solver::Explicit(m) => m.fmt(f),
            Solver::Implicit(m) => m.fmt(f),
        }
    }
}

impl From<Solver> for String {
    fn from(s: Solver) -> Self {
        s.to_string()
    }
}

impl FromStr for Solver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(m) = s.parse::<Method>() {
            return Ok(Solver::Explicit(m));
        }
        s.parse::<ImplicitMethod>()
            .map(Solver::Implicit)
            .map_err(|_| format!("unknown method `{s}` (expected ader, dec, imdec or imader)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Uniform,
    Geometric,
}

fn parse_problem(s: &str) -> Result<OdeProblemId, String> {
    s.parse().map_err(|e: aderdec::Error| e.to_string())
}

fn parse_pde(s: &str) -> Result<PdeProblem, String> {
    s.parse().map_err(|e: aderdec::Error| e.to_string())
}

fn parse_family(s: &str) -> Result<NodeFamily, String> {
    s.parse().map_err(|e: aderdec::Error| e.to_string())
}

fn parse_explicit(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: aderdec::Error| e.to_string())
}

/// Method, family, order and iteration count shared by every subcommand.
#[derive(Debug, Clone, Args, Serialize)]
pub struct MethodArgs {
    /// ader, dec, imdec or imader.
    #[arg(long)]
    pub method: Solver,
    /// Number of subnodes per step (M + 1).
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    /// equispaced, lobatto or legendre.
    #[arg(long, value_parser = parse_family)]
    pub family: Option<NodeFamily>,
    /// Iterations K; defaults to the order.
    #[arg(long)]
    pub iterations: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    #[arg(long, value_parser = parse_problem)]
    pub problem: OdeProblemId,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, value_enum, default_value_t = ScheduleKind::Uniform)]
    pub schedule: ScheduleKind,
    /// Uniform step size.
    #[arg(long)]
    pub dt: Option<f64>,
    /// First step of a geometric schedule.
    #[arg(long)]
    pub dt0: Option<f64>,
    /// Growth factor of a geometric schedule.
    #[arg(long, default_value_t = 2.0)]
    pub ratio: f64,
    /// Number of steps; fixes `dt` (uniform) or `dt0` (geometric) to land on the end time.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub tend: Option<f64>,
    /// Trajectory CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run metadata JSON; printed to stdout when `--out` is given and this is absent.
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConvergeArgs {
    /// ODE problem id, or `advection`/`burgers` with `--pde`.
    #[arg(long)]
    pub problem: String,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Spectral difference study; `--order` is then the space-time order N + 1.
    #[arg(long)]
    pub pde: bool,
    /// Comma separated step sizes (ODE).
    #[arg(long, value_delimiter = ',')]
    pub dt: Vec<f64>,
    /// Comma separated element counts (PDE).
    #[arg(long, value_delimiter = ',')]
    pub elements: Vec<usize>,
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub tend: Option<f64>,
    /// Convergence CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Rows and run metadata as JSON; printed to stdout when `--out` is given and this is absent.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, default_value_t = -6.0, allow_hyphen_values = true)]
    pub re_min: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub re_max: f64,
    #[arg(long, default_value_t = -4.0, allow_hyphen_values = true)]
    pub im_min: f64,
    #[arg(long, default_value_t = 4.0, allow_hyphen_values = true)]
    pub im_max: f64,
    #[arg(long, default_value_t = 101)]
    pub nx: usize,
    #[arg(long, default_value_t = 101)]
    pub ny: usize,
    /// Grid CSV `re,im,amp`; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Summary and metadata JSON; printed to stdout when `--out` is given and this is absent.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PdeSolveArgs {
    #[arg(long, value_parser = parse_pde)]
    pub problem: PdeProblem,
    /// ader or dec.
    #[arg(long, value_parser = parse_explicit)]
    pub method: Method,
    /// Space-time order N + 1.
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    /// Time node family; ADER defaults to legendre, DeC to lobatto.
    #[arg(long, value_parser = parse_family)]
    pub family: Option<NodeFamily>,
    #[arg(long, default_value_t = 32)]
    pub elements: usize,
    #[arg(long, default_value_t = aderdec::sd1d::DEFAULT_COURANT)]
    pub courant: f64,
    /// Comma separated output times; defaults to the problem's final time.
    #[arg(long, value_delimiter = ',')]
    pub times: Vec<f64>,
    /// Snapshot CSV `x,u`; with several output times an `_<index>` suffix is added.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ManifestArgs {
    /// Manifest JSON.
    pub path: PathBuf,
    /// Directory that relative output paths resolve against; defaults to the manifest's directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Only runs whose name contains this string.
    #[arg(long)]
    pub filter: Option<String>,
    /// Validate every entry without running anything.
    #[arg(long)]
    pub check: bool,
}
