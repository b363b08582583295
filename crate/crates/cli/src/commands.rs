use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use aderdec::explicit::integrate_from;
use aderdec::harness::{
    self, convergence_study, pde_convergence, pde_time_config, write_convergence_csv, write_trajectory_csv,
    StudyCase,
};
use aderdec::sd1d::{self, sd_cfl_step, sd_march, sd_time_config};
use aderdec::{
    ExplicitStepper, GridBounds, ImplicitConfig, ImplicitStepper, Method, NodeFamily, OdeProblemId, OdeSystem,
    OneStepMethod, PdeProblem, Schedule, StabilityGrid, StepperConfig,
};
use anyhow::{bail, Context};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{ConvergeArgs, MethodArgs, PdeSolveArgs, ScheduleKind, SolveArgs, Solver, StabilityArgs};
use crate::UsageError;

/// Where relative output paths land, and where metadata goes when no path is given.
#[derive(Debug, Clone, Default)]
pub struct OutputRoot {
    pub dir: Option<PathBuf>,
    /// Metadata lands next to the main output (`x.csv` -> `x.json`) instead of stdout.
    pub sidecar: bool,
}

impl OutputRoot {
    fn resolve(&self, path: &Path) -> PathBuf {
        match &self.dir {
            Some(root) if path.is_relative() => root.join(path),
            _ => path.to_path_buf(),
        }
    }

    fn create(&self, path: &Path) -> anyhow::Result<(PathBuf, BufWriter<File>)> {
        let path = self.resolve(path);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok((path, BufWriter::new(file)))
    }
}

#[derive(Debug, Serialize)]
struct RunMetadata<'a, C: Serialize> {
    command: &'static str,
    config: &'a C,
    wall_time_s: f64,
    mass_condition_number: Option<f64>,
    outputs: Vec<String>,
    details: Value,
}

/// Metadata goes to `path`; failing that, when the main output went to
/// `out`, to stdout or the sidecar file.
fn write_json(root: &OutputRoot, path: Option<&Path>, out: Option<&Path>, value: &impl Serialize) -> anyhow::Result<()> {
    let sidecar = out.filter(|_| root.sidecar).map(|o| o.with_extension("json"));
    match path.or(sidecar.as_deref()) {
        Some(p) => {
            let (p, mut w) = root.create(p)?;
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
            w.flush().with_context(|| format!("writing {}", p.display()))?;
        }
        None if out.is_some() => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            serde_json::to_writer_pretty(&mut out, value)?;
            writeln!(out)?;
        }
        None => {}
    }
    Ok(())
}

/// Writes through `emit` to `path`, or to stdout.
fn write_table<F>(root: &OutputRoot, path: Option<&Path>, emit: F) -> anyhow::Result<Option<String>>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    match path {
        Some(p) => {
            let (p, mut w) = root.create(p)?;
            emit(&mut w).and_then(|_| w.flush()).with_context(|| format!("writing {}", p.display()))?;
            Ok(Some(p.display().to_string()))
        }
        None => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            emit(&mut out)?;
            Ok(None)
        }
    }
}

/// A built stepper plus the condition number of its slab mass matrix.
struct Built {
    stepper: Box<dyn OneStepMethod<f64>>,
    mass_condition: f64,
    implicit: bool,
}

fn build(m: &MethodArgs, default_family: NodeFamily) -> anyhow::Result<Built> {
    let family = m.family.unwrap_or(default_family);
    let iterations = m.iterations.unwrap_or(m.order);
    Ok(match m.method {
        Solver::Explicit(method) => {
            let s = ExplicitStepper::new(StepperConfig::new(method, family, m.order).with_iterations(iterations))?;
            Built {
                mass_condition: s.scheme().mass_condition_number(),
                stepper: Box::new(s),
                implicit: false,
            }
        }
        Solver::Implicit(method) => {
            let s = ImplicitStepper::new(ImplicitConfig::new(method, family, m.order).with_iterations(iterations))?;
            Built {
                mass_condition: s.scheme().mass_condition_number(),
                stepper: Box::new(s),
                implicit: true,
            }
        }
    })
}

/// Systems without a stiff split are treated as fully stiff by the implicit methods.
fn system_for(problem: OdeProblemId, implicit: bool) -> OdeSystem<f64> {
    let sys = problem.system::<f64>();
    if implicit && sys.stiff_split().is_none() {
        sys.fully_stiff()
    } else {
        sys
    }
}

fn time_range(problem: OdeProblemId, t0: Option<f64>, tend: Option<f64>) -> anyhow::Result<(f64, f64)> {
    let (d0, d1) = problem.time_range();
    let (t0, t1) = (t0.unwrap_or(d0), tend.unwrap_or(d1));
    if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
        return Err(UsageError(format!("time range [{t0}, {t1}] is empty")).into());
    }
    Ok((t0, t1))
}

fn schedule(a: &SolveArgs, span: f64) -> anyhow::Result<Schedule<f64>> {
    let usage = |msg: &str| anyhow::Error::from(UsageError(msg.to_string()));
    let positive = |v: f64, name: &str| {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(usage(&format!("{name} must be positive and finite, got {v}")))
        }
    };
    match a.schedule {
        ScheduleKind::Uniform => match (a.dt, a.steps) {
            (Some(dt), None) => Ok(Schedule::Uniform { dt: positive(dt, "--dt")? }),
            (None, Some(n)) if n > 0 => Ok(Schedule::Uniform { dt: span / n as f64 }),
            (None, Some(_)) => Err(usage("--steps must be at least 1")),
            _ => Err(usage("uniform schedule needs exactly one of --dt or --steps")),
        },
        ScheduleKind::Geometric => {
            let ratio = positive(a.ratio, "--ratio")?;
            match (a.dt0, a.steps) {
                (Some(dt0), None) => Ok(Schedule::Geometric {
                    dt0: positive(dt0, "--dt0")?,
                    ratio,
                }),
                (None, Some(n)) if n > 0 && ratio != 1.0 => Ok(Schedule::geometric_with_steps(span, ratio, n)),
                (None, Some(n)) if n > 0 => Ok(Schedule::Uniform { dt: span / n as f64 }),
                (None, Some(_)) => Err(usage("--steps must be at least 1")),
                _ => Err(usage("geometric schedule needs exactly one of --dt0 or --steps")),
            }
        }
    }
}

pub fn solve(a: &SolveArgs, root: &OutputRoot) -> anyhow::Result<()> {
    let start = Instant::now();
    let built = build(&a.method, NodeFamily::GaussLobatto)?;
    let sys = system_for(a.problem, built.implicit);
    let (t0, t1) = time_range(a.problem, a.t0, a.tend)?;
    let schedule = schedule(a, t1 - t0)?;
    let traj = integrate_from(&sys, t0, sys.initial(), t1, &schedule, built.stepper.as_ref())
        .with_context(|| format!("solving {} with {}", a.problem, built.stepper.label()))?;
    let extra = a.problem.scaled_columns();
    let out = write_table(root, a.out.as_deref(), |w| write_trajectory_csv(&traj, &extra, w))?;
    let last = traj.last_state().to_vec();
    let details = json!({
        "stepper": built.stepper.label(),
        "schedule": schedule,
        "steps": traj.len() - 1,
        "final_time": traj.last_time(),
        "final_state": last,
        "invariant_drift": sys.invariant(&last).zip(sys.invariant(&traj.states[0])).map(|(a, b)| a - b),
        "analytic_error": sys.analytic(traj.last_time()).map(|e| {
            e.iter().zip(&last).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        }),
    });
    let meta = RunMetadata {
        command: "solve",
        config: a,
        wall_time_s: start.elapsed().as_secs_f64(),
        mass_condition_number: Some(built.mass_condition),
        outputs: out.into_iter().collect(),
        details,
    };
    write_json(root, a.meta.as_deref(), a.out.as_deref(), &meta)
}

pub fn converge(a: &ConvergeArgs, root: &OutputRoot) -> anyhow::Result<()> {
    let start = Instant::now();
    let (rows, cond) = if a.pde {
        converge_pde(a)?
    } else {
        converge_ode(a)?
    };
    let out = write_table(root, a.out.as_deref(), |w| write_convergence_csv(&rows, w))?;
    let meta = RunMetadata {
        command: "converge",
        config: a,
        wall_time_s: start.elapsed().as_secs_f64(),
        mass_condition_number: cond,
        outputs: out.into_iter().collect(),
        details: json!({ "rows": rows }),
    };
    write_json(root, a.json.as_deref(), a.out.as_deref(), &meta)
}

fn converge_ode(a: &ConvergeArgs) -> anyhow::Result<(Vec<aderdec::ConvergenceRow>, Option<f64>)> {
    let problem: OdeProblemId = a.problem.parse().map_err(|e: aderdec::Error| UsageError(e.to_string()))?;
    if a.dt.is_empty() {
        bail!(UsageError("ODE convergence needs --dt with at least one step size".into()));
    }
    if let Some(bad) = a.dt.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        bail!(UsageError(format!("step sizes must be positive, got {bad}")));
    }
    let built = build(&a.method, NodeFamily::GaussLobatto)?;
    let sys = system_for(problem, built.implicit);
    let (t0, t1) = time_range(problem, a.t0, a.tend)?;
    let case = StudyCase {
        method: a.method.method.to_string(),
        family: a.method.family.unwrap_or(NodeFamily::GaussLobatto).to_string(),
        order: a.method.order,
        iterations: a.method.iterations.unwrap_or(a.method.order),
    };
    let rows = convergence_study(&sys, t0, t1, &a.dt, built.stepper.as_ref(), &case)
        .with_context(|| format!("convergence study on {problem}"))?;
    Ok((rows, Some(built.mass_condition)))
}

fn converge_pde(a: &ConvergeArgs) -> anyhow::Result<(Vec<aderdec::ConvergenceRow>, Option<f64>)> {
    let problem: PdeProblem = a.problem.parse().map_err(|e: aderdec::Error| UsageError(e.to_string()))?;
    let Solver::Explicit(method) = a.method.method else {
        bail!(UsageError("spectral difference runs use ader or dec".into()));
    };
    if a.elements.is_empty() || a.elements.contains(&0) {
        bail!(UsageError("PDE convergence needs --elements with positive counts".into()));
    }
    if a.t0.is_some() || a.tend.is_some() {
        bail!(UsageError("PDE studies run to the problem's fixed final time".into()));
    }
    let cfg = pde_config(method, a.method.family, a.method.order, a.method.iterations)?;
    let cond = aderdec::TimeScheme::<f64>::new(cfg.family, cfg.order)?.mass_condition_number();
    let rows = pde_convergence(problem, cfg.order - 1, &a.elements, cfg)
        .with_context(|| format!("convergence study on {problem}"))?;
    Ok((rows, Some(cond)))
}

fn pde_config(method: Method, family: Option<NodeFamily>, order: usize, k: Option<usize>) -> anyhow::Result<StepperConfig> {
    if order == 0 {
        bail!(UsageError("--order must be at least 1".into()));
    }
    let degree = order - 1;
    let cfg = match family {
        Some(f) => pde_time_config(method, f, degree),
        None => sd_time_config(method, degree),
    };
    Ok(match k {
        Some(k) => cfg.with_iterations(k),
        None => cfg,
    })
}

pub fn stability(a: &StabilityArgs, root: &OutputRoot) -> anyhow::Result<()> {
    let start = Instant::now();
    let built = build(&a.method, NodeFamily::GaussLobatto)?;
    let bounds = GridBounds {
        re_min: a.re_min,
        re_max: a.re_max,
        im_min: a.im_min,
        im_max: a.im_max,
        nx: a.nx,
        ny: a.ny,
    };
    bounds.validate().map_err(|e| UsageError(e.to_string()))?;
    let grid = StabilityGrid::<f64>::compute(built.stepper.as_ref(), bounds)?;
    let out = write_table(root, a.out.as_deref(), |w| grid.write_csv(w))?;
    let meta = RunMetadata {
        command: "stability",
        config: a,
        wall_time_s: start.elapsed().as_secs_f64(),
        mass_condition_number: Some(built.mass_condition),
        outputs: out.into_iter().collect(),
        details: json!({ "stepper": built.stepper.label(), "summary": grid.summary() }),
    };
    write_json(root, a.summary.as_deref(), a.out.as_deref(), &meta)
}

fn snapshot_path(base: &Path, index: usize, count: usize) -> PathBuf {
    if count == 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("snapshot");
    let name = match base.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{index}.{ext}"),
        None => format!("{stem}_{index}"),
    };
    base.with_file_name(name)
}

pub fn pde_solve(a: &PdeSolveArgs, root: &OutputRoot) -> anyhow::Result<()> {
    let start = Instant::now();
    let cfg = pde_config(a.method, a.family, a.order, None)?;
    if a.elements == 0 {
        bail!(UsageError("--elements must be positive".into()));
    }
    if !(a.courant > 0.0 && a.courant.is_finite()) {
        bail!(UsageError(format!("--courant must be positive, got {}", a.courant)));
    }
    let mut times = if a.times.is_empty() {
        vec![a.problem.final_time()]
    } else {
        a.times.clone()
    };
    if let Some(bad) = times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        bail!(UsageError(format!("output times must be non-negative, got {bad}")));
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    if times.len() > 1 && a.out.is_none() {
        bail!(UsageError("several output times need --out".into()));
    }

    let grid = a.problem.grid::<f64>(a.elements, cfg.order - 1)?;
    let flux = a.problem.flux::<f64>();
    let mut u = grid.sample(|x| a.problem.initial(x));
    let dt = sd_cfl_step(&grid, &flux, &u, a.courant)?;
    let mut now = 0.0;
    let mut outputs = Vec::new();
    let mut snapshots = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        if t > now {
            u = sd_march(&grid, flux, u, t - now, dt, cfg)
                .with_context(|| format!("{} with {}-{} to t = {t}", a.problem, cfg.method, cfg.family))?
                .values;
            now = t;
        }
        let path = a.out.as_deref().map(|p| snapshot_path(p, i, times.len()));
        outputs.extend(write_table(root, path.as_deref(), |w| grid.write_snapshot(&u, w))?);
        let error = match a.problem {
            PdeProblem::Advection => Some(harness::pde_error(&grid, &u, |x| sd1d::sine_wave(x - t))),
            PdeProblem::Burgers => None,
        };
        snapshots.push(json!({ "time": t, "total": grid.total(&u), "error": error }));
    }
    let meta = RunMetadata {
        command: "pde-solve",
        config: a,
        wall_time_s: start.elapsed().as_secs_f64(),
        mass_condition_number: Some(aderdec::TimeScheme::<f64>::new(cfg.family, cfg.order)?.mass_condition_number()),
        outputs,
        details: json!({ "time_config": cfg, "dt": dt, "dx": grid.dx(), "snapshots": snapshots }),
    };
    write_json(root, a.meta.as_deref(), a.out.as_deref(), &meta)
}
