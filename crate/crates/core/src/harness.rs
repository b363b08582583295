//! Error norms, reference solutions, convergence studies and CSV artifacts.

use crate::error::{Error, Result};
use crate::explicit::{integrate, EndpointUpdate, Method, OneStepMethod, Schedule, StepperConfig};
use crate::ode::{self, OdeSystem, Trajectory};
use crate::scalar::Real;
use crate::sd1d::{self, Boundary, Flux, SdGrid, DEFAULT_COURANT};
use crate::nodes::NodeFamily;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

/// Relative endpoint change allowed when halving the reference step.
pub const REFERENCE_TOLERANCE: f64 = 1e-11;

/// Reference step is the smallest experiment step divided by this.
pub const REFERENCE_REFINEMENT: usize = 200;

fn same_time<T: Real>(a: T, b: T) -> bool {
    (a - b).abs() <= T::lit(1e-12) * (T::one() + a.abs().max(b.abs()))
}

/// `E = (1/N Σₙ₌₁ᴺ 1/I Σᵢ (yᵢ(tⁿ) − yᵢⁿ)²)^½`; the initial sample is skipped.
pub fn discrete_l2_error<T: Real>(traj: &Trajectory<T>, reference: &Trajectory<T>) -> Result<T> {
    if traj.len() != reference.len() || traj.dim() != reference.dim() {
        return Err(Error::GridMismatch(format!(
            "trajectory has {}x{} samples, reference {}x{}",
            traj.len(),
            traj.dim(),
            reference.len(),
            reference.dim()
        )));
    }
    if traj.len() < 2 {
        return Err(Error::InvalidArgument("error norm needs at least one step".into()));
    }
    if let Some(n) = (0..traj.len()).find(|&n| !same_time(traj.times[n], reference.times[n])) {
        return Err(Error::GridMismatch(format!(
            "sample {n} at t = {} against reference t = {}",
            traj.times[n], reference.times[n]
        )));
    }
    let dim = T::from_index(traj.dim());
    let steps = traj.len() - 1;
    let total = (1..traj.len()).fold(T::zero(), |acc, n| {
        let sq = traj.states[n]
            .iter()
            .zip(&reference.states[n])
            .fold(T::zero(), |s, (&a, &b)| s + (b - a) * (b - a));
        acc + sq / dim
    });
    Ok((total / T::from_index(steps)).sqrt())
}

/// Classical four-stage Runge–Kutta method, the reference oracle.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClassicalRk4;

impl<T: Real> OneStepMethod<T> for ClassicalRk4 {
    fn step(&self, sys: &OdeSystem<T>, t: T, y: &[T], dt: T) -> Result<Vec<T>> {
        let half = T::lit(0.5);
        let axpy = |a: T, k: &[T]| -> Vec<T> { y.iter().zip(k).map(|(&yi, &ki)| yi + a * ki).collect() };
        let k1 = sys.rhs(t, y);
        let k2 = sys.rhs(t + half * dt, &axpy(half * dt, &k1));
        let k3 = sys.rhs(t + half * dt, &axpy(half * dt, &k2));
        let k4 = sys.rhs(t + dt, &axpy(dt, &k3));
        let sixth = dt / T::lit(6.0);
        let out: Vec<T> = (0..y.len())
            .map(|i| y[i] + sixth * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]))
            .collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reference integration"));
        }
        Ok(out)
    }

    fn label(&self) -> String {
        "rk4".into()
    }
}

fn rk4_at_times<T: Real>(sys: &OdeSystem<T>, times: &[T], dt_ref: T) -> Result<Trajectory<T>> {
    let mut traj = Trajectory::new(times[0], sys.initial().to_vec());
    for w in times.windows(2) {
        let span = w[1] - w[0];
        let steps = (span / dt_ref).ceil().to_usize().unwrap_or(1).max(1);
        let h = span / T::from_index(steps);
        let mut y = traj.last_state().to_vec();
        for s in 0..steps {
            y = ClassicalRk4.step(sys, w[0] + T::from_index(s) * h, &y, h)?;
        }
        traj.push(w[1], y);
    }
    Ok(traj)
}

/// Reference values at `times` (which start at the initial time).
///
/// Uses the analytic solution when the system has one; otherwise RK4 with
/// step `min_dt / 200`, accepted only if halving that step moves the final
/// state by less than [`REFERENCE_TOLERANCE`] relative.
pub fn reference_solution<T: Real>(sys: &OdeSystem<T>, times: &[T], min_dt: T) -> Result<Trajectory<T>> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("reference needs at least one time".into()));
    }
    if sys.has_analytic() {
        let mut traj = Trajectory::new(times[0], sys.analytic(times[0]).expect("analytic"));
        for &t in &times[1..] {
            traj.push(t, sys.analytic(t).expect("analytic"));
        }
        return Ok(traj);
    }
    let dt_ref = min_dt / T::from_index(REFERENCE_REFINEMENT);
    let coarse = rk4_at_times(sys, times, dt_ref)?;
    let fine = rk4_at_times(sys, times, dt_ref * T::lit(0.5))?;
    let (a, b) = (coarse.last_state(), fine.last_state());
    let scale = b.iter().fold(T::zero(), |m, v| m.max(v.abs())).max(T::min_positive_value());
    let change = a
        .iter()
        .zip(b)
        .fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()))
        / scale;
    if !(change < T::lit(REFERENCE_TOLERANCE)) {
        return Err(Error::ReferenceNotConverged { change: change.as_f64() });
    }
    Ok(fine)
}

/// One line of a convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    /// Time step for ODE studies, element width for PDE studies.
    pub dt_or_dx: f64,
    pub error: f64,
    pub rate: Option<f64>,
    pub method: String,
    pub family: String,
    pub order: usize,
    pub iterations: usize,
}

/// Labels carried into every row of a study.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyCase {
    pub method: String,
    pub family: String,
    pub order: usize,
    pub iterations: usize,
}

impl From<&StepperConfig> for StudyCase {
    fn from(cfg: &StepperConfig) -> Self {
        Self {
            method: cfg.method.to_string(),
            family: cfg.family.to_string(),
            order: cfg.order,
            iterations: cfg.iterations,
        }
    }
}

/// `log(Eₖ₋₁/Eₖ) / log(hₖ₋₁/hₖ)`, i.e. log₂ of the error ratio under halving.
pub fn observed_rates(sizes: &[f64], errors: &[f64]) -> Vec<Option<f64>> {
    let mut rates = vec![None];
    for k in 1..errors.len() {
        let (e0, e1) = (errors[k - 1], errors[k]);
        let ok = e0.is_finite() && e1.is_finite() && e0 > 0.0 && e1 > 0.0;
        rates.push(ok.then(|| (e0 / e1).ln() / (sizes[k - 1] / sizes[k]).ln()));
    }
    rates.truncate(errors.len());
    rates
}

fn rows_from(sizes: Vec<f64>, errors: Vec<f64>, case: &StudyCase) -> Vec<ConvergenceRow> {
    let rates = observed_rates(&sizes, &errors);
    sizes
        .into_iter()
        .zip(errors)
        .zip(rates)
        .map(|((h, e), rate)| ConvergenceRow {
            dt_or_dx: h,
            error: e,
            rate,
            method: case.method.clone(),
            family: case.family.clone(),
            order: case.order,
            iterations: case.iterations,
        })
        .collect()
}

fn sorted_descending<T: Real>(values: &[T]) -> Result<Vec<T>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("convergence study needs at least one resolution".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(v)
}

/// Runs `stepper` on `[t0, t_end]` for every step size and tabulates `E`.
///
/// Runs are independent and computed in parallel; rows come back sorted by
/// step size, largest first. A diverged run gets `E = ∞` and no rate.
pub fn convergence_study<T: Real>(
    sys: &OdeSystem<T>,
    t0: T,
    t_end: T,
    dts: &[T],
    stepper: &dyn OneStepMethod<T>,
    case: &StudyCase,
) -> Result<Vec<ConvergenceRow>> {
    let dts = sorted_descending(dts)?;
    let min_dt = *dts.last().expect("non-empty");
    let errors: Vec<Result<f64>> = dts
        .par_iter()
        .map(|&dt| {
            let traj = match integrate(sys, t0, t_end, &Schedule::Uniform { dt }, stepper) {
                Ok(traj) => traj,
                Err(Error::Divergence { .. }) => return Ok(f64::INFINITY),
                Err(e) => return Err(e),
            };
            let reference = reference_solution(sys, &traj.times, min_dt)?;
            Ok(discrete_l2_error(&traj, &reference)?.as_f64())
        })
        .collect();
    let errors = errors.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(rows_from(dts.iter().map(|d| d.as_f64()).collect(), errors, case))
}

const CONVERGENCE_HEADER: &str = "dt_or_dx,error,rate,method,family,order,iterations";

/// Emits a convergence table; floats carry 17 significant digits so the
/// table parses back exactly.
pub fn write_convergence_csv<W: Write>(rows: &[ConvergenceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CONVERGENCE_HEADER}")?;
    for r in rows {
        let rate = r.rate.map(|v| format!("{v:.16e}")).unwrap_or_default();
        writeln!(
            out,
            "{:.16e},{:.16e},{},{},{},{},{}",
            r.dt_or_dx, r.error, rate, r.method, r.family, r.order, r.iterations
        )?;
    }
    Ok(())
}

pub fn parse_convergence_csv(text: &str) -> Result<Vec<ConvergenceRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CONVERGENCE_HEADER => {}
        other => {
            return Err(Error::InvalidArgument(format!(
                "unexpected convergence header {other:?}"
            )))
        }
    }
    let bad = |line: usize, what: &str| Error::InvalidArgument(format!("line {}: bad {what}", line + 2));
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(i, "field count"));
            }
            Ok(ConvergenceRow {
                dt_or_dx: f[0].parse().map_err(|_| bad(i, "dt_or_dx"))?,
                error: f[1].parse().map_err(|_| bad(i, "error"))?,
                rate: if f[2].is_empty() {
                    None
                } else {
                    Some(f[2].parse().map_err(|_| bad(i, "rate"))?)
                },
                method: f[3].to_string(),
                family: f[4].to_string(),
                order: f[5].parse().map_err(|_| bad(i, "order"))?,
                iterations: f[6].parse().map_err(|_| bad(i, "iterations"))?,
            })
        })
        .collect()
}

/// An additional trajectory column `factor · y_component` (1-based name).
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledColumn {
    pub component: usize,
    pub factor: f64,
    pub name: String,
}

/// Writes `t,y_1,…,y_I` plus any scaled columns.
pub fn write_trajectory_csv<T: Real, W: Write>(
    traj: &Trajectory<T>,
    extra: &[ScaledColumn],
    mut out: W,
) -> std::io::Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend((1..=traj.dim()).map(|i| format!("y_{i}")));
    header.extend(extra.iter().map(|c| c.name.clone()));
    writeln!(out, "{}", header.join(","))?;
    for (t, y) in traj.times.iter().zip(&traj.states) {
        let mut fields = vec![format!("{:.16e}", t.as_f64())];
        fields.extend(y.iter().map(|v| format!("{:.16e}", v.as_f64())));
        fields.extend(extra.iter().map(|c| format!("{:.16e}", c.factor * y[c.component].as_f64())));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// ODE experiments by id, each with its default time range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OdeProblemId {
    /// `y' = 10 y` on `[0, 0.1]`.
    Linear,
    /// `y' = −10 |y| y` on `[0, 0.1]`.
    Nonlinear,
    /// Biomass transfer on `[0, 1]`.
    Biomass,
    /// Biomass transfer on `[0, 10]`, run with large steps.
    StiffBiomass,
    /// Predator–prey on `[0, 5]`.
    LotkaVolterra,
    /// Robertson kinetics on `[0, 10¹¹]`.
    Robertson,
}

impl OdeProblemId {
    pub const ALL: [OdeProblemId; 6] = [
        OdeProblemId::Linear,
        OdeProblemId::Nonlinear,
        OdeProblemId::Biomass,
        OdeProblemId::StiffBiomass,
        OdeProblemId::LotkaVolterra,
        OdeProblemId::Robertson,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OdeProblemId::Linear => "linear",
            OdeProblemId::Nonlinear => "nonlinear",
            OdeProblemId::Biomass => "biomass",
            OdeProblemId::StiffBiomass => "stiff-biomass",
            OdeProblemId::LotkaVolterra => "lotka-volterra",
            OdeProblemId::Robertson => "robertson",
        }
    }

    pub fn system<T: Real>(self) -> OdeSystem<T> {
        match self {
            OdeProblemId::Linear => ode::scalar_linear(T::lit(10.0)),
            OdeProblemId::Nonlinear => ode::scalar_nonlinear(T::lit(10.0)),
            OdeProblemId::Biomass | OdeProblemId::StiffBiomass => ode::biomass(),
            OdeProblemId::LotkaVolterra => ode::lotka_volterra_default(),
            OdeProblemId::Robertson => ode::robertson(),
        }
    }

    /// Default `(t0, t_end)`.
    pub fn time_range(self) -> (f64, f64) {
        match self {
            OdeProblemId::Linear | OdeProblemId::Nonlinear => (0.0, 0.1),
            OdeProblemId::Biomass => (0.0, 1.0),
            OdeProblemId::StiffBiomass => (0.0, 10.0),
            OdeProblemId::LotkaVolterra => (0.0, 5.0),
            OdeProblemId::Robertson => (0.0, 1e11),
        }
    }

    /// Extra trajectory columns; Robertson's `y₂` is also shown ×10⁴.
    pub fn scaled_columns(self) -> Vec<ScaledColumn> {
        match self {
            OdeProblemId::Robertson => vec![ScaledColumn {
                component: 1,
                factor: 1e4,
                name: "y_2_x1e4".into(),
            }],
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for OdeProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OdeProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|p| p.name() == key)
            .or(match key.as_str() {
                "scalar-linear" => Some(OdeProblemId::Linear),
                "scalar-nonlinear" => Some(OdeProblemId::Nonlinear),
                "lotka" | "lv" => Some(OdeProblemId::LotkaVolterra),
                _ => None,
            })
            .ok_or_else(|| Error::InvalidArgument(format!("unknown problem `{s}`")))
    }
}

/// PDE experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PdeProblem {
    /// `u_t + u_x = 0`, `u₀ = sin(2πx)`, periodic, to `T = 1`.
    Advection,
    /// `u_t + (u²/2)_x = 0`, `u₀ = tanh(10x − 5)`, transmissive, to `T = 0.05`.
    Burgers,
}

impl PdeProblem {
    pub fn flux<T: Real>(self) -> Flux<T> {
        match self {
            PdeProblem::Advection => Flux::Advection { speed: T::one() },
            PdeProblem::Burgers => Flux::Burgers,
        }
    }

    pub fn boundary(self) -> Boundary {
        match self {
            PdeProblem::Advection => Boundary::Periodic,
            PdeProblem::Burgers => Boundary::Transmissive,
        }
    }

    pub fn initial<T: Real>(self, x: T) -> T {
        match self {
            PdeProblem::Advection => sd1d::sine_wave(x),
            PdeProblem::Burgers => sd1d::tanh_front(x),
        }
    }

    pub fn final_time(self) -> f64 {
        match self {
            PdeProblem::Advection => 1.0,
            PdeProblem::Burgers => 0.05,
        }
    }

    pub fn grid<T: Real>(self, elements: usize, degree: usize) -> Result<SdGrid<T>> {
        SdGrid::new(elements, degree, self.boundary())
    }
}

impl fmt::Display for PdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PdeProblem::Advection => "advection",
            PdeProblem::Burgers => "burgers",
        })
    }
}

impl FromStr for PdeProblem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "advection" => Ok(PdeProblem::Advection),
            "burgers" => Ok(PdeProblem::Burgers),
            other => Err(Error::InvalidArgument(format!("unknown PDE problem `{other}`"))),
        }
    }
}

/// Final state of one PDE run with the CFL step.
pub fn pde_run<T: Real>(
    problem: PdeProblem,
    elements: usize,
    degree: usize,
    cfg: StepperConfig,
    t_end: T,
) -> Result<(SdGrid<T>, Vec<T>)> {
    let grid = problem.grid(elements, degree)?;
    let flux = problem.flux();
    let u0 = grid.sample(|x| problem.initial(x));
    let dt = sd1d::sd_cfl_step(&grid, &flux, &u0, T::lit(DEFAULT_COURANT))?;
    let end = sd1d::sd_march(&grid, flux, u0, t_end, dt, cfg)?;
    Ok((grid, end.values))
}

/// Elements and degree of the fine Burgers reference.
pub const BURGERS_REFERENCE: (usize, usize) = (512, 4);

/// Fine-grid Burgers solution at the final time (ADER-SD, order 5).
pub fn burgers_reference<T: Real>() -> Result<(SdGrid<T>, Vec<T>)> {
    let (p, n) = BURGERS_REFERENCE;
    pde_run(
        PdeProblem::Burgers,
        p,
        n,
        sd1d::sd_time_config(Method::Ader, n),
        T::lit(PdeProblem::Burgers.final_time()),
    )
}

/// `(1/I Σᵢ (uᵢ − u_ref(xᵢ))²)^½` at the final time over all solution points.
pub fn pde_error<T: Real>(grid: &SdGrid<T>, u: &[T], reference: impl Fn(T) -> T) -> T {
    let sq = grid
        .coordinates()
        .iter()
        .zip(u)
        .fold(T::zero(), |s, (&x, &v)| s + (v - reference(x)) * (v - reference(x)));
    (sq / T::from_index(grid.len())).sqrt()
}

/// Space-time convergence under simultaneous refinement: `Δt` follows the
/// CFL rule, so rates measure the combined order. Rows are keyed by `Δx`.
pub fn pde_convergence(
    problem: PdeProblem,
    degree: usize,
    elements: &[usize],
    cfg: StepperConfig,
) -> Result<Vec<ConvergenceRow>> {
    let mut elements = elements.to_vec();
    elements.sort_unstable();
    elements.dedup();
    if elements.is_empty() {
        return Err(Error::InvalidArgument("PDE study needs at least one grid".into()));
    }
    let t_end = problem.final_time();
    let reference = match problem {
        PdeProblem::Burgers => Some(burgers_reference::<f64>()?),
        PdeProblem::Advection => None,
    };
    let errors: Vec<Result<f64>> = elements
        .par_iter()
        .map(|&p| {
            let (grid, u) = match pde_run::<f64>(problem, p, degree, cfg, t_end) {
                Ok(run) => run,
                Err(Error::Divergence { .. }) => return Ok(f64::INFINITY),
                Err(e) => return Err(e),
            };
            Ok(match &reference {
                Some((fine, uf)) => pde_error(&grid, &u, |x| fine.evaluate(uf, x)),
                None => pde_error(&grid, &u, |x| sd1d::sine_wave(x - t_end)),
            })
        })
        .collect();
    let errors = errors.into_iter().collect::<Result<Vec<_>>>()?;
    let sizes = elements.iter().map(|&p| 1.0 / p as f64).collect();
    Ok(rows_from(sizes, errors, &StudyCase::from(&cfg)))
}

/// Time configuration for an SD run of the given method and time-node family.
///
/// ADER on Gauss–Legendre nodes and every non-endpoint DeC use the
/// flux-integral final update.
pub fn pde_time_config(method: Method, family: NodeFamily, degree: usize) -> StepperConfig {
    let cfg = StepperConfig::new(method, family, degree + 1);
    if family.includes_endpoints() {
        cfg
    } else {
        cfg.with_endpoint(EndpointUpdate::Quadrature)
    }
}
