//! Explicit ADER and DeC one-slab steppers and the time-marching driver.
//!
//! Both methods iterate on the `(M+1) × I` array of subnode coefficients of a
//! slab `[tⁿ, tⁿ + Δt]`, starting from the constant guess `yⁿ`:
//!
//! * ADER solves `M α = r(α)` by Picard iteration, `α ← M⁻¹ r(α)`, with the
//!   time mass matrix `M` and the right-hand side functional `r`;
//! * DeC applies `α^m ← yⁿ + Δt Σ_r θ^m_r f(α^r)`, the closed form of the
//!   `L¹(α⁽ᵏ⁾) = L¹(α⁽ᵏ⁻¹⁾) − L²(α⁽ᵏ⁻¹⁾)` sweep for explicit operators.

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, LuFactors};
use crate::nodes::{NodeFamily, NodeSet, ThetaTable};
use crate::ode::{OdeSystem, Trajectory};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// States above this magnitude count as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ader,
    Dec,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ader => "ader",
            Method::Dec => "dec",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ader" => Ok(Method::Ader),
            "dec" => Ok(Method::Dec),
            other => Err(Error::InvalidArgument(format!("unknown explicit method `{other}`"))),
        }
    }
}

/// How the state at `tⁿ⁺¹` is formed from the converged subnode coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointUpdate {
    /// `Σ_l φ_l(1) α^l`; the endpoint coefficient itself for endpoint families.
    Reconstruct,
    /// `yⁿ + Δt ∫₀¹ f` with the slab quadrature (ADER) or `θ_end` (DeC).
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub method: Method,
    pub family: NodeFamily,
    /// Number of subnodes, M + 1.
    pub order: usize,
    pub iterations: usize,
    pub endpoint: EndpointUpdate,
}

impl StepperConfig {
    /// `order` nodes and as many iterations.
    pub fn new(method: Method, family: NodeFamily, order: usize) -> Self {
        Self {
            method,
            family,
            order,
            iterations: order,
            endpoint: EndpointUpdate::Reconstruct,
        }
    }

    pub fn with_iterations(mut self, k: usize) -> Self {
        self.iterations = k;
        self
    }

    pub fn with_endpoint(mut self, endpoint: EndpointUpdate) -> Self {
        self.endpoint = endpoint;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidArgument("order must be at least 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Slab data shared by every stepper on a given node set.
#[derive(Debug, Clone)]
pub struct TimeScheme<T> {
    nodes: NodeSet<T>,
    theta: ThetaTable<T>,
    mass: DenseMatrix<T>,
    mass_lu: LuFactors<T>,
    phi_start: Vec<T>,
    phi_end: Vec<T>,
    // Gram matrix Σ_z w_z φ_m(t_z) φ_l(t_z)
    gram: DenseMatrix<T>,
}

impl<T: Real> TimeScheme<T> {
    pub fn new(family: NodeFamily, count: usize) -> Result<Self> {
        Self::from_nodes(NodeSet::new(family, count)?)
    }

    pub fn from_nodes(nodes: NodeSet<T>) -> Result<Self> {
        let theta = ThetaTable::new(&nodes);
        let mass = ader_mass_matrix(&nodes);
        let mass_lu = mass.lu()?;
        let phi_start = nodes.basis_at(T::zero());
        let phi_end = nodes.basis_at(T::one());
        let gram = time_gram_matrix(&nodes);
        Ok(Self {
            nodes,
            theta,
            mass,
            mass_lu,
            phi_start,
            phi_end,
            gram,
        })
    }

    pub fn nodes(&self) -> &NodeSet<T> {
        &self.nodes
    }

    pub fn theta(&self) -> &ThetaTable<T> {
        &self.theta
    }

    pub fn mass(&self) -> &DenseMatrix<T> {
        &self.mass
    }

    pub fn mass_lu(&self) -> &LuFactors<T> {
        &self.mass_lu
    }

    pub fn gram(&self) -> &DenseMatrix<T> {
        &self.gram
    }

    pub fn phi_start(&self) -> &[T] {
        &self.phi_start
    }

    pub fn phi_end(&self) -> &[T] {
        &self.phi_end
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn mass_condition_number(&self) -> T {
        self.mass.condition_number()
    }

    /// True when the last node sits exactly on the slab end.
    fn ends_on_node(&self) -> bool {
        self.nodes.nodes().last().copied() == Some(T::one())
    }
}

/// `M_{m,l} = φ_m(1) φ_l(1) − Σ_z w_z φ'_m(t_z) φ_l(t_z)` on the reference slab.
pub fn ader_mass_matrix<T: Real>(ns: &NodeSet<T>) -> DenseMatrix<T> {
    let n = ns.len();
    let end = ns.basis_at(T::one());
    let vals: Vec<Vec<T>> = ns.nodes().iter().map(|&t| ns.basis_at(t)).collect();
    let ders: Vec<Vec<T>> = ns.nodes().iter().map(|&t| ns.basis_deriv_at(t)).collect();
    DenseMatrix::from_fn(n, n, |m, l| {
        let quad = ns
            .weights()
            .iter()
            .enumerate()
            .fold(T::zero(), |s, (z, &w)| s + w * ders[z][m] * vals[z][l]);
        end[m] * end[l] - quad
    })
}

pub(crate) fn time_gram_matrix<T: Real>(ns: &NodeSet<T>) -> DenseMatrix<T> {
    let n = ns.len();
    let vals: Vec<Vec<T>> = ns.nodes().iter().map(|&t| ns.basis_at(t)).collect();
    DenseMatrix::from_fn(n, n, |m, l| {
        ns.weights()
            .iter()
            .enumerate()
            .fold(T::zero(), |s, (z, &w)| s + w * vals[z][m] * vals[z][l])
    })
}

/// Subnode coefficients of one slab, row `m` holding the `I` components of αᵐ.
#[derive(Debug, Clone, PartialEq)]
pub struct SlabCoefficients<T> {
    nodes: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> SlabCoefficients<T> {
    /// Every row equal to `y`: the starting guess of both iterations.
    pub fn constant(nodes: usize, y: &[T]) -> Self {
        let mut data = Vec::with_capacity(nodes * y.len());
        for _ in 0..nodes {
            data.extend_from_slice(y);
        }
        Self {
            nodes,
            dim: y.len(),
            data,
        }
    }

    pub fn zeros(nodes: usize, dim: usize) -> Self {
        Self {
            nodes,
            dim,
            data: vec![T::zero(); nodes * dim],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        Self {
            nodes: rows.len(),
            dim,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, m: usize) -> &[T] {
        &self.data[m * self.dim..(m + 1) * self.dim]
    }

    pub fn row_mut(&mut self, m: usize) -> &mut [T] {
        &mut self.data[m * self.dim..(m + 1) * self.dim]
    }

    /// Flattened node-major storage, `data[m·I + i]`.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn to_matrix(&self) -> DenseMatrix<T> {
        DenseMatrix::from_fn(self.nodes, self.dim, |m, i| self.data[m * self.dim + i])
    }

    pub fn from_matrix(m: &DenseMatrix<T>) -> Self {
        Self {
            nodes: m.rows(),
            dim: m.cols(),
            data: m.as_slice().to_vec(),
        }
    }

    /// `Σ_l c_l αˡ`.
    pub fn combine(&self, coeffs: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        for (l, &c) in coeffs.iter().enumerate() {
            if c == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(l)) {
                *o += c * a;
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

pub(crate) fn check_state<T: Real>(values: &[T], time: T, iteration: usize) -> Result<()> {
    let limit = T::lit(DIVERGENCE_THRESHOLD);
    if values.iter().any(|v| !v.is_finite() || v.abs() > limit) {
        return Err(Error::Divergence {
            time: time.as_f64(),
            iteration,
        });
    }
    Ok(())
}

pub(crate) fn eval_rhs<T: Real>(
    sys: &OdeSystem<T>,
    t: T,
    y: &[T],
    out: &mut [T],
    iteration: usize,
) -> Result<()> {
    sys.rhs_into(t, y, out);
    check_state(out, t, iteration)
}

/// `r_m = φ_m(0) yⁿ + Δt Σ_z w_z φ_m(t_z) f(Σ_l φ_l(t_z) αˡ)`.
///
/// `f` is evaluated once per quadrature node.
pub fn ader_rhs<T: Real>(
    scheme: &TimeScheme<T>,
    sys: &OdeSystem<T>,
    t_n: T,
    y_n: &[T],
    slab: &SlabCoefficients<T>,
    dt: T,
) -> Result<SlabCoefficients<T>> {
    ader_rhs_at(scheme, sys, t_n, y_n, slab, dt, 0)
}

fn ader_rhs_at<T: Real>(
    scheme: &TimeScheme<T>,
    sys: &OdeSystem<T>,
    t_n: T,
    y_n: &[T],
    slab: &SlabCoefficients<T>,
    dt: T,
    iteration: usize,
) -> Result<SlabCoefficients<T>> {
    let ns = scheme.nodes();
    let n = ns.len();
    let dim = y_n.len();
    let mut r = SlabCoefficients::zeros(n, dim);
    for m in 0..n {
        let phi0 = scheme.phi_start[m];
        for (o, &y) in r.row_mut(m).iter_mut().zip(y_n) {
            *o = phi0 * y;
        }
    }
    let mut f = vec![T::zero(); dim];
    for (&tz, &wz) in ns.nodes().iter().zip(ns.weights()) {
        let basis = ns.basis_at(tz);
        let state = slab.combine(&basis);
        eval_rhs(sys, t_n + tz * dt, &state, &mut f, iteration)?;
        for m in 0..n {
            let c = dt * wz * basis[m];
            if c == T::zero() {
                continue;
            }
            for (o, &fi) in r.row_mut(m).iter_mut().zip(&f) {
                *o += c * fi;
            }
        }
    }
    Ok(r)
}

/// `K` Picard iterations `α ← M⁻¹ r(α)` from the constant guess.
pub fn ader_iterate<T: Real>(
    scheme: &TimeScheme<T>,
    sys: &OdeSystem<T>,
    t_n: T,
    y_n: &[T],
    dt: T,
    iterations: usize,
) -> Result<SlabCoefficients<T>> {
    let mut slab = SlabCoefficients::constant(scheme.len(), y_n);
    for k in 1..=iterations {
        let r = ader_rhs_at(scheme, sys, t_n, y_n, &slab, dt, k)?;
        let solved = scheme.mass_lu.solve_matrix(&r.to_matrix())?;
        slab = SlabCoefficients::from_matrix(&solved);
        check_state(slab.as_slice(), t_n, k)?;
    }
    Ok(slab)
}

/// `K` DeC sweeps `αᵐ ← yⁿ + Δt Σ_r θᵐ_r f(αʳ)`, each evaluating `f` at every subnode.
pub fn dec_iterate<T: Real>(
    scheme: &TimeScheme<T>,
    sys: &OdeSystem<T>,
    t_n: T,
    y_n: &[T],
    dt: T,
    iterations: usize,
) -> Result<SlabCoefficients<T>> {
    let n = scheme.len();
    let dim = y_n.len();
    let beta = &scheme.theta.beta;
    let mut slab = SlabCoefficients::constant(n, y_n);
    let mut fvals = SlabCoefficients::zeros(n, dim);
    for k in 1..=iterations {
        for r in 0..n {
            let (src, dst) = (slab.row(r).to_vec(), fvals.row_mut(r));
            eval_rhs(sys, t_n + beta[r] * dt, &src, dst, k)?;
        }
        for m in 0..n {
            let theta = &scheme.theta.theta[m];
            let row = slab.row_mut(m);
            row.copy_from_slice(y_n);
            for (r, &th) in theta.iter().enumerate() {
                if th == T::zero() {
                    continue;
                }
                let c = dt * th;
                for (o, &fi) in row.iter_mut().zip(fvals.row(r)) {
                    *o += c * fi;
                }
            }
        }
        check_state(slab.as_slice(), t_n, k)?;
    }
    Ok(slab)
}

/// `L²(α)ᵐ = αᵐ − yⁿ − Δt Σ_r θᵐ_r f(αʳ)`.
pub fn dec_l2<T: Real>(
    scheme: &TimeScheme<T>,
    sys: &OdeSystem<T>,
    t_n: T,
    y_n: &[T],
    slab: &SlabCoefficients<T>,
    dt: T,
) -> SlabCoefficients<T> {
    let n = scheme.len();
    let fvals: Vec<Vec<T>> = (0..n)
        .map(|r| sys.rhs(t_n + scheme.theta.beta[r] * dt, slab.row(r)))
        .collect();
    let mut out = slab.clone();
    for m in 0..n {
        let row = out.row_mut(m);
        for (o, &y) in row.iter_mut().zip(y_n) {
            *o -= y;
        }
        for (r, &th) in scheme.theta.theta[m].iter().enumerate() {
            for (o, &fi) in row.iter_mut().zip(&fvals[r]) {
                *o -= dt * th * fi;
            }
        }
    }
    out
}

/// `L¹(α)ᵐ = αᵐ − yⁿ − βᵐ Δt f(yⁿ)`: forward Euler to every subnode.
pub fn dec_l1<T: Real>(
    scheme: &TimeScheme<T>,
    sys: &OdeSystem<T>,
    t_n: T,
    y_n: &[T],
    slab: &SlabCoefficients<T>,
    dt: T,
) -> SlabCoefficients<T> {
    let f0 = sys.rhs(t_n, y_n);
    let mut out = slab.clone();
    for m in 0..scheme.len() {
        let c = scheme.theta.beta[m] * dt;
        for ((o, &y), &f) in out.row_mut(m).iter_mut().zip(y_n).zip(&f0) {
            *o -= y + c * f;
        }
    }
    out
}

/// Anything that advances `y(t)` to `y(t + Δt)`.
pub trait OneStepMethod<T: Real>: Send + Sync {
    fn step(&self, sys: &OdeSystem<T>, t: T, y: &[T], dt: T) -> Result<Vec<T>>;

    fn label(&self) -> String;
}

#[derive(Debug, Clone)]
pub struct ExplicitStepper<T> {
    cfg: StepperConfig,
    scheme: TimeScheme<T>,
}

impl<T: Real> ExplicitStepper<T> {
    pub fn new(cfg: StepperConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            scheme: TimeScheme::new(cfg.family, cfg.order)?,
        })
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    pub fn scheme(&self) -> &TimeScheme<T> {
        &self.scheme
    }

    /// Converged-to-`K` subnode coefficients of one slab.
    pub fn slab(&self, sys: &OdeSystem<T>, t: T, y: &[T], dt: T) -> Result<SlabCoefficients<T>> {
        match self.cfg.method {
            Method::Ader => ader_iterate(&self.scheme, sys, t, y, dt, self.cfg.iterations),
            Method::Dec => dec_iterate(&self.scheme, sys, t, y, dt, self.cfg.iterations),
        }
    }

    /// DeC without an end node takes its final sweep straight to `t = 1`:
    /// `K − 1` subnode sweeps followed by the `θ_end` integral, which is what
    /// the last sweep computes at an end node.
    fn dec_sweeps_to_end(&self) -> bool {
        self.cfg.method == Method::Dec
            && self.cfg.endpoint == EndpointUpdate::Reconstruct
            && !self.scheme.ends_on_node()
    }

    fn advance(&self, sys: &OdeSystem<T>, t: T, y: &[T], dt: T) -> Result<Vec<T>> {
        let k = self.cfg.iterations;
        let out = if self.dec_sweeps_to_end() {
            let slab = dec_iterate(&self.scheme, sys, t, y, dt, k - 1)?;
            quadrature_update(&self.scheme, sys, t, y, dt, &slab, &self.scheme.theta.theta_end, k)?
        } else {
            let slab = self.slab(sys, t, y, dt)?;
            match self.cfg.endpoint {
                EndpointUpdate::Reconstruct if self.scheme.ends_on_node() => {
                    slab.row(self.scheme.len() - 1).to_vec()
                }
                EndpointUpdate::Reconstruct => slab.combine(&self.scheme.phi_end),
                EndpointUpdate::Quadrature => {
                    let weights = match self.cfg.method {
                        Method::Ader => self.scheme.nodes.weights(),
                        Method::Dec => &self.scheme.theta.theta_end[..],
                    };
                    quadrature_update(&self.scheme, sys, t, y, dt, &slab, weights, k + 1)?
                }
            }
        };
        check_state(&out, t, k)?;
        Ok(out)
    }
}

/// `yⁿ + Δt Σ_z c_z f(Σ_l φ_l(t_z) αˡ)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn quadrature_update<T: Real>(
    scheme: &TimeScheme<T>,
    sys: &OdeSystem<T>,
    t: T,
    y: &[T],
    dt: T,
    slab: &SlabCoefficients<T>,
    weights: &[T],
    iteration: usize,
) -> Result<Vec<T>> {
    let ns = scheme.nodes();
    let mut out = y.to_vec();
    let mut f = vec![T::zero(); y.len()];
    for (&tz, &wz) in ns.nodes().iter().zip(weights) {
        let state = slab.combine(&ns.basis_at(tz));
        eval_rhs(sys, t + tz * dt, &state, &mut f, iteration)?;
        for (o, &fi) in out.iter_mut().zip(&f) {
            *o += dt * wz * fi;
        }
    }
    Ok(out)
}

impl<T: Real> OneStepMethod<T> for ExplicitStepper<T> {
    fn step(&self, sys: &OdeSystem<T>, t: T, y: &[T], dt: T) -> Result<Vec<T>> {
        if !(dt > T::zero()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        self.advance(sys, t, y, dt)
    }

    fn label(&self) -> String {
        format!(
            "{}-{}-p{}-k{}",
            self.cfg.method, self.cfg.family, self.cfg.order, self.cfg.iterations
        )
    }
}

/// Sequence of step sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Schedule<T> {
    Uniform { dt: T },
    /// `Δtⁿ = ratio · Δtⁿ⁻¹`, starting at `dt0`.
    Geometric { dt0: T, ratio: T },
}

impl<T: Real> Schedule<T> {
    /// Step size for step `n` (zero based) before clipping to the end time.
    pub fn dt(&self, n: usize) -> T {
        match *self {
            Schedule::Uniform { dt } => dt,
            Schedule::Geometric { dt0, ratio } => dt0 * ratio.powi(n as i32),
        }
    }

    pub fn smallest(&self) -> T {
        match *self {
            Schedule::Uniform { dt } => dt,
            Schedule::Geometric { dt0, ratio } => {
                if ratio >= T::one() {
                    dt0
                } else {
                    T::zero()
                }
            }
        }
    }

    /// Geometric schedule with `steps` steps landing exactly on `span`.
    pub fn geometric_with_steps(span: T, ratio: T, steps: usize) -> Self {
        let total = (ratio.powi(steps as i32) - T::one()) / (ratio - T::one());
        Schedule::Geometric {
            dt0: span / total,
            ratio,
        }
    }

    /// Step end times from `t0`, the last one exactly `t_end`.
    pub fn times(&self, t0: T, t_end: T) -> Result<Vec<T>> {
        if t_end < t0 {
            return Err(Error::InvalidArgument(format!(
                "end time {t_end} precedes start time {t0}"
            )));
        }
        if self.smallest() <= T::zero() && t_end > t0 {
            return Err(Error::InvalidArgument("schedule must have positive steps".into()));
        }
        let span = t_end - t0;
        let slack = T::lit(1e-9);
        let mut times = Vec::new();
        match *self {
            Schedule::Uniform { dt } => {
                if span > T::zero() {
                    let ratio = span / dt;
                    let steps = (ratio - slack).ceil().to_usize().unwrap_or(0).max(1);
                    for n in 1..steps {
                        times.push(t0 + T::from_index(n) * dt);
                    }
                    times.push(t_end);
                }
            }
            Schedule::Geometric { .. } => {
                let mut t = t0;
                let mut n = 0;
                while t < t_end {
                    let dt = self.dt(n);
                    if t + dt >= t_end - slack * dt {
                        times.push(t_end);
                        break;
                    }
                    t += dt;
                    times.push(t);
                    n += 1;
                }
            }
        }
        Ok(times)
    }
}

/// Marches `sys` from its initial state at `t0` to `t_end`.
pub fn integrate<T: Real>(
    sys: &OdeSystem<T>,
    t0: T,
    t_end: T,
    schedule: &Schedule<T>,
    stepper: &dyn OneStepMethod<T>,
) -> Result<Trajectory<T>> {
    integrate_from(sys, t0, sys.initial(), t_end, schedule, stepper)
}

pub fn integrate_from<T: Real>(
    sys: &OdeSystem<T>,
    t0: T,
    y0: &[T],
    t_end: T,
    schedule: &Schedule<T>,
    stepper: &dyn OneStepMethod<T>,
) -> Result<Trajectory<T>> {
    let times = schedule.times(t0, t_end)?;
    let mut traj = Trajectory::new(t0, y0.to_vec());
    let mut t = t0;
    for t_next in times {
        let y = stepper
            .step(sys, t, traj.last_state(), t_next - t)
            .map_err(|e| match e {
                Error::Divergence { iteration, .. } => Error::Divergence {
                    time: t.as_f64(),
                    iteration,
                },
                other => other,
            })?;
        traj.push(t_next, y);
        t = t_next;
    }
    Ok(traj)
}
