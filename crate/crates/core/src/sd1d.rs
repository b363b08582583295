//! One-dimensional spectral difference discretization on `[0, 1]`.
//!
//! Each of the `P` elements carries `N + 1` Gauss–Legendre solution points.
//! The flux is rebuilt on `N + 2` flux points (both faces plus the `N`
//! Gauss–Legendre points of degree `N`), made single valued at the faces by a
//! numerical flux, and differentiated back at the solution points. The result
//! is an ordinary [`OdeSystem`] `u' = −∂ₓf(u)`, so ADER-SD and DeC-SD are the
//! ODE steppers applied to it.

use crate::error::{Error, Result};
use crate::explicit::{
    EndpointUpdate, ExplicitStepper, Method, OneStepMethod, Schedule, StepperConfig,
};
use crate::linalg::DenseMatrix;
use crate::nodes::{NodeFamily, NodeSet};
use crate::ode::OdeSystem;
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

/// Courant factor used throughout the PDE experiments.
pub const DEFAULT_COURANT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    /// Zero-gradient closure: each outer face sees its own trace as ghost state.
    Transmissive,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Periodic => "periodic",
            Boundary::Transmissive => "transmissive",
        })
    }
}

impl FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "periodic" => Ok(Boundary::Periodic),
            "transmissive" | "outflow" => Ok(Boundary::Transmissive),
            other => Err(Error::InvalidArgument(format!("unknown boundary `{other}`"))),
        }
    }
}

/// Scalar conservation law flux.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Flux<T> {
    /// `f(u) = a u`
    Advection { speed: T },
    /// `f(u) = u² / 2`
    Burgers,
}

impl<T: Real> Flux<T> {
    pub fn eval(&self, u: T) -> T {
        match *self {
            Flux::Advection { speed } => speed * u,
            Flux::Burgers => T::lit(0.5) * u * u,
        }
    }

    /// `f'(u)`.
    pub fn wave_speed(&self, u: T) -> T {
        match *self {
            Flux::Advection { speed } => speed,
            Flux::Burgers => u,
        }
    }

    /// Upwind for advection, local Lax–Friedrichs for Burgers.
    pub fn numerical(&self, left: T, right: T) -> T {
        match *self {
            Flux::Advection { speed } => {
                if speed >= T::zero() {
                    speed * left
                } else {
                    speed * right
                }
            }
            Flux::Burgers => {
                let a = left.abs().max(right.abs());
                T::lit(0.5) * (self.eval(left) + self.eval(right)) - T::lit(0.5) * a * (right - left)
            }
        }
    }

    /// `max |f'(u)|` over a state.
    pub fn max_speed(&self, u: &[T]) -> T {
        u.iter().fold(T::zero(), |m, &v| m.max(self.wave_speed(v).abs()))
    }
}

fn lagrange_deriv<T: Real>(nodes: &[T], j: usize, x: T) -> T {
    let mut total = T::zero();
    for (k, &xk) in nodes.iter().enumerate() {
        if k == j {
            continue;
        }
        let mut term = T::one() / (nodes[j] - xk);
        for (l, &xl) in nodes.iter().enumerate() {
            if l != j && l != k {
                term *= (x - xl) / (nodes[j] - xl);
            }
        }
        total += term;
    }
    total
}

/// Element layout and the two reference operators.
#[derive(Debug, Clone)]
pub struct SdGrid<T> {
    elements: usize,
    degree: usize,
    boundary: Boundary,
    solution: NodeSet<T>,
    flux_points: Vec<T>,
    // (N+2)×(N+1): solution values → flux-point values
    to_flux: DenseMatrix<T>,
    // (N+1)×(N+2): flux-point values → derivative at solution points
    derivative: DenseMatrix<T>,
}

impl<T: Real> SdGrid<T> {
    pub fn new(elements: usize, degree: usize, boundary: Boundary) -> Result<Self> {
        if elements < 2 {
            return Err(Error::InvalidArgument(format!(
                "spectral difference grid needs at least 2 elements, got {elements}"
            )));
        }
        let solution = NodeSet::new(NodeFamily::GaussLegendre, degree + 1)?;
        let mut flux_points = vec![T::zero()];
        if degree > 0 {
            flux_points.extend_from_slice(NodeSet::<T>::new(NodeFamily::GaussLegendre, degree)?.nodes());
        }
        flux_points.push(T::one());
        let to_flux = DenseMatrix::from_fn(degree + 2, degree + 1, |k, r| {
            solution.lagrange_eval(r, flux_points[k])
        });
        let derivative = DenseMatrix::from_fn(degree + 1, degree + 2, |r, k| {
            lagrange_deriv(&flux_points, k, solution.nodes()[r])
        });
        Ok(Self {
            elements,
            degree,
            boundary,
            solution,
            flux_points,
            to_flux,
            derivative,
        })
    }

    pub fn periodic(elements: usize, degree: usize) -> Result<Self> {
        Self::new(elements, degree, Boundary::Periodic)
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn points_per_element(&self) -> usize {
        self.degree + 1
    }

    /// Total number of unknowns `P (N + 1)`.
    pub fn len(&self) -> usize {
        self.elements * (self.degree + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> T {
        T::one() / T::from_index(self.elements)
    }

    /// Reference solution points in `[0, 1]`.
    pub fn solution_points(&self) -> &[T] {
        self.solution.nodes()
    }

    /// Reference flux points, faces included.
    pub fn flux_points(&self) -> &[T] {
        &self.flux_points
    }

    /// Physical coordinates of every solution point, element by element.
    pub fn coordinates(&self) -> Vec<T> {
        let dx = self.dx();
        (0..self.elements)
            .flat_map(|e| {
                let left = T::from_index(e) * dx;
                self.solution.nodes().iter().map(move |&s| left + s * dx)
            })
            .collect()
    }

    /// Point values of `f` at the solution points.
    pub fn sample<F: Fn(T) -> T>(&self, f: F) -> Vec<T> {
        self.coordinates().into_iter().map(f).collect()
    }

    /// Evaluates the piecewise polynomial of `u` at a physical `x`.
    pub fn evaluate(&self, u: &[T], x: T) -> T {
        let p = self.elements;
        let scaled = x * T::from_index(p);
        let e = scaled.floor().to_usize().unwrap_or(0).min(p - 1);
        let s = scaled - T::from_index(e);
        let n = self.points_per_element();
        self.solution.interpolate(&u[e * n..(e + 1) * n], s)
    }

    /// `∫₀¹ u dx` by the per-element Gauss rule.
    pub fn total(&self, u: &[T]) -> T {
        let n = self.points_per_element();
        let dx = self.dx();
        u.chunks(n)
            .map(|c| c.iter().zip(self.solution.weights()).fold(T::zero(), |s, (&v, &w)| s + w * v))
            .fold(T::zero(), |s, v| s + v * dx)
    }

    fn check_len(&self, u: &[T]) -> Result<()> {
        if u.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// `∂ₓ f(u)` at every solution point, written into `out`.
    pub fn flux_derivative_into(&self, flux: &Flux<T>, u: &[T], out: &mut [T]) {
        let n = self.points_per_element();
        let nf = n + 1;
        let p = self.elements;
        // traces at the two faces of every element
        let mut traces = vec![T::zero(); 2 * p];
        let mut fvals = vec![T::zero(); p * nf];
        for e in 0..p {
            let ue = &u[e * n..(e + 1) * n];
            for k in 0..nf {
                let v = self
                    .to_flux
                    .row(k)
                    .iter()
                    .zip(ue)
                    .fold(T::zero(), |s, (&a, &b)| s + a * b);
                if k == 0 {
                    traces[2 * e] = v;
                } else if k == nf - 1 {
                    traces[2 * e + 1] = v;
                } else {
                    fvals[e * nf + k] = flux.eval(v);
                }
            }
        }
        // face i sits between element i−1 (left) and element i (right)
        for face in 0..=p {
            let left = if face > 0 {
                Some(traces[2 * (face - 1) + 1])
            } else if self.boundary == Boundary::Periodic {
                Some(traces[2 * p - 1])
            } else {
                None
            };
            let right = if face < p {
                Some(traces[2 * face])
            } else if self.boundary == Boundary::Periodic {
                Some(traces[0])
            } else {
                None
            };
            let (l, r) = match (left, right) {
                (Some(l), Some(r)) => (l, r),
                (None, Some(r)) => (r, r),
                (Some(l), None) => (l, l),
                (None, None) => unreachable!("a face always touches an element"),
            };
            let fhat = flux.numerical(l, r);
            if face > 0 {
                fvals[(face - 1) * nf + nf - 1] = fhat;
            }
            if face < p {
                fvals[face * nf] = fhat;
            }
        }
        let inv_dx = T::from_index(p);
        for e in 0..p {
            let fe = &fvals[e * nf..(e + 1) * nf];
            for r in 0..n {
                out[e * n + r] = self
                    .derivative
                    .row(r)
                    .iter()
                    .zip(fe)
                    .fold(T::zero(), |s, (&a, &b)| s + a * b)
                    * inv_dx;
            }
        }
    }

    pub fn flux_derivative(&self, flux: &Flux<T>, u: &[T]) -> Result<Vec<T>> {
        self.check_len(u)?;
        let mut out = vec![T::zero(); u.len()];
        self.flux_derivative_into(flux, u, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spectral difference flux derivative"));
        }
        Ok(out)
    }

    /// `u' = −∂ₓ f(u)` with initial state `u0`.
    pub fn semi_discrete(&self, flux: Flux<T>, u0: Vec<T>) -> Result<OdeSystem<T>> {
        self.check_len(&u0)?;
        let grid = self.clone();
        let name = match flux {
            Flux::Advection { .. } => "sd-advection",
            Flux::Burgers => "sd-burgers",
        };
        Ok(OdeSystem::new(name, self.len(), move |_, u: &[T], out: &mut [T]| {
            grid.flux_derivative_into(&flux, u, out);
            for v in out.iter_mut() {
                *v = -*v;
            }
        })
        .with_initial(u0))
    }

    /// Writes `x,u` rows for one snapshot.
    pub fn write_snapshot<W: Write>(&self, u: &[T], mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,u")?;
        for (x, v) in self.coordinates().into_iter().zip(u) {
            writeln!(out, "{:.16e},{:.16e}", x.as_f64(), v.as_f64())?;
        }
        Ok(())
    }
}

/// `Δt = C / (M + 1) · Δx / |v_max|`.
pub fn cfl_timestep<T: Real>(courant: T, dx: T, vmax: T, m: usize) -> Result<T> {
    if !(vmax.abs() > T::zero()) {
        return Err(Error::InvalidArgument("maximal wave speed must be nonzero".into()));
    }
    Ok(courant / T::from_index(m + 1) * dx / vmax.abs())
}

/// Solution values at a time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SdState<T> {
    pub values: Vec<T>,
    pub time: T,
}

/// Time marching for a spectral difference run: `N + 1` time nodes and
/// `N + 1` iterations to match the spatial order.
///
/// ADER defaults to Gauss–Legendre time nodes with the flux-integral final
/// update; DeC defaults to Gauss–Lobatto nodes ending on the slab end.
pub fn sd_time_config(method: Method, degree: usize) -> StepperConfig {
    match method {
        Method::Ader => StepperConfig::new(method, NodeFamily::GaussLegendre, degree + 1)
            .with_endpoint(EndpointUpdate::Quadrature),
        Method::Dec => {
            let family = if degree == 0 {
                NodeFamily::Equispaced
            } else {
                NodeFamily::GaussLobatto
            };
            StepperConfig::new(method, family, degree + 1)
        }
    }
}

/// One ADER-SD step (time nodes must be Gauss–Legendre).
pub fn ader_sd_step<T: Real>(
    sys: &OdeSystem<T>,
    state: &SdState<T>,
    dt: T,
    cfg: StepperConfig,
) -> Result<SdState<T>> {
    if cfg.method != Method::Ader || cfg.family != NodeFamily::GaussLegendre {
        return Err(Error::InvalidArgument(
            "ADER-SD runs on Gauss-Legendre time nodes with the ADER method".into(),
        ));
    }
    sd_step(sys, state, dt, cfg)
}

/// One DeC-SD step.
pub fn dec_sd_step<T: Real>(
    sys: &OdeSystem<T>,
    state: &SdState<T>,
    dt: T,
    cfg: StepperConfig,
) -> Result<SdState<T>> {
    if cfg.method != Method::Dec {
        return Err(Error::InvalidArgument("DeC-SD needs a DeC configuration".into()));
    }
    sd_step(sys, state, dt, cfg)
}

fn sd_step<T: Real>(sys: &OdeSystem<T>, state: &SdState<T>, dt: T, cfg: StepperConfig) -> Result<SdState<T>> {
    let stepper = ExplicitStepper::new(cfg)?;
    Ok(SdState {
        values: stepper.step(sys, state.time, &state.values, dt)?,
        time: state.time + dt,
    })
}

/// Marches `u0` to `t_end` with steps of at most `dt`, the last one shortened.
pub fn sd_march<T: Real>(
    grid: &SdGrid<T>,
    flux: Flux<T>,
    u0: Vec<T>,
    t_end: T,
    dt: T,
    cfg: StepperConfig,
) -> Result<SdState<T>> {
    let sys = grid.semi_discrete(flux, u0)?;
    let stepper = ExplicitStepper::new(cfg)?;
    let mut state = SdState {
        values: sys.initial().to_vec(),
        time: T::zero(),
    };
    for t_next in (Schedule::Uniform { dt }).times(T::zero(), t_end)? {
        let values = stepper
            .step(&sys, state.time, &state.values, t_next - state.time)
            .map_err(|e| match e {
                Error::Divergence { iteration, .. } => Error::Divergence {
                    time: state.time.as_f64(),
                    iteration,
                },
                other => other,
            })?;
        state = SdState { values, time: t_next };
    }
    Ok(state)
}

/// CFL step from the initial data: `vmax = max |f'(u0)|`, `M = N`.
pub fn sd_cfl_step<T: Real>(grid: &SdGrid<T>, flux: &Flux<T>, u0: &[T], courant: T) -> Result<T> {
    cfl_timestep(courant, grid.dx(), flux.max_speed(u0), grid.degree())
}

/// `sin(2πx)`.
pub fn sine_wave<T: Real>(x: T) -> T {
    (T::lit(2.0) * T::PI() * x).sin()
}

/// `tanh(10x − 5)`.
pub fn tanh_front<T: Real>(x: T) -> T {
    (T::lit(10.0) * x - T::lit(5.0)).tanh()
}
