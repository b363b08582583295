//! ODE systems `y' = f(t, y)` and the catalog of test problems.
//!
//! Systems are stored in right-hand-side form. The integrators are written for
//! the flux form `y' + F(y) = 0`, so every formula uses `F = −f`; the sign flip
//! lives inside the steppers and never in user-supplied closures.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Real;
use std::fmt;
use std::sync::Arc;

pub type RhsFn<T> = Arc<dyn Fn(T, &[T], &mut [T]) + Send + Sync>;
pub type JacFn<T> = Arc<dyn Fn(T, &[T]) -> DenseMatrix<T> + Send + Sync>;
pub type SolutionFn<T> = Arc<dyn Fn(T) -> Vec<T> + Send + Sync>;
pub type InvariantFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;

/// `f = explicit + stiff`; the stiff part is linearized by the implicit steppers.
#[derive(Clone)]
pub struct StiffSplit<T> {
    pub explicit: RhsFn<T>,
    pub stiff: RhsFn<T>,
    pub stiff_jacobian: Option<JacFn<T>>,
}

#[derive(Clone)]
pub struct OdeSystem<T> {
    name: String,
    dim: usize,
    rhs: RhsFn<T>,
    jacobian: Option<JacFn<T>>,
    stiff_split: Option<StiffSplit<T>>,
    analytic: Option<SolutionFn<T>>,
    invariant: Option<InvariantFn<T>>,
    initial: Vec<T>,
}

impl<T> fmt::Debug for OdeSystem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdeSystem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("jacobian", &self.jacobian.is_some())
            .field("stiff_split", &self.stiff_split.is_some())
            .field("analytic", &self.analytic.is_some())
            .finish()
    }
}

impl<T: Real> OdeSystem<T> {
    pub fn new<F>(name: impl Into<String>, dim: usize, rhs: F) -> Self
    where
        F: Fn(T, &[T], &mut [T]) + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            rhs: Arc::new(rhs),
            jacobian: None,
            stiff_split: None,
            analytic: None,
            invariant: None,
            initial: vec![T::zero(); dim],
        }
    }

    pub fn with_jacobian<F>(mut self, jac: F) -> Self
    where
        F: Fn(T, &[T]) -> DenseMatrix<T> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    pub fn with_stiff_split(mut self, split: StiffSplit<T>) -> Self {
        self.stiff_split = Some(split);
        self
    }

    /// Treats the whole right-hand side as stiff, reusing the system Jacobian.
    pub fn fully_stiff(mut self) -> Self {
        let dim = self.dim;
        self.stiff_split = Some(StiffSplit {
            explicit: Arc::new(move |_, _, out: &mut [T]| {
                debug_assert_eq!(out.len(), dim);
                out.fill(T::zero());
            }),
            stiff: self.rhs.clone(),
            stiff_jacobian: self.jacobian.clone(),
        });
        self
    }

    /// Treats nothing as stiff: the stiff part and its Jacobian vanish.
    pub fn non_stiff(mut self) -> Self {
        let dim = self.dim;
        self.stiff_split = Some(StiffSplit {
            explicit: self.rhs.clone(),
            stiff: Arc::new(|_, _, out: &mut [T]| out.fill(T::zero())),
            stiff_jacobian: Some(Arc::new(move |_, _| DenseMatrix::zeros(dim, dim))),
        });
        self
    }

    pub fn with_analytic<F>(mut self, sol: F) -> Self
    where
        F: Fn(T) -> Vec<T> + Send + Sync + 'static,
    {
        self.analytic = Some(Arc::new(sol));
        self
    }

    pub fn with_invariant<F>(mut self, inv: F) -> Self
    where
        F: Fn(&[T]) -> T + Send + Sync + 'static,
    {
        self.invariant = Some(Arc::new(inv));
        self
    }

    pub fn with_initial(mut self, y0: Vec<T>) -> Self {
        assert_eq!(y0.len(), self.dim, "initial state has wrong dimension");
        self.initial = y0;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn initial(&self) -> &[T] {
        &self.initial
    }

    pub fn stiff_split(&self) -> Option<&StiffSplit<T>> {
        self.stiff_split.as_ref()
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn rhs_into(&self, t: T, y: &[T], out: &mut [T]) {
        (self.rhs)(t, y, out)
    }

    pub fn rhs(&self, t: T, y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        (self.rhs)(t, y, &mut out);
        out
    }

    /// Analytic Jacobian when available, central differences otherwise.
    pub fn jacobian(&self, t: T, y: &[T]) -> Result<DenseMatrix<T>> {
        match &self.jacobian {
            Some(j) => Ok(j(t, y)),
            None => fd_jacobian(self, t, y),
        }
    }

    /// Jacobian of the stiff part.
    pub fn stiff_jacobian(&self, t: T, y: &[T]) -> Result<DenseMatrix<T>> {
        let split = self
            .stiff_split
            .as_ref()
            .ok_or_else(|| Error::MissingStiffSplit(self.name.clone()))?;
        match &split.stiff_jacobian {
            Some(j) => Ok(j(t, y)),
            None => {
                let stiff = split.stiff.clone();
                central_differences(self.dim, y, |yy, out| stiff(t, yy, out))
            }
        }
    }

    pub fn analytic(&self, t: T) -> Option<Vec<T>> {
        self.analytic.as_ref().map(|s| s(t))
    }

    pub fn has_analytic(&self) -> bool {
        self.analytic.is_some()
    }

    pub fn invariant(&self, y: &[T]) -> Option<T> {
        self.invariant.as_ref().map(|v| v(y))
    }
}

/// Central-difference Jacobian of the full right-hand side.
pub fn fd_jacobian<T: Real>(sys: &OdeSystem<T>, t: T, y: &[T]) -> Result<DenseMatrix<T>> {
    central_differences(sys.dim(), y, |yy, out| sys.rhs_into(t, yy, out))
}

fn central_differences<T: Real, F>(dim: usize, y: &[T], f: F) -> Result<DenseMatrix<T>>
where
    F: Fn(&[T], &mut [T]),
{
    if y.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: y.len(),
        });
    }
    let h0 = T::lit(1e-7).max(T::epsilon().sqrt());
    let mut jac = DenseMatrix::zeros(dim, dim);
    let mut yp = y.to_vec();
    let mut fp = vec![T::zero(); dim];
    let mut fm = vec![T::zero(); dim];
    for j in 0..dim {
        let h = h0.max(h0 * y[j].abs());
        yp[j] = y[j] + h;
        f(&yp, &mut fp);
        yp[j] = y[j] - h;
        f(&yp, &mut fm);
        yp[j] = y[j];
        for i in 0..dim {
            let d = (fp[i] - fm[i]) / (h + h);
            if !d.is_finite() {
                return Err(Error::NonFinite("right-hand side during differencing"));
            }
            jac[(i, j)] = d;
        }
    }
    Ok(jac)
}

/// Ordered samples of a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(t0: T, y0: Vec<T>) -> Self {
        Self {
            times: vec![t0],
            states: vec![y0],
        }
    }

    pub fn push(&mut self, t: T, y: Vec<T>) {
        self.times.push(t);
        self.states.push(y);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn last_state(&self) -> &[T] {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn last_time(&self) -> T {
        *self.times.last().expect("trajectory is never empty")
    }
}

// ---- catalog ----------------------------------------------------------------

/// `y' = λy`, `y(0) = 1`.
pub fn scalar_linear<T: Real>(lambda: T) -> OdeSystem<T> {
    OdeSystem::new("linear", 1, move |_, y: &[T], out: &mut [T]| out[0] = lambda * y[0])
        .with_jacobian(move |_, _| DenseMatrix::diag(&[lambda]))
        .with_analytic(move |t| vec![(lambda * t).exp()])
        .with_initial(vec![T::one()])
        .fully_stiff()
}

/// `y' = −k|y|y`, `y(0) = 1`, solution `1/(1 + kt)`.
pub fn scalar_nonlinear<T: Real>(k: T) -> OdeSystem<T> {
    OdeSystem::new("nonlinear", 1, move |_, y: &[T], out: &mut [T]| out[0] = -k * y[0].abs() * y[0])
        .with_jacobian(move |_, y: &[T]| DenseMatrix::diag(&[-T::lit(2.0) * k * y[0].abs()]))
        .with_analytic(move |t| vec![T::one() / (T::one() + k * t)])
        .with_initial(vec![T::one()])
        .fully_stiff()
}

/// Linear three-compartment biomass transfer, `y(0) = (0, 0, 10)`.
pub fn biomass<T: Real>() -> OdeSystem<T> {
    let c = |x: f64| T::lit(x);
    let y30 = c(10.0);
    OdeSystem::new("biomass", 3, move |_, y: &[T], out: &mut [T]| {
        out[0] = -y[0] + c(3.0) * y[1];
        out[1] = -c(3.0) * y[1] + c(5.0) * y[2];
        out[2] = -c(5.0) * y[2];
    })
    .with_jacobian(move |_, _| {
        DenseMatrix::from_rows(&[
            vec![-c(1.0), c(3.0), c(0.0)],
            vec![c(0.0), -c(3.0), c(5.0)],
            vec![c(0.0), c(0.0), -c(5.0)],
        ])
        .expect("3x3")
    })
    .with_analytic(move |t| {
        let e1 = (-t).exp();
        let e3 = (-c(3.0) * t).exp();
        let e5 = (-c(5.0) * t).exp();
        vec![
            c(15.0) / c(8.0) * y30 * (e5 - c(2.0) * e3 + e1),
            c(5.0) / c(2.0) * y30 * (e3 - e5),
            y30 * e5,
        ]
    })
    .with_initial(vec![c(0.0), c(0.0), y30])
    .fully_stiff()
}

/// Predator–prey system with the conserved functional
/// `V = δy₁ − γ ln y₁ + βy₂ − α ln y₂`. Initial state `(1, 2)`.
pub fn lotka_volterra<T: Real>(alpha: T, beta: T, delta: T, gamma: T) -> OdeSystem<T> {
    OdeSystem::new("lotka-volterra", 2, move |_, y: &[T], out: &mut [T]| {
        out[0] = alpha * y[0] - beta * y[0] * y[1];
        out[1] = -gamma * y[1] + delta * y[0] * y[1];
    })
    .with_jacobian(move |_, y: &[T]| {
        DenseMatrix::from_rows(&[
            vec![alpha - beta * y[1], -beta * y[0]],
            vec![delta * y[1], -gamma + delta * y[0]],
        ])
        .expect("2x2")
    })
    .with_invariant(move |y: &[T]| delta * y[0] - gamma * y[0].ln() + beta * y[1] - alpha * y[1].ln())
    .with_initial(vec![T::one(), T::lit(2.0)])
    .fully_stiff()
}

/// Lotka–Volterra with parameters `(α, β, δ, γ) = (1, 0.2, 0.5, 0.2)`.
pub fn lotka_volterra_default<T: Real>() -> OdeSystem<T> {
    lotka_volterra(T::one(), T::lit(0.2), T::lit(0.5), T::lit(0.2))
}

/// Robertson chemical kinetics, `y(0) = (1, 0, 0)`. The whole right-hand side
/// is the stiff part.
pub fn robertson<T: Real>() -> OdeSystem<T> {
    let k1 = T::lit(0.04);
    let k2 = T::lit(1e4);
    let k3 = T::lit(3e7);
    OdeSystem::new("robertson", 3, move |_, y: &[T], out: &mut [T]| {
        out[0] = k2 * y[1] * y[2] - k1 * y[0];
        out[1] = k1 * y[0] - k2 * y[1] * y[2] - k3 * y[1] * y[1];
        out[2] = k3 * y[1] * y[1];
    })
    .with_jacobian(move |_, y: &[T]| {
        let z = T::zero();
        let two = T::lit(2.0);
        DenseMatrix::from_rows(&[
            vec![-k1, k2 * y[2], k2 * y[1]],
            vec![k1, -k2 * y[2] - two * k3 * y[1], -k2 * y[1]],
            vec![z, two * k3 * y[1], z],
        ])
        .expect("3x3")
    })
    .with_initial(vec![T::one(), T::zero(), T::zero()])
    .fully_stiff()
}

/// `y' = A y` for a constant matrix, analytic solution absent.
pub fn linear_system<T: Real>(name: &str, a: DenseMatrix<T>, y0: Vec<T>) -> OdeSystem<T> {
    assert!(a.is_square() && a.rows() == y0.len());
    let dim = y0.len();
    let a_rhs = a.clone();
    OdeSystem::new(name, dim, move |_, y: &[T], out: &mut [T]| {
        for (i, o) in out.iter_mut().enumerate() {
            *o = a_rhs.row(i).iter().zip(y).fold(T::zero(), |s, (&p, &q)| s + p * q);
        }
    })
    .with_jacobian(move |_, _| a.clone())
    .with_initial(y0)
    .fully_stiff()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn catalog() -> Vec<OdeSystem<f64>> {
        vec![
            scalar_linear(10.0),
            scalar_nonlinear(10.0),
            biomass(),
            lotka_volterra_default(),
            robertson(),
        ]
    }

    #[test]
    fn scalar_linear_examples() {
        let s = scalar_linear(10.0);
        assert_eq!(s.analytic(0.0).unwrap(), vec![1.0]);
        assert_abs_diff_eq!(s.analytic(0.1).unwrap()[0], std::f64::consts::E, epsilon = 1e-12);
        let s0 = scalar_linear(0.0);
        assert_eq!(s0.analytic(3.0).unwrap(), vec![1.0]);
        assert_eq!(s0.rhs(0.0, &[4.0]), vec![0.0]);
    }

    #[test]
    fn scalar_nonlinear_examples() {
        let s = scalar_nonlinear(10.0);
        assert_abs_diff_eq!(s.analytic(0.1).unwrap()[0], 0.5, epsilon = 1e-15);
        assert_eq!(s.rhs(0.0, &[0.0]), vec![0.0]);
        assert_eq!(s.rhs(0.0, &[1.0]), vec![-10.0]);
    }

    #[test]
    fn biomass_examples() {
        let s = biomass::<f64>();
        assert_eq!(s.initial(), &[0.0, 0.0, 10.0]);
        assert_eq!(s.analytic(0.0).unwrap(), vec![0.0, 0.0, 10.0]);
        assert_abs_diff_eq!(s.analytic(1.0).unwrap()[2], 10.0 * (-5f64).exp(), epsilon = 1e-15);
        // d/dt of the total equals −y₁
        let y = [0.7, 1.3, 2.9];
        let total: f64 = s.rhs(0.0, &y).iter().sum();
        assert_abs_diff_eq!(total, -y[0], epsilon = 1e-14);
    }

    #[test]
    fn lotka_volterra_examples() {
        let s = lotka_volterra_default::<f64>();
        let eq = s.rhs(0.0, &[0.4, 5.0]);
        assert_abs_diff_eq!(eq[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(eq[1], 0.0, epsilon = 1e-15);
        let r = s.rhs(0.0, &[1.0, 2.0]);
        assert_abs_diff_eq!(r[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(r[1], 0.6, epsilon = 1e-15);
        assert_eq!(s.rhs(0.0, &[3.0, 0.0]), vec![3.0, 0.0]);
        assert!(s.invariant(&[1.0, 2.0]).is_some());
    }

    #[test]
    fn robertson_examples() {
        let s = robertson::<f64>();
        let r = s.rhs(0.0, &[1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(r[0], -0.04, epsilon = 1e-17);
        assert_abs_diff_eq!(r[1], 0.04, epsilon = 1e-17);
        assert_eq!(r[2], 0.0);
        let j = s.jacobian(0.0, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(j.row(0), &[-0.04, 0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let y: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            let sum: f64 = s.rhs(0.0, &y).iter().sum();
            assert!(sum.abs() < 1e-9 * 3e7);
            // Jacobian columns sum to zero as well
            let j = s.jacobian(0.0, &y).unwrap();
            for c in 0..3 {
                let col: f64 = j.column(c).iter().sum();
                assert!(col.abs() < 1e-7);
            }
        }
    }

    #[test]
    fn fd_jacobian_examples() {
        let j = fd_jacobian(&scalar_linear(10.0), 0.0, &[1.3]).unwrap();
        assert_abs_diff_eq!(j[(0, 0)], 10.0, epsilon = 1e-6);
        let j = fd_jacobian(&biomass(), 0.0, &[0.3, 0.2, 5.0]).unwrap();
        let expected = [[-1.0, 3.0, 0.0], [0.0, -3.0, 5.0], [0.0, 0.0, -5.0]];
        for i in 0..3 {
            for k in 0..3 {
                assert_abs_diff_eq!(j[(i, k)], expected[i][k], epsilon = 1e-6);
            }
        }
        let j = fd_jacobian(&lotka_volterra_default(), 0.0, &[1.0, 2.0]).unwrap();
        let expected = [[0.6, -0.2], [1.0, 0.3]];
        for i in 0..2 {
            for k in 0..2 {
                assert_abs_diff_eq!(j[(i, k)], expected[i][k], epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn fd_jacobian_reports_non_finite() {
        let s = OdeSystem::<f64>::new("blowup", 1, |_, y, out| out[0] = (y[0] - 1.0).sqrt());
        assert!(fd_jacobian(&s, 0.0, &[1.0]).is_err());
    }

    #[test]
    fn analytic_jacobians_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for sys in catalog() {
            for _ in 0..20 {
                let y: Vec<f64> = (0..sys.dim()).map(|_| rng.gen_range(0.1..2.0)).collect();
                let a = sys.jacobian(0.0, &y).unwrap();
                let f = fd_jacobian(&sys, 0.0, &y).unwrap();
                let scale = a.max_abs().max(1.0);
                for (p, q) in a.as_slice().iter().zip(f.as_slice()) {
                    assert!((p - q).abs() <= 1e-5 * scale, "{}: {p} vs {q}", sys.name());
                }
            }
        }
    }

    #[test]
    fn stiff_split_sums_to_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for sys in catalog() {
            let split = sys.stiff_split().unwrap();
            for _ in 0..20 {
                let y: Vec<f64> = (0..sys.dim()).map(|_| rng.gen_range(0.1..2.0)).collect();
                let mut e = vec![0.0; sys.dim()];
                let mut s = vec![0.0; sys.dim()];
                (split.explicit)(0.0, &y, &mut e);
                (split.stiff)(0.0, &y, &mut s);
                for ((a, b), f) in e.iter().zip(&s).zip(sys.rhs(0.0, &y)) {
                    assert!((a + b - f).abs() <= 1e-12 * f.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn analytic_solutions_satisfy_their_odes() {
        for sys in catalog().into_iter().filter(|s| s.has_analytic()) {
            for n in 0..20 {
                let t = 0.05 * n as f64 + 0.01;
                let h = 1e-6;
                let yp = sys.analytic(t + h).unwrap();
                let ym = sys.analytic(t - h).unwrap();
                let f = sys.rhs(t, &sys.analytic(t).unwrap());
                for i in 0..sys.dim() {
                    let d = (yp[i] - ym[i]) / (2.0 * h);
                    assert!((d - f[i]).abs() <= 1e-6 * f[i].abs().max(1.0), "{}", sys.name());
                }
            }
        }
    }

    #[test]
    fn stiff_jacobian_falls_back_to_differences() {
        let sys = OdeSystem::<f64>::new("sq", 1, |_, y, out| out[0] = -y[0] * y[0]).fully_stiff();
        let j = sys.stiff_jacobian(0.0, &[2.0]).unwrap();
        assert_abs_diff_eq!(j[(0, 0)], -4.0, epsilon = 1e-6);
        let plain = OdeSystem::<f64>::new("plain", 1, |_, _, out| out[0] = 0.0);
        assert!(matches!(plain.stiff_jacobian(0.0, &[0.0]), Err(Error::MissingStiffSplit(_))));
    }
}
