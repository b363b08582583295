//! IMDeC and IMADER: the stiff part of the right-hand side is linearized at
//! the slab's initial state and treated implicitly inside every iteration.
//!
//! With `J_s = ∂s/∂y (yⁿ)` the Jacobian of the stiff part (right-hand-side
//! sign), one iteration reads
//!
//! * IMDeC: `αᵐ ← αᵐ − (I − βᵐ Δt J_s)⁻¹ L²(α)ᵐ`, one `I × I` solve per subnode;
//! * IMADER: `α ← α − (M ⊗ I − Δt G ⊗ J_s)⁻¹ (M α − r(α))`, one coupled solve
//!   of size `(M+1)·I`, with `G` the time Gram matrix.

use crate::error::{Error, Result};
use crate::explicit::{
    ader_rhs, check_state, quadrature_update, dec_l2, OneStepMethod, SlabCoefficients, TimeScheme,
};
use crate::linalg::{lu_factor_with_ratio, DenseMatrix, LuFactors};
use crate::nodes::NodeFamily;
use crate::ode::OdeSystem;
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImplicitMethod {
    ImDec,
    ImAder,
}

impl fmt::Display for ImplicitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImplicitMethod::ImDec => "imdec",
            ImplicitMethod::ImAder => "imader",
        })
    }
}

impl FromStr for ImplicitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "imdec" => Ok(ImplicitMethod::ImDec),
            "imader" => Ok(ImplicitMethod::ImAder),
            other => Err(Error::InvalidArgument(format!("unknown implicit method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImplicitConfig {
    pub method: ImplicitMethod,
    pub family: NodeFamily,
    pub order: usize,
    pub iterations: usize,
}

impl ImplicitConfig {
    pub fn new(method: ImplicitMethod, family: NodeFamily, order: usize) -> Self {
        Self {
            method,
            family,
            order,
            iterations: order,
        }
    }

    pub fn with_iterations(mut self, k: usize) -> Self {
        self.iterations = k;
        self
    }
}

/// `Δt · G ⊗ ∂S`, rows and columns ordered `m·I + i`.
///
/// `jac_source` is the Jacobian of the source in flux sign (`y' + S = 0`), i.e.
/// the negated Jacobian of the stiff right-hand side.
pub fn imader_source_tensor<T: Real>(
    scheme: &TimeScheme<T>,
    dt: T,
    jac_source: &DenseMatrix<T>,
) -> DenseMatrix<T> {
    scheme.gram().scaled(dt).kron(jac_source)
}

fn slab_times_mass<T: Real>(mass: &DenseMatrix<T>, slab: &SlabCoefficients<T>) -> SlabCoefficients<T> {
    let prod = mass
        .matmul(&slab.to_matrix())
        .expect("slab rows match mass matrix");
    SlabCoefficients::from_matrix(&prod)
}

/// Per-subnode factors of `I − βᵐ Δt J_s`.
fn imdec_factors<T: Real>(
    scheme: &TimeScheme<T>,
    jac_stiff: &DenseMatrix<T>,
    dt: T,
) -> Result<Vec<Option<LuFactors<T>>>> {
    let dim = jac_stiff.rows();
    scheme
        .theta()
        .beta
        .iter()
        .enumerate()
        .map(|(m, &beta)| {
            if beta == T::zero() {
                return Ok(None);
            }
            let j = DenseMatrix::identity(dim)
                .add(&jac_stiff.scaled(-beta * dt))?;
            // stiff steps legitimately produce badly scaled but regular
            // systems, so only exact singularity is rejected
            lu_factor_with_ratio(&j, T::zero())
                .map(Some)
                .map_err(|_| Error::SingularImplicit { subnode: m })
        })
        .collect()
}

pub fn imdec_iterate<T: Real>(
    scheme: &TimeScheme<T>,
    sys: &OdeSystem<T>,
    t_n: T,
    y_n: &[T],
    dt: T,
    iterations: usize,
) -> Result<SlabCoefficients<T>> {
    let jac = sys.stiff_jacobian(t_n, y_n)?;
    let factors = imdec_factors(scheme, &jac, dt)?;
    let mut slab = SlabCoefficients::constant(scheme.len(), y_n);
    for k in 1..=iterations {
        let l2 = dec_l2(scheme, sys, t_n, y_n, &slab, dt);
        check_state(l2.as_slice(), t_n, k)?;
        for (m, f) in factors.iter().enumerate() {
            let delta = match f {
                Some(lu) => lu.solve(l2.row(m))?,
                None => l2.row(m).to_vec(),
            };
            for (a, d) in slab.row_mut(m).iter_mut().zip(delta) {
                *a -= d;
            }
        }
        check_state(slab.as_slice(), t_n, k)?;
    }
    Ok(slab)
}

pub fn imader_iterate<T: Real>(
    scheme: &TimeScheme<T>,
    sys: &OdeSystem<T>,
    t_n: T,
    y_n: &[T],
    dt: T,
    iterations: usize,
) -> Result<SlabCoefficients<T>> {
    let dim = y_n.len();
    let jac = sys.stiff_jacobian(t_n, y_n)?;
    let source = imader_source_tensor(scheme, dt, &jac.scaled(-T::one()));
    let system = scheme.mass().kron(&DenseMatrix::identity(dim)).add(&source)?;
    let lu = lu_factor_with_ratio(&system, T::zero()).map_err(|e| match e {
        Error::Singular { pivot } => Error::SingularImplicit { subnode: pivot / dim.max(1) },
        other => other,
    })?;
    let mut slab = SlabCoefficients::constant(scheme.len(), y_n);
    for k in 1..=iterations {
        let r = ader_rhs(scheme, sys, t_n, y_n, &slab, dt).map_err(|e| match e {
            Error::Divergence { time, .. } => Error::Divergence { time, iteration: k },
            other => other,
        })?;
        let mut l2 = slab_times_mass(scheme.mass(), &slab);
        for (a, b) in l2.as_mut_slice().iter_mut().zip(r.as_slice()) {
            *a -= *b;
        }
        let delta = lu.solve(l2.as_slice())?;
        for (a, d) in slab.as_mut_slice().iter_mut().zip(delta) {
            *a -= d;
        }
        check_state(slab.as_slice(), t_n, k)?;
    }
    Ok(slab)
}

#[derive(Debug, Clone)]
pub struct ImplicitStepper<T> {
    cfg: ImplicitConfig,
    scheme: TimeScheme<T>,
}

impl<T: Real> ImplicitStepper<T> {
    pub fn new(cfg: ImplicitConfig) -> Result<Self> {
        if cfg.order == 0 || cfg.iterations == 0 {
            return Err(Error::InvalidArgument("order and iterations must be positive".into()));
        }
        Ok(Self {
            cfg,
            scheme: TimeScheme::new(cfg.family, cfg.order)?,
        })
    }

    pub fn config(&self) -> &ImplicitConfig {
        &self.cfg
    }

    pub fn scheme(&self) -> &TimeScheme<T> {
        &self.scheme
    }

    pub fn slab(&self, sys: &OdeSystem<T>, t: T, y: &[T], dt: T) -> Result<SlabCoefficients<T>> {
        match self.cfg.method {
            ImplicitMethod::ImDec => imdec_iterate(&self.scheme, sys, t, y, dt, self.cfg.iterations),
            ImplicitMethod::ImAder => imader_iterate(&self.scheme, sys, t, y, dt, self.cfg.iterations),
        }
    }
}

impl<T: Real> OneStepMethod<T> for ImplicitStepper<T> {
    fn step(&self, sys: &OdeSystem<T>, t: T, y: &[T], dt: T) -> Result<Vec<T>> {
        if !(dt > T::zero()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        if sys.stiff_split().is_none() {
            return Err(Error::MissingStiffSplit(sys.name().to_string()));
        }
        let n = self.scheme.len();
        let k = self.cfg.iterations;
        let out = if self.scheme.nodes().nodes()[n - 1] == T::one() {
            self.slab(sys, t, y, dt)?.row(n - 1).to_vec()
        } else if self.cfg.method == ImplicitMethod::ImDec {
            // same end treatment as explicit DeC: last sweep goes to t = 1
            let slab = imdec_iterate(&self.scheme, sys, t, y, dt, k - 1)?;
            quadrature_update(&self.scheme, sys, t, y, dt, &slab, &self.scheme.theta().theta_end, k)?
        } else {
            self.slab(sys, t, y, dt)?.combine(self.scheme.phi_end())
        };
        check_state(&out, t, self.cfg.iterations)?;
        Ok(out)
    }

    fn label(&self) -> String {
        format!(
            "{}-{}-p{}-k{}",
            self.cfg.method, self.cfg.family, self.cfg.order, self.cfg.iterations
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explicit::{integrate, ExplicitStepper, Method, Schedule, StepperConfig};
    use crate::ode::{biomass, lotka_volterra_default, scalar_linear};
    use approx::assert_abs_diff_eq;

    fn implicit(method: ImplicitMethod, family: NodeFamily, order: usize) -> ImplicitStepper<f64> {
        ImplicitStepper::new(ImplicitConfig::new(method, family, order)).unwrap()
    }

    #[test]
    fn source_tensor_examples() {
        for family in [NodeFamily::GaussLobatto, NodeFamily::GaussLegendre] {
            let scheme = TimeScheme::<f64>::new(family, 2).unwrap();
            let zero = imader_source_tensor(&scheme, 0.3, &DenseMatrix::zeros(3, 3));
            assert_eq!(zero.max_abs(), 0.0);
            let g = scheme.gram();
            assert_abs_diff_eq!(g[(0, 0)], 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(g[(1, 1)], 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(g[(0, 1)], 0.0, epsilon = 1e-15);
            let s = imader_source_tensor(&scheme, 2.0, &DenseMatrix::diag(&[3.0]));
            assert_abs_diff_eq!(s[(1, 1)], 3.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn degenerate_split_reduces_to_explicit() {
        let systems = [biomass::<f64>().non_stiff(), lotka_volterra_default::<f64>().non_stiff()];
        for sys in &systems {
            let y0 = sys.initial().to_vec();
            for family in NodeFamily::ALL {
                for order in 2..=5 {
                    let pairs = [
                        (ImplicitMethod::ImDec, Method::Dec),
                        (ImplicitMethod::ImAder, Method::Ader),
                    ];
                    for (im, ex) in pairs {
                        let a = implicit(im, family, order).step(sys, 0.0, &y0, 0.05).unwrap();
                        let b = ExplicitStepper::new(StepperConfig::new(ex, family, order))
                            .unwrap()
                            .step(sys, 0.0, &y0, 0.05)
                            .unwrap();
                        for (p, q) in a.iter().zip(&b) {
                            assert!((p - q).abs() <= 1e-13 * q.abs().max(1.0), "{im} {family} {order}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn stiff_scalar_stays_bounded() {
        let sys = scalar_linear(-1e6);
        for method in [ImplicitMethod::ImDec, ImplicitMethod::ImAder] {
            let y = implicit(method, NodeFamily::GaussLobatto, 2).step(&sys, 0.0, &[1.0], 1.0).unwrap();
            assert!(y[0].abs() <= 1.0, "{method}: {}", y[0]);
        }
        let explicit = ExplicitStepper::new(StepperConfig::new(Method::Dec, NodeFamily::GaussLobatto, 2)).unwrap();
        let y = explicit.step(&sys, 0.0, &[1.0], 1.0).unwrap();
        assert!(y[0].abs() > 1e10);
    }

    #[test]
    fn biomass_large_steps_track_profile() {
        let sys = biomass::<f64>();
        for method in [ImplicitMethod::ImDec, ImplicitMethod::ImAder] {
            let s = implicit(method, NodeFamily::GaussLobatto, 4);
            let traj = integrate(&sys, 0.0, 10.0, &Schedule::Uniform { dt: 1.0 }, &s).unwrap();
            for y in &traj.states {
                assert!(y.iter().all(|v| (-0.5..=10.5).contains(v)), "{method}: {y:?}");
            }
        }
    }

    #[test]
    fn missing_split_is_an_error() {
        let sys = OdeSystem::<f64>::new("plain", 1, |_, y, out| out[0] = -y[0]);
        let r = implicit(ImplicitMethod::ImDec, NodeFamily::GaussLobatto, 2).step(&sys, 0.0, &[1.0], 0.1);
        assert!(matches!(r, Err(Error::MissingStiffSplit(_))));
    }

    #[test]
    fn singular_subnode_system_is_reported() {
        // I − βᵐΔt λ vanishes at the endpoint for λΔt = 1
        let sys = scalar_linear(1.0);
        let r = implicit(ImplicitMethod::ImDec, NodeFamily::GaussLobatto, 2).step(&sys, 0.0, &[1.0], 1.0);
        assert_eq!(r, Err(Error::SingularImplicit { subnode: 1 }));
    }

    /// Newton on the flattened residual with a difference Jacobian.
    fn newton<F: Fn(&[f64]) -> Vec<f64>>(x0: Vec<f64>, f: F) -> Vec<f64> {
        let mut x = x0;
        for _ in 0..20 {
            let fx = f(&x);
            if fx.iter().all(|v| v.abs() < 1e-15) {
                break;
            }
            let n = x.len();
            let mut jac = DenseMatrix::zeros(n, n);
            for j in 0..n {
                let mut xp = x.clone();
                let h = 1e-7 * x[j].abs().max(1.0);
                xp[j] += h;
                let fp = f(&xp);
                for i in 0..n {
                    jac[(i, j)] = (fp[i] - fx[i]) / h;
                }
            }
            let dx = jac.lu().unwrap().solve(&fx).unwrap();
            for (a, d) in x.iter_mut().zip(dx) {
                *a -= d;
            }
        }
        x
    }

    #[test]
    fn collocation_fixed_point_is_stationary() {
        let sys = scalar_linear(-7.0);
        let y0 = [1.0];
        let dt = 0.2;
        let scheme = TimeScheme::<f64>::new(NodeFamily::GaussLobatto, 2).unwrap();

        let dec_star = newton(vec![1.0, 1.0], |a| {
            let slab = SlabCoefficients::from_rows(&[vec![a[0]], vec![a[1]]]);
            dec_l2(&scheme, &sys, 0.0, &y0, &slab, dt).as_slice().to_vec()
        });
        let ader_star = newton(vec![1.0, 1.0], |a| {
            let slab = SlabCoefficients::from_rows(&[vec![a[0]], vec![a[1]]]);
            let r = ader_rhs(&scheme, &sys, 0.0, &y0, &slab, dt).unwrap();
            let ma = scheme.mass().matvec(a).unwrap();
            ma.iter().zip(r.as_slice()).map(|(p, q)| p - q).collect()
        });

        // one iteration from the fixed point: rebuild the update by hand
        let jac = sys.stiff_jacobian(0.0, &y0).unwrap();
        let slab = SlabCoefficients::from_rows(&[vec![dec_star[0]], vec![dec_star[1]]]);
        let l2 = dec_l2(&scheme, &sys, 0.0, &y0, &slab, dt);
        let factors = imdec_factors(&scheme, &jac, dt).unwrap();
        for (m, f) in factors.iter().enumerate() {
            let d = f.as_ref().map_or(l2.row(m)[0], |lu| lu.solve(l2.row(m)).unwrap()[0]);
            assert!(d.abs() < 1e-12);
            assert!((slab.row(m)[0] - d - dec_star[m]).abs() < 1e-12);
        }

        let slab = SlabCoefficients::from_rows(&[vec![ader_star[0]], vec![ader_star[1]]]);
        let r = ader_rhs(&scheme, &sys, 0.0, &y0, &slab, dt).unwrap();
        let ma = scheme.mass().matvec(&ader_star).unwrap();
        let l2: Vec<f64> = ma.iter().zip(r.as_slice()).map(|(p, q)| p - q).collect();
        let system = scheme
            .mass()
            .kron(&DenseMatrix::identity(1))
            .add(&imader_source_tensor(&scheme, dt, &jac.scaled(-1.0)))
            .unwrap();
        let d = system.lu().unwrap().solve(&l2).unwrap();
        for m in 0..2 {
            assert!(d[m].abs() < 1e-12);
        }

        // and a full implicit step on a linear problem lands on the fixed point
        let s = implicit(ImplicitMethod::ImAder, NodeFamily::GaussLobatto, 2);
        let slab = s.slab(&sys, 0.0, &y0, dt).unwrap();
        for m in 0..2 {
            assert!((slab.row(m)[0] - ader_star[m]).abs() < 1e-12);
        }
    }
}
