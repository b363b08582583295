//! Node families on the reference slab `[0, 1]`, Lagrange bases over them and
//! the integrated-basis (θ) tables used by deferred correction.
//!
//! Quadrature points always coincide with the basis points, so the quadrature
//! weights stored on a [`NodeSet`] are the interpolatory weights of its own
//! Lagrange basis.

use crate::error::{Error, Result};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Largest supported node count.
pub const MAX_NODES: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeFamily {
    Equispaced,
    GaussLobatto,
    GaussLegendre,
}

impl NodeFamily {
    pub const ALL: [NodeFamily; 3] = [
        NodeFamily::Equispaced,
        NodeFamily::GaussLobatto,
        NodeFamily::GaussLegendre,
    ];

    /// Whether both slab endpoints are nodes (count ≥ 2).
    pub fn includes_endpoints(self) -> bool {
        !matches!(self, NodeFamily::GaussLegendre)
    }

    pub fn min_count(self) -> usize {
        match self {
            NodeFamily::GaussLobatto => 2,
            _ => 1,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            NodeFamily::Equispaced => "equispaced",
            NodeFamily::GaussLobatto => "lobatto",
            NodeFamily::GaussLegendre => "legendre",
        }
    }
}

impl fmt::Display for NodeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for NodeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "equispaced" | "eq" | "equidistant" => Ok(NodeFamily::Equispaced),
            "lobatto" | "gausslobatto" | "gauss-lobatto" | "glb" => Ok(NodeFamily::GaussLobatto),
            "legendre" | "gausslegendre" | "gauss-legendre" | "gl" => Ok(NodeFamily::GaussLegendre),
            other => Err(Error::InvalidArgument(format!("unknown node family `{other}`"))),
        }
    }
}

/// Nodes, interpolatory weights and Lagrange data on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet<T> {
    family: NodeFamily,
    nodes: Vec<T>,
    weights: Vec<T>,
    // Π_{j≠r} (t_r − t_j)
    denominators: Vec<T>,
    negative_weights: bool,
}

impl<T: Real> NodeSet<T> {
    /// Builds `count` nodes of the given family on `[0, 1]`.
    ///
    /// Gauss families are computed by Newton iteration on the Legendre
    /// polynomial (or its derivative for Lobatto interior nodes). Equispaced
    /// weights are the closed Newton–Cotes weights, obtained by integrating the
    /// basis with a Gauss rule of sufficient degree.
    pub fn new(family: NodeFamily, count: usize) -> Result<Self> {
        if count < family.min_count() {
            return Err(Error::InvalidArgument(format!(
                "{family} nodes need at least {} points, got {count}",
                family.min_count()
            )));
        }
        if count > MAX_NODES {
            return Err(Error::InvalidArgument(format!(
                "at most {MAX_NODES} nodes are supported, got {count}"
            )));
        }
        let (nodes, weights) = match family {
            NodeFamily::GaussLegendre => gauss_legendre(count),
            NodeFamily::GaussLobatto => gauss_lobatto(count),
            NodeFamily::Equispaced => {
                let nodes: Vec<T> = if count == 1 {
                    vec![T::zero()]
                } else {
                    let h = T::one() / T::from_index(count - 1);
                    (0..count).map(|i| T::from_index(i) * h).collect()
                };
                let basis = LagrangePolys::new(&nodes);
                let weights = (0..count)
                    .map(|r| basis.integral(r, T::zero(), T::one()))
                    .collect();
                (nodes, weights)
            }
        };
        let denominators = denominators(&nodes);
        let negative_weights = weights.iter().any(|w| *w < T::zero());
        Ok(Self {
            family,
            nodes,
            weights,
            denominators,
            negative_weights,
        })
    }

    pub fn family(&self) -> NodeFamily {
        self.family
    }

    /// Number of nodes, M + 1.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// True when some quadrature weight is negative (equispaced, 9+ nodes).
    pub fn has_negative_weights(&self) -> bool {
        self.negative_weights
    }

    /// Value of the `r`-th Lagrange polynomial at `t`. Extrapolation allowed.
    pub fn lagrange_eval(&self, r: usize, t: T) -> T {
        let mut num = T::one();
        for (j, &tj) in self.nodes.iter().enumerate() {
            if j != r {
                num *= t - tj;
            }
        }
        num / self.denominators[r]
    }

    /// Derivative of the `r`-th Lagrange polynomial at `t`.
    pub fn lagrange_deriv(&self, r: usize, t: T) -> T {
        let n = self.nodes.len();
        let mut sum = T::zero();
        for k in (0..n).filter(|&k| k != r) {
            let mut prod = T::one();
            for (j, &tj) in self.nodes.iter().enumerate() {
                if j != r && j != k {
                    prod *= t - tj;
                }
            }
            sum += prod;
        }
        sum / self.denominators[r]
    }

    /// All basis values at `t`.
    pub fn basis_at(&self, t: T) -> Vec<T> {
        (0..self.len()).map(|r| self.lagrange_eval(r, t)).collect()
    }

    pub fn basis_deriv_at(&self, t: T) -> Vec<T> {
        (0..self.len()).map(|r| self.lagrange_deriv(r, t)).collect()
    }

    /// Interpolates nodal `values` and evaluates at `t`.
    pub fn interpolate(&self, values: &[T], t: T) -> T {
        values
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (r, &v)| acc + v * self.lagrange_eval(r, t))
    }

    /// Applies the quadrature rule to a function on `[0, 1]`.
    pub fn integrate<F: FnMut(T) -> T>(&self, mut f: F) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&t, &w)| acc + w * f(t))
    }
}

fn denominators<T: Real>(nodes: &[T]) -> Vec<T> {
    (0..nodes.len())
        .map(|r| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != r)
                .fold(T::one(), |acc, (_, &tj)| acc * (nodes[r] - tj))
        })
        .collect()
}

/// Legendre `P_n(x)` and `P_n'(x)` by the three-term recurrence.
fn legendre<T: Real>(n: usize, x: T) -> (T, T) {
    if n == 0 {
        return (T::one(), T::zero());
    }
    let mut p_prev = T::one();
    let mut p = x;
    for k in 2..=n {
        let kf = T::from_index(k);
        let next = ((T::lit(2.0) * kf - T::one()) * x * p - (kf - T::one()) * p_prev) / kf;
        p_prev = p;
        p = next;
    }
    let nf = T::from_index(n);
    // Derivative from the Bonnet identity; valid away from |x| = 1, which the
    // Newton iterates never reach.
    let dp = nf * (x * p - p_prev) / (x * x - T::one());
    (p, dp)
}

fn newton<T: Real, F: Fn(T) -> (T, T)>(mut x: T, f: F) -> T {
    let tol = T::epsilon() * T::lit(4.0);
    let mut converged = 0;
    for _ in 0..100 {
        let (val, der) = f(x);
        let dx = val / der;
        x -= dx;
        if dx.abs() <= tol {
            converged += 1;
            // one polishing pass after convergence
            if converged == 2 {
                break;
            }
        }
    }
    x
}

fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let nf = T::from_index(n);
    let mut pairs: Vec<(T, T)> = (0..n)
        .map(|i| {
            let guess = (T::PI() * (T::from_index(i) + T::lit(0.75)) / (nf + T::lit(0.5))).cos();
            let x = newton(guess, |x| legendre(n, x));
            let (_, dp) = legendre(n, x);
            let w = T::lit(2.0) / ((T::one() - x * x) * dp * dp);
            ((x + T::one()) / T::lit(2.0), w / T::lit(2.0))
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite nodes"));
    pairs.into_iter().unzip()
}

fn gauss_lobatto<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let deg = n - 1;
    let degf = T::from_index(deg);
    let scale = degf * (degf + T::one());
    let mut xs = vec![-T::one()];
    for i in (1..deg).rev() {
        let guess = (T::PI() * T::from_index(i) / degf).cos();
        // roots of P'_deg; (1 − x²) P'' = 2x P' − deg(deg+1) P
        let x = newton(guess, |x| {
            let (p, dp) = legendre(deg, x);
            let ddp = (T::lit(2.0) * x * dp - scale * p) / (T::one() - x * x);
            (dp, ddp)
        });
        xs.push(x);
    }
    xs.push(T::one());
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for x in xs {
        let p = if x.abs() == T::one() {
            T::one()
        } else {
            legendre(deg, x).0
        };
        nodes.push((x + T::one()) / T::lit(2.0));
        weights.push(T::one() / (scale * p * p));
    }
    // pin the endpoints exactly
    nodes[0] = T::zero();
    nodes[n - 1] = T::one();
    (nodes, weights)
}

/// Lagrange basis in product form, integrated by a Gauss rule that is exact
/// for every polynomial of degree below `2 * INTEGRATION_POINTS`.
struct LagrangePolys<T> {
    nodes: Vec<T>,
    denoms: Vec<T>,
    rule: (Vec<T>, Vec<T>),
}

const INTEGRATION_POINTS: usize = 8;

impl<T: Real> LagrangePolys<T> {
    fn new(nodes: &[T]) -> Self {
        Self {
            nodes: nodes.to_vec(),
            denoms: denominators(nodes),
            rule: gauss_legendre(INTEGRATION_POINTS),
        }
    }

    fn eval(&self, r: usize, t: T) -> T {
        self.nodes
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != r)
            .fold(T::one(), |acc, (_, &tj)| acc * (t - tj))
            / self.denoms[r]
    }

    fn integral(&self, r: usize, a: T, b: T) -> T {
        let len = b - a;
        let (xs, ws) = &self.rule;
        xs.iter()
            .zip(ws)
            .fold(T::zero(), |acc, (&x, &w)| acc + w * self.eval(r, a + len * x))
            * len
    }
}

/// Integrated Lagrange basis: `theta[m][r] = ∫₀^{t_m} φ_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaTable<T> {
    pub theta: Vec<Vec<T>>,
    pub theta_end: Vec<T>,
    /// Subnode positions on the reference slab.
    pub beta: Vec<T>,
}

impl<T: Real> ThetaTable<T> {
    pub fn new(ns: &NodeSet<T>) -> Self {
        let polys = LagrangePolys::new(ns.nodes());
        let n = ns.len();
        let theta = ns
            .nodes()
            .iter()
            .map(|&tm| {
                (0..n)
                    .map(|r| {
                        if tm == T::zero() {
                            T::zero()
                        } else {
                            polys.integral(r, T::zero(), tm)
                        }
                    })
                    .collect()
            })
            .collect();
        let theta_end = (0..n).map(|r| polys.integral(r, T::zero(), T::one())).collect();
        Self {
            theta,
            theta_end,
            beta: ns.nodes().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ns(f: NodeFamily, n: usize) -> NodeSet<f64> {
        NodeSet::new(f, n).unwrap()
    }

    #[test]
    fn gauss_legendre_two_points() {
        let s = ns(NodeFamily::GaussLegendre, 2);
        let r3 = 3f64.sqrt();
        assert_abs_diff_eq!(s.nodes()[0], (r3 - 1.0) / (2.0 * r3), epsilon = 1e-15);
        assert_abs_diff_eq!(s.nodes()[1], (r3 + 1.0) / (2.0 * r3), epsilon = 1e-15);
        assert_abs_diff_eq!(s.weights()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.weights()[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn lobatto_small_rules() {
        let s = ns(NodeFamily::GaussLobatto, 2);
        assert_eq!(s.nodes(), &[0.0, 1.0]);
        assert_abs_diff_eq!(s.weights()[0], 0.5, epsilon = 1e-15);
        let s = ns(NodeFamily::GaussLobatto, 3);
        assert_abs_diff_eq!(s.nodes()[1], 0.5, epsilon = 1e-15);
        for (w, e) in s.weights().iter().zip([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]) {
            assert_abs_diff_eq!(*w, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn rejects_unsupported_counts() {
        assert!(NodeSet::<f64>::new(NodeFamily::GaussLobatto, 1).is_err());
        assert!(NodeSet::<f64>::new(NodeFamily::GaussLegendre, 0).is_err());
        assert!(NodeSet::<f64>::new(NodeFamily::Equispaced, MAX_NODES + 1).is_err());
    }

    #[test]
    fn endpoint_membership() {
        for n in 2..=MAX_NODES {
            for f in NodeFamily::ALL {
                if n < f.min_count() {
                    continue;
                }
                let s = ns(f, n);
                let first = s.nodes()[0];
                let last = *s.nodes().last().unwrap();
                if f.includes_endpoints() {
                    assert_eq!((first, last), (0.0, 1.0));
                } else {
                    assert!(first > 0.0 && last < 1.0);
                }
                assert!(s.nodes().windows(2).all(|w| w[0] < w[1]));
                let total: f64 = s.weights().iter().sum();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn lagrange_values_and_derivatives() {
        let lob2 = ns(NodeFamily::GaussLobatto, 2);
        assert_eq!(lob2.lagrange_eval(0, 0.0), 1.0);
        assert_eq!(lob2.lagrange_eval(0, 1.0), 0.0);
        for t in [0.0, 0.3, 1.7] {
            assert_abs_diff_eq!(lob2.lagrange_deriv(0, t), -1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(lob2.lagrange_deriv(1, t), 1.0, epsilon = 1e-15);
        }
        let gl2 = ns(NodeFamily::GaussLegendre, 2);
        assert_abs_diff_eq!(gl2.lagrange_eval(1, 1.0), (1.0 + 3f64.sqrt()) / 2.0, epsilon = 1e-14);
        let lob3 = ns(NodeFamily::GaussLobatto, 3);
        assert_abs_diff_eq!(lob3.lagrange_deriv(1, 0.5), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn theta_examples() {
        let th = ThetaTable::new(&ns(NodeFamily::GaussLobatto, 2));
        assert_eq!(th.theta[0], vec![0.0, 0.0]);
        assert_abs_diff_eq!(th.theta[1][0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(th.theta[1][1], 0.5, epsilon = 1e-15);

        let th = ThetaTable::new(&ns(NodeFamily::GaussLobatto, 3));
        for (a, e) in th.theta[1].iter().zip([5.0 / 24.0, 1.0 / 3.0, -1.0 / 24.0]) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-15);
        }
        for (a, e) in th.theta[2].iter().zip([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-15);
        }
        assert_eq!(th.beta[2], 1.0);
    }

    #[test]
    fn theta_end_matches_weights() {
        for f in NodeFamily::ALL {
            for n in f.min_count().max(2)..=10 {
                let s = ns(f, n);
                let th = ThetaTable::new(&s);
                for (a, w) in th.theta_end.iter().zip(s.weights()) {
                    assert_abs_diff_eq!(*a, *w, epsilon = 1e-13);
                }
                for (m, row) in th.theta.iter().enumerate() {
                    let sum: f64 = row.iter().sum();
                    assert_abs_diff_eq!(sum, s.nodes()[m], epsilon = 1e-13);
                }
                assert!(th.beta.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn equispaced_negative_weights_flagged_from_nine_nodes() {
        // closed Newton–Cotes: the 10-point rule is the one positive exception
        for n in 2..=MAX_NODES {
            let expected = n == 9 || n >= 11;
            assert_eq!(ns(NodeFamily::Equispaced, n).has_negative_weights(), expected, "n = {n}");
        }
        for n in 2..=MAX_NODES {
            assert!(!ns(NodeFamily::GaussLobatto, n).has_negative_weights());
            assert!(!ns(NodeFamily::GaussLegendre, n).has_negative_weights());
        }
    }

    #[test]
    fn single_precision_nodes() {
        let s = NodeSet::<f32>::new(NodeFamily::GaussLegendre, 5).unwrap();
        let total: f32 = s.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-6);
    }
}
