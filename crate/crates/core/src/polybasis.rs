//! One-dimensional polynomial machinery on the reference interval [-1, 1].
//!
//! Gauss-Lobatto-Legendre (GLL) rules, nodal Lagrange bases on GLL points,
//! the nodal-to-Legendre modal transform, and the point-count rules used to
//! integrate polynomial nonlinearities exactly.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 1e-14;

/// Legendre polynomial `P_n(x)` and its derivative.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    match n {
        0 => (1.0, 0.0),
        1 => (x, 1.0),
        _ => {
            let (mut p0, mut p1) = (1.0, x);
            let (mut d0, mut d1) = (0.0, 1.0);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                // P_k' = P_{k-2}' + (2k - 1) P_{k-1}
                let d2 = d0 + (2.0 * kf - 1.0) * p1;
                p0 = p1;
                p1 = p2;
                d0 = d1;
                d1 = d2;
            }
            (p1, d1)
        }
    }
}

/// Values `P_0(x) .. P_n(x)`.
pub fn legendre_all(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(x);
    }
    for k in 2..=n {
        let kf = k as f64;
        let v = ((2.0 * kf - 1.0) * x * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
        out.push(v);
    }
    out
}

/// A Gauss-Lobatto-Legendre quadrature rule on [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Number of points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Highest polynomial degree integrated exactly (`2Q - 3`).
    pub fn exactness_degree(&self) -> usize {
        2 * self.len() - 3
    }

    /// Integrates `f` over [-1, 1].
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// GLL rule with `q` points (exact to degree `2q - 3`).
///
/// Interior abscissae are the roots of `P'_{q-1}`, found by Newton iteration
/// from Chebyshev-Gauss-Lobatto guesses.
pub fn gll_rule(q: usize) -> Result<QuadratureRule> {
    if q < 2 {
        return Err(Error::invalid(format!("GLL rule needs at least 2 points, got {q}")));
    }
    let n = q - 1;
    let mut points = vec![0.0; q];
    points[0] = -1.0;
    points[n] = 1.0;
    for (j, point) in points.iter_mut().enumerate().take(n).skip(1) {
        let mut x = -(std::f64::consts::PI * j as f64 / n as f64).cos();
        for _ in 0..100 {
            // Newton on (1 - x^2) P_n'(x); its derivative is -n(n+1) P_n(x).
            let (p, dp) = legendre(n, x);
            let step = (1.0 - x * x) * dp / ((n * (n + 1)) as f64 * p);
            x += step;
            if step.abs() < NEWTON_TOL {
                break;
            }
        }
        *point = x;
    }
    // Enforce exact symmetry.
    for j in 0..q / 2 {
        let s = 0.5 * (points[n - j] - points[j]);
        points[j] = -s;
        points[n - j] = s;
    }
    if q % 2 == 1 {
        points[n / 2] = 0.0;
    }
    let scale = 2.0 / (n * (n + 1)) as f64;
    let weights = points
        .iter()
        .map(|&x| {
            let (p, _) = legendre(n, x);
            scale / (p * p)
        })
        .collect();
    Ok(QuadratureRule { points, weights })
}

/// Minimum GLL point count that integrates a polynomial of degree `degree` exactly.
pub fn min_points_for_degree(degree: usize) -> usize {
    // 2Q - 3 >= degree
    ((degree + 3).div_ceil(2)).max(2)
}

/// Minimum GLL point count for an order-`p` expansion and nonlinearity degree `m`.
///
/// * `m = 1`: the expansion itself, `Q >= (P + 3) / 2`
/// * `m = 2`: quadratic term against a test function, `Q >= 3P/2 + 3/2`
/// * `m = 3`: cubic term against a test function, `Q >= 2P + 3/2`
pub fn min_quadrature_points(p: usize, m: usize) -> Result<usize> {
    if p < 1 {
        return Err(Error::invalid("polynomial order must be at least 1"));
    }
    let degree = match m {
        1 => p,
        2 => 3 * p,
        3 => 4 * p,
        _ => {
            return Err(Error::invalid(format!(
                "unsupported nonlinearity degree {m} (expected 1, 2 or 3)"
            )))
        }
    };
    Ok(min_points_for_degree(degree))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    /// Lagrange cardinal functions on the GLL points of order `P`.
    NodalGll,
    /// Legendre polynomials `P_0 .. P_P`.
    Legendre,
}

/// A one-dimensional basis of order `P` (P + 1 functions).
#[derive(Debug, Clone)]
pub struct Basis {
    order: usize,
    kind: BasisKind,
    nodes: Vec<f64>,
    bary: Vec<f64>,
}

impl Basis {
    pub fn nodal_gll(order: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::invalid("basis order must be at least 1"));
        }
        let nodes = gll_rule(order + 1)?.points;
        Ok(Self::nodal_on(order, nodes))
    }

    /// Nodal Lagrange basis through arbitrary distinct nodes.
    pub fn nodal_on(order: usize, nodes: Vec<f64>) -> Self {
        let bary = barycentric_weights(&nodes);
        Self {
            order,
            kind: BasisKind::NodalGll,
            nodes,
            bary,
        }
    }

    pub fn legendre(order: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::invalid("basis order must be at least 1"));
        }
        Ok(Self {
            order,
            kind: BasisKind::Legendre,
            nodes: Vec::new(),
            bary: Vec::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.order + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Value of basis function `k` at `xi`.
    pub fn eval(&self, k: usize, xi: f64) -> Result<f64> {
        if k > self.order {
            return Err(Error::invalid(format!(
                "basis index {k} out of range for order {}",
                self.order
            )));
        }
        Ok(match self.kind {
            BasisKind::Legendre => legendre(k, xi).0,
            BasisKind::NodalGll => self.eval_all(xi)[k],
        })
    }

    /// All basis values at `xi`.
    pub fn eval_all(&self, xi: f64) -> Vec<f64> {
        match self.kind {
            BasisKind::Legendre => legendre_all(self.order, xi),
            BasisKind::NodalGll => {
                if let Some(j) = self.nodes.iter().position(|&x| x == xi) {
                    let mut out = vec![0.0; self.len()];
                    out[j] = 1.0;
                    return out;
                }
                let terms: Vec<f64> = self
                    .nodes
                    .iter()
                    .zip(&self.bary)
                    .map(|(&x, &w)| w / (xi - x))
                    .collect();
                let denom: f64 = terms.iter().sum();
                terms.into_iter().map(|t| t / denom).collect()
            }
        }
    }

    /// All basis derivatives at `xi`.
    pub fn deriv_all(&self, xi: f64) -> Vec<f64> {
        match self.kind {
            BasisKind::Legendre => (0..=self.order).map(|k| legendre(k, xi).1).collect(),
            BasisKind::NodalGll => lagrange_derivatives(&self.nodes, xi),
        }
    }

    /// Differentiation matrix `D[i][j] = l_j'(x_i)` at the basis nodes.
    pub fn differentiation_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    d[(i, j)] = self.bary[j] / self.bary[i] / (self.nodes[i] - self.nodes[j]);
                }
            }
            let row_sum: f64 = (0..n).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
            d[(i, i)] = -row_sum;
        }
        d
    }
}

/// Shorthand for evaluating nodal function `k` of `basis` at `xi`.
pub fn lagrange_eval(basis: &Basis, k: usize, xi: f64) -> Result<f64> {
    if basis.kind() != BasisKind::NodalGll {
        return Err(Error::invalid("lagrange_eval requires a nodal basis"));
    }
    basis.eval(k, xi)
}

fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    nodes
        .iter()
        .enumerate()
        .map(|(j, &xj)| {
            let prod: f64 = nodes
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &xk)| xj - xk)
                .product();
            1.0 / prod
        })
        .collect()
}

/// Derivatives of all Lagrange cardinal functions through `nodes` at `x`.
pub fn lagrange_derivatives(nodes: &[f64], x: f64) -> Vec<f64> {
    let n = nodes.len();
    let mut out = vec![0.0; n];
    for (j, o) in out.iter_mut().enumerate() {
        let denom: f64 = (0..n)
            .filter(|&k| k != j)
            .map(|k| nodes[j] - nodes[k])
            .product();
        let mut sum = 0.0;
        for m in 0..n {
            if m == j {
                continue;
            }
            let prod: f64 = (0..n)
                .filter(|&k| k != j && k != m)
                .map(|k| x - nodes[k])
                .product();
            sum += prod;
        }
        *o = sum / denom;
    }
    out
}

/// Values of all Lagrange cardinal functions through `nodes` at `x`.
pub fn lagrange_values(nodes: &[f64], x: f64) -> Vec<f64> {
    let n = nodes.len();
    (0..n)
        .map(|j| {
            (0..n)
                .filter(|&k| k != j)
                .map(|k| (x - nodes[k]) / (nodes[j] - nodes[k]))
                .product()
        })
        .collect()
}

/// Change of basis between GLL nodal values and Legendre coefficients.
///
/// `forward` (R) maps nodal values to Legendre coefficients and `inverse`
/// is the Legendre Vandermonde matrix at the GLL nodes.
#[derive(Debug, Clone)]
pub struct ModalTransform {
    pub order: usize,
    pub forward: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
}

impl ModalTransform {
    pub fn to_modal(&self, nodal: &[f64]) -> Vec<f64> {
        mat_vec(&self.forward, nodal)
    }

    pub fn to_nodal(&self, modal: &[f64]) -> Vec<f64> {
        mat_vec(&self.inverse, modal)
    }
}

pub(crate) fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}

pub fn modal_transform(order: usize) -> Result<ModalTransform> {
    if order < 1 {
        return Err(Error::invalid("modal transform needs order >= 1"));
    }
    let nodes = gll_rule(order + 1)?.points;
    let n = order + 1;
    let vander = DMatrix::from_fn(n, n, |i, k| legendre(k, nodes[i]).0);
    let forward = vander
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular Legendre Vandermonde matrix".into()))?;
    Ok(ModalTransform {
        order,
        forward,
        inverse: vander,
    })
}
