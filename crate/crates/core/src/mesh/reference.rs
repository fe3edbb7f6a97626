//! Reference elements, node layouts and nodal bases.
//!
//! Reference triangle: vertices (0,0), (1,0), (0,1). Reference quadrilateral:
//! the unit square with vertices (0,0), (1,0), (1,1), (0,1).
//!
//! Node ordering within an element of order P: vertices, then the P - 1
//! interior nodes of each edge in edge order (edge k runs from vertex k to
//! vertex k + 1, cyclically) listed along the edge direction, then face
//! interior nodes lexicographically (second index slowest). Edge nodes follow
//! the GLL distribution; triangle interior nodes are the Blyth-Pozrikidis
//! blend of the 1D GLL nodes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polybasis::{gll_rule, lagrange_derivatives, lagrange_values, legendre};

/// Reference coordinate.
pub type Xi = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementShape {
    Triangle,
    Quadrilateral,
    /// Reserved; rejected by all operations.
    Tetrahedron,
    /// Reserved; rejected by all operations.
    Prism,
}

impl ElementShape {
    pub fn vertex_count(self) -> usize {
        match self {
            ElementShape::Triangle => 3,
            ElementShape::Quadrilateral => 4,
            ElementShape::Tetrahedron => 4,
            ElementShape::Prism => 6,
        }
    }

    pub fn is_supported(self) -> bool {
        matches!(self, ElementShape::Triangle | ElementShape::Quadrilateral)
    }

    pub fn require_supported(self) -> Result<()> {
        if self.is_supported() {
            Ok(())
        } else {
            Err(Error::invalid(format!("{self:?} elements are not supported")))
        }
    }

    /// Number of nodes of an order-`p` element.
    pub fn node_count(self, p: usize) -> usize {
        match self {
            ElementShape::Triangle => (p + 1) * (p + 2) / 2,
            ElementShape::Quadrilateral => (p + 1) * (p + 1),
            ElementShape::Tetrahedron => (p + 1) * (p + 2) * (p + 3) / 6,
            ElementShape::Prism => (p + 1) * (p + 1) * (p + 2) / 2,
        }
    }

    pub fn reference_vertices(self) -> Vec<Xi> {
        match self {
            ElementShape::Triangle => vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            _ => vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        }
    }

    pub fn contains(self, xi: Xi) -> bool {
        let tol = 1e-12;
        match self {
            ElementShape::Triangle => {
                xi[0] >= -tol && xi[1] >= -tol && xi[0] + xi[1] <= 1.0 + tol
            }
            _ => (0..2).all(|k| xi[k] >= -tol && xi[k] <= 1.0 + tol),
        }
    }
}

/// GLL nodes of order `p` mapped to [0, 1].
pub fn unit_gll_nodes(p: usize) -> Vec<f64> {
    gll_rule(p + 1)
        .expect("order >= 1")
        .points
        .into_iter()
        .map(|x| 0.5 * (x + 1.0))
        .collect()
}

/// Lattice index `(i, j)` of each node in documented order.
pub fn node_lattice(shape: ElementShape, p: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(shape.node_count(p));
    match shape {
        ElementShape::Triangle => {
            out.extend([(0, 0), (p, 0), (0, p)]);
            out.extend((1..p).map(|m| (m, 0)));
            out.extend((1..p).map(|m| (p - m, m)));
            out.extend((1..p).map(|m| (0, p - m)));
            for j in 1..p {
                for i in 1..p.saturating_sub(j) {
                    out.push((i, j));
                }
            }
        }
        _ => {
            out.extend([(0, 0), (p, 0), (p, p), (0, p)]);
            out.extend((1..p).map(|m| (m, 0)));
            out.extend((1..p).map(|m| (p, m)));
            out.extend((1..p).map(|m| (p - m, p)));
            out.extend((1..p).map(|m| (0, p - m)));
            for j in 1..p {
                for i in 1..p {
                    out.push((i, j));
                }
            }
        }
    }
    out
}

/// Reference coordinates of the nodes of an order-`p` element.
pub fn reference_nodes(shape: ElementShape, p: usize) -> Vec<Xi> {
    let v = unit_gll_nodes(p);
    node_lattice(shape, p)
        .into_iter()
        .map(|(i, j)| match shape {
            ElementShape::Triangle => {
                let k = p - i - j;
                [
                    (1.0 + 2.0 * v[i] - v[j] - v[k]) / 3.0,
                    (1.0 + 2.0 * v[j] - v[i] - v[k]) / 3.0,
                ]
            }
            _ => [v[i], v[j]],
        })
        .collect()
}

/// Local node indices of edge `edge`, from its start vertex to its end vertex
/// (inclusive of both vertices).
pub fn edge_local_nodes(shape: ElementShape, p: usize, edge: usize) -> Vec<usize> {
    let nv = shape.vertex_count();
    let mut out = vec![edge];
    out.extend((0..p.saturating_sub(1)).map(|m| nv + edge * (p - 1) + m));
    out.push((edge + 1) % nv);
    out
}

/// Lagrange basis of order `p` on a reference element.
#[derive(Debug, Clone)]
pub struct NodalBasis {
    pub shape: ElementShape,
    pub order: usize,
    pub nodes: Vec<Xi>,
    kind: BasisImpl,
}

#[derive(Debug, Clone)]
enum BasisImpl {
    /// Tensor Lagrange: 1D nodes plus lattice index of each node.
    Tensor {
        nodes_1d: Vec<f64>,
        lattice: Vec<(usize, usize)>,
    },
    /// Modal expansion with inverse Vandermonde: `l_n = sum_m inv[(m, n)] psi_m`.
    Modal {
        exponents: Vec<(usize, usize)>,
        inv: DMatrix<f64>,
    },
}

impl NodalBasis {
    pub fn new(shape: ElementShape, p: usize) -> Result<Self> {
        shape.require_supported()?;
        if p < 1 {
            return Err(Error::invalid("element order must be at least 1"));
        }
        let nodes = reference_nodes(shape, p);
        let kind = match shape {
            ElementShape::Quadrilateral => BasisImpl::Tensor {
                nodes_1d: unit_gll_nodes(p),
                lattice: node_lattice(shape, p),
            },
            _ => {
                let exponents: Vec<(usize, usize)> = (0..=p)
                    .flat_map(|b| (0..=p - b).map(move |a| (a, b)))
                    .collect();
                let n = nodes.len();
                let vander = DMatrix::from_fn(n, n, |r, c| {
                    let (a, b) = exponents[c];
                    modal(a, b, nodes[r]).0
                });
                let inv = vander
                    .try_inverse()
                    .ok_or_else(|| Error::Numerical("singular triangle Vandermonde".into()))?;
                BasisImpl::Modal { exponents, inv }
            }
        };
        Ok(Self {
            shape,
            order: p,
            nodes,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Basis values at `xi`.
    pub fn values(&self, xi: Xi) -> Vec<f64> {
        self.eval(xi).0
    }

    /// Basis values and reference gradients at `xi`.
    pub fn eval(&self, xi: Xi) -> (Vec<f64>, Vec<[f64; 2]>) {
        match &self.kind {
            BasisImpl::Tensor { nodes_1d, lattice } => {
                let (va, da) = (lagrange_values(nodes_1d, xi[0]), lagrange_derivatives(nodes_1d, xi[0]));
                let (vb, db) = (lagrange_values(nodes_1d, xi[1]), lagrange_derivatives(nodes_1d, xi[1]));
                let vals = lattice.iter().map(|&(i, j)| va[i] * vb[j]).collect();
                let grads = lattice
                    .iter()
                    .map(|&(i, j)| [da[i] * vb[j], va[i] * db[j]])
                    .collect();
                (vals, grads)
            }
            BasisImpl::Modal { exponents, inv } => {
                let psi: Vec<(f64, f64, f64)> =
                    exponents.iter().map(|&(a, b)| modal(a, b, xi)).collect();
                let n = self.len();
                let mut vals = vec![0.0; n];
                let mut grads = vec![[0.0; 2]; n];
                for (node, (v, g)) in vals.iter_mut().zip(grads.iter_mut()).enumerate() {
                    for (m, &(p0, p1, p2)) in psi.iter().enumerate() {
                        let c = inv[(m, node)];
                        *v += c * p0;
                        g[0] += c * p1;
                        g[1] += c * p2;
                    }
                }
                (vals, grads)
            }
        }
    }
}

/// Product Legendre mode `P_a(2x - 1) P_b(2y - 1)` and its gradient.
fn modal(a: usize, b: usize, xi: Xi) -> (f64, f64, f64) {
    let (la, dla) = legendre(a, 2.0 * xi[0] - 1.0);
    let (lb, dlb) = legendre(b, 2.0 * xi[1] - 1.0);
    (la * lb, 2.0 * dla * lb, 2.0 * la * dlb)
}

/// Quadrature on a reference element.
#[derive(Debug, Clone)]
pub struct ElementQuadrature {
    pub points: Vec<Xi>,
    pub weights: Vec<f64>,
}

impl ElementQuadrature {
    /// Tensor GLL rule with `q` points per direction; collapsed (Duffy) onto
    /// the triangle.
    pub fn gll(shape: ElementShape, q: usize) -> Result<Self> {
        shape.require_supported()?;
        let rule = gll_rule(q)?;
        let mut points = Vec::with_capacity(q * q);
        let mut weights = Vec::with_capacity(q * q);
        for (j, &b) in rule.points.iter().enumerate() {
            for (i, &a) in rule.points.iter().enumerate() {
                let w = rule.weights[i] * rule.weights[j];
                match shape {
                    ElementShape::Triangle => {
                        points.push([0.25 * (1.0 + a) * (1.0 - b), 0.5 * (1.0 + b)]);
                        weights.push(w * (1.0 - b) / 8.0);
                    }
                    _ => {
                        points.push([0.5 * (1.0 + a), 0.5 * (1.0 + b)]);
                        weights.push(0.25 * w);
                    }
                }
            }
        }
        Ok(Self { points, weights })
    }

    /// Sampling points for validity checks: the rule points plus the vertices.
    pub fn with_vertices(mut self, shape: ElementShape) -> Self {
        for v in shape.reference_vertices() {
            if !self.points.contains(&v) {
                self.points.push(v);
                self.weights.push(0.0);
            }
        }
        self
    }
}
