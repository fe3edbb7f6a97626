use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::reference::{ElementQuadrature, ElementShape, NodalBasis, Xi};
use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};

/// Shared basis for `(shape, order)`; bases are built once per process.
pub fn shared_basis(shape: ElementShape, order: usize) -> Result<Arc<NodalBasis>> {
    static CACHE: OnceLock<Mutex<HashMap<(ElementShape, usize), Arc<NodalBasis>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(b) = cache.lock().expect("basis cache poisoned").get(&(shape, order)) {
        return Ok(b.clone());
    }
    let b = Arc::new(NodalBasis::new(shape, order)?);
    cache
        .lock()
        .expect("basis cache poisoned")
        .insert((shape, order), b.clone());
    Ok(b)
}

/// 2x2 Jacobian `d(x, y) / d(xi1, xi2)` and its determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian {
    /// `grad[i][j] = d x_i / d xi_j`.
    pub grad: [[f64; 2]; 2],
    pub det: f64,
}

impl Jacobian {
    pub fn from_grad(grad: [[f64; 2]; 2]) -> Self {
        Self {
            grad,
            det: grad[0][0] * grad[1][1] - grad[0][1] * grad[1][0],
        }
    }

    pub fn inverse(&self) -> [[f64; 2]; 2] {
        let g = &self.grad;
        let d = self.det;
        [[g[1][1] / d, -g[0][1] / d], [-g[1][0] / d, g[0][0] / d]]
    }
}

/// Outcome of a validity check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validity {
    pub is_valid: bool,
    pub min_det: f64,
    pub max_det: f64,
    /// `min det J / max det J`.
    pub scaled_jacobian: f64,
}

/// Isoparametric map `x(xi) = sum_n x^n l_n(xi)` of one element.
///
/// Planar elements use the x and y coordinates for Jacobians; z is carried
/// along by `map_physical` only.
#[derive(Debug, Clone)]
pub struct ElementMapping {
    pub shape: ElementShape,
    pub order: usize,
    pub coords: Vec<Vec3>,
    basis: Arc<NodalBasis>,
}

impl ElementMapping {
    pub fn new(shape: ElementShape, order: usize, coords: Vec<Vec3>) -> Result<Self> {
        shape.require_supported()?;
        if coords.len() != shape.node_count(order) {
            return Err(Error::invalid(format!(
                "{shape:?} of order {order} needs {} nodes, got {}",
                shape.node_count(order),
                coords.len()
            )));
        }
        Ok(Self {
            shape,
            order,
            coords,
            basis: shared_basis(shape, order)?,
        })
    }

    pub fn basis(&self) -> &NodalBasis {
        &self.basis
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.coords[..self.shape.vertex_count()]
    }

    pub fn map_physical(&self, xi: Xi) -> Result<Vec3> {
        self.check(xi)?;
        // Exact at nodes, in particular at the vertices.
        if let Some(k) = self.basis.nodes.iter().position(|&n| n == xi) {
            return Ok(self.coords[k]);
        }
        let vals = self.basis.values(xi);
        let mut x = [0.0; 3];
        for (c, v) in self.coords.iter().zip(&vals) {
            x = vec3::axpy(x, *v, *c);
        }
        Ok(x)
    }

    /// Jacobian of the mapping at `xi`; points outside the reference element
    /// are evaluated by polynomial extension.
    pub fn jacobian(&self, xi: Xi) -> Jacobian {
        let (_, grads) = self.basis.eval(xi);
        jacobian_from(&self.coords, &grads)
    }

    pub fn ideal(&self) -> IdealMapping {
        IdealMapping::new(self.shape, self.vertices().to_vec())
    }

    /// Sign and scaled Jacobian over the points of `rule`.
    pub fn validity(&self, rule: &ElementQuadrature) -> Validity {
        let mut min_det = f64::INFINITY;
        let mut max_det = f64::NEG_INFINITY;
        for &xi in &rule.points {
            let d = self.jacobian(xi).det;
            min_det = min_det.min(d);
            max_det = max_det.max(d);
        }
        Validity {
            is_valid: min_det > 0.0,
            min_det,
            max_det,
            scaled_jacobian: min_det / max_det,
        }
    }

    /// Validity over the default sampling set of this element.
    pub fn check_validity(&self) -> Validity {
        self.validity(&validity_rule(self.shape, self.order))
    }

    fn check(&self, xi: Xi) -> Result<()> {
        if self.shape.contains(xi) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "reference point {xi:?} outside the reference {:?}",
                self.shape
            )))
        }
    }
}

pub(crate) fn jacobian_from(coords: &[Vec3], grads: &[[f64; 2]]) -> Jacobian {
    let mut g = [[0.0; 2]; 2];
    for (c, d) in coords.iter().zip(grads) {
        for i in 0..2 {
            for j in 0..2 {
                g[i][j] += c[i] * d[j];
            }
        }
    }
    Jacobian::from_grad(g)
}

/// Default validity sampling: `2P + 2` GLL points per direction plus the
/// element vertices.
pub fn validity_rule(shape: ElementShape, order: usize) -> ElementQuadrature {
    ElementQuadrature::gll(shape, 2 * order + 2)
        .expect("supported shape")
        .with_vertices(shape)
}

/// Straight-sided map defined by the element vertices: affine for triangles,
/// bilinear for quadrilaterals (affine whenever the quadrilateral is a
/// parallelogram).
#[derive(Debug, Clone, PartialEq)]
pub struct IdealMapping {
    pub shape: ElementShape,
    pub vertices: Vec<Vec3>,
}

impl IdealMapping {
    pub fn new(shape: ElementShape, vertices: Vec<Vec3>) -> Self {
        Self { shape, vertices }
    }

    pub fn map(&self, xi: Xi) -> Vec3 {
        let v = &self.vertices;
        match self.shape {
            ElementShape::Triangle => {
                let a = vec3::scale(vec3::sub(v[1], v[0]), xi[0]);
                let b = vec3::scale(vec3::sub(v[2], v[0]), xi[1]);
                vec3::add(v[0], vec3::add(a, b))
            }
            _ => {
                let w = bilinear_weights(xi);
                let mut x = [0.0; 3];
                for k in 0..4 {
                    x = vec3::axpy(x, w[k], v[k]);
                }
                x
            }
        }
    }

    pub fn jacobian(&self, xi: Xi) -> Jacobian {
        let v = &self.vertices;
        let mut g = [[0.0; 2]; 2];
        match self.shape {
            ElementShape::Triangle => {
                for i in 0..2 {
                    g[i][0] = v[1][i] - v[0][i];
                    g[i][1] = v[2][i] - v[0][i];
                }
            }
            _ => {
                let d = [
                    [-(1.0 - xi[1]), -(1.0 - xi[0])],
                    [1.0 - xi[1], -xi[0]],
                    [xi[1], xi[0]],
                    [-xi[1], 1.0 - xi[0]],
                ];
                for k in 0..4 {
                    for i in 0..2 {
                        for j in 0..2 {
                            g[i][j] += v[k][i] * d[k][j];
                        }
                    }
                }
            }
        }
        Jacobian::from_grad(g)
    }
}

fn bilinear_weights(xi: Xi) -> [f64; 4] {
    let (a, b) = (xi[0], xi[1]);
    [(1.0 - a) * (1.0 - b), a * (1.0 - b), a * b, (1.0 - a) * b]
}

/// Free-function forms of the element queries.
pub fn map_physical(elem: &ElementMapping, xi: Xi) -> Result<Vec3> {
    elem.map_physical(xi)
}

pub fn ideal_map(elem: &ElementMapping, xi: Xi) -> Vec3 {
    elem.ideal().map(xi)
}

pub fn jacobian(elem: &ElementMapping, xi: Xi) -> Jacobian {
    elem.jacobian(xi)
}

pub fn validity(elem: &ElementMapping, rule: &ElementQuadrature) -> Validity {
    elem.validity(rule)
}

#[cfg(test)]
mod tests {
    use super::super::reference::reference_nodes;
    use super::*;
    use crate::polybasis::lagrange_values;

    fn straight(shape: ElementShape, p: usize, verts: &[Vec3]) -> ElementMapping {
        let ideal = IdealMapping::new(shape, verts.to_vec());
        let coords = reference_nodes(shape, p).into_iter().map(|x| ideal.map(x)).collect();
        ElementMapping::new(shape, p, coords).unwrap()
    }

    const UNIT_TRI: [Vec3; 3] = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];

    #[test]
    fn linear_triangle_identity() {
        let e = straight(ElementShape::Triangle, 1, &UNIT_TRI);
        for (k, v) in ElementShape::Triangle.reference_vertices().iter().enumerate() {
            assert_eq!(e.map_physical(*v).unwrap(), UNIT_TRI[k]);
        }
        let j = e.jacobian([0.3, 0.3]);
        assert!((j.det - 1.0).abs() < 1e-14);
        assert!(e.map_physical([0.8, 0.8]).is_err());
    }

    #[test]
    fn inverted_triangle_has_negative_det() {
        let e = straight(ElementShape::Triangle, 1, &[UNIT_TRI[0], UNIT_TRI[2], UNIT_TRI[1]]);
        assert!(e.jacobian([0.2, 0.2]).det < 0.0);
        assert!(!e.check_validity().is_valid);
    }

    #[test]
    fn displaced_midpoint_is_interpolated() {
        let mut e = straight(ElementShape::Triangle, 2, &UNIT_TRI);
        // Node 3 is the midpoint of edge 0.
        e.coords[3][1] += 0.1;
        let x = e.map_physical([0.5, 0.0]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-14 && (x[1] - 0.1).abs() < 1e-14);
    }

    #[test]
    fn quad_matches_naive_tensor_evaluation() {
        let p = 4;
        let nodes_1d = super::super::reference::unit_gll_nodes(p);
        let lattice = super::super::reference::node_lattice(ElementShape::Quadrilateral, p);
        let coords: Vec<Vec3> = (0..25)
            .map(|k| [(k as f64 * 0.37).sin(), (k as f64 * 1.3).cos(), 0.0])
            .collect();
        let e = ElementMapping::new(ElementShape::Quadrilateral, p, coords.clone()).unwrap();
        for xi in [[0.13, 0.77], [0.5, 0.5], [0.91, 0.02]] {
            let la = lagrange_values(&nodes_1d, xi[0]);
            let lb = lagrange_values(&nodes_1d, xi[1]);
            let mut naive = [0.0; 3];
            for (n, &(i, j)) in lattice.iter().enumerate() {
                naive = vec3::axpy(naive, la[i] * lb[j], coords[n]);
            }
            let x = e.map_physical(xi).unwrap();
            assert!(vec3::dist(x, naive) < 1e-13);
        }
    }

    #[test]
    fn curved_triangle_jacobian_matches_finite_differences() {
        let mut e = straight(ElementShape::Triangle, 3, &UNIT_TRI);
        for (k, c) in e.coords.iter_mut().enumerate().skip(3) {
            c[0] += 0.03 * (k as f64).sin();
            c[1] += 0.04 * (k as f64).cos();
        }
        let h = 1e-6;
        for xi in [[0.2, 0.3], [0.6, 0.1], [0.1, 0.1]] {
            let j = e.jacobian(xi);
            for d in 0..2 {
                let mut a = xi;
                let mut b = xi;
                a[d] += h;
                b[d] -= h;
                let xa = e.map_physical(a).unwrap();
                let xb = e.map_physical(b).unwrap();
                for i in 0..2 {
                    let fd = (xa[i] - xb[i]) / (2.0 * h);
                    let scale = j.grad[i][d].abs().max(1.0);
                    assert!((fd - j.grad[i][d]).abs() / scale < 1e-7);
                }
            }
        }
    }

    #[test]
    fn curved_edge_past_opposite_vertex_is_invalid() {
        let mut e = straight(ElementShape::Triangle, 2, &UNIT_TRI);
        // Pull the midpoint of edge 1 (opposite vertex 0) beyond the origin.
        e.coords[4] = [-0.15, -0.15, 0.0];
        let v = e.check_validity();
        assert!(!v.is_valid);
        let mut dense_min = f64::INFINITY;
        for i in 0..=50 {
            for j in 0..=(50 - i) {
                let xi = [i as f64 / 50.0, j as f64 / 50.0];
                dense_min = dense_min.min(e.jacobian(xi).det);
            }
        }
        assert!(dense_min < 0.0);
    }

    #[test]
    fn straight_triangle_scaled_jacobian_is_one() {
        let e = straight(ElementShape::Triangle, 3, &[[0.0; 3], [2.0, 0.1, 0.0], [0.4, 1.5, 0.0]]);
        let v = e.check_validity();
        assert!(v.is_valid && (v.scaled_jacobian - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ideal_map_vertices_and_centroid() {
        let verts = [[0.3, 0.1, 0.0], [2.0, 0.4, 0.0], [0.9, 1.7, 0.0]];
        let m = IdealMapping::new(ElementShape::Triangle, verts.to_vec());
        assert_eq!(m.map([0.0, 0.0]), verts[0]);
        assert_eq!(m.map([1.0, 0.0]), verts[1]);
        let c = m.map([1.0 / 3.0, 1.0 / 3.0]);
        for i in 0..2 {
            let mean = (verts[0][i] + verts[1][i] + verts[2][i]) / 3.0;
            assert!((c[i] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn composite_determinant_chain_rule() {
        let verts = [[0.0, 0.0, 0.0], [1.5, 0.2, 0.0], [0.3, 1.1, 0.0]];
        let mut e = straight(ElementShape::Triangle, 3, &verts);
        for (k, c) in e.coords.iter_mut().enumerate().skip(3) {
            c[0] += 0.02 * (k as f64 * 0.7).sin();
        }
        let ideal = e.ideal();
        let inv_ideal = |y: Vec3| {
            // Inverse of the affine map.
            let j = ideal.jacobian([0.0, 0.0]);
            let inv = j.inverse();
            let d = [y[0] - verts[0][0], y[1] - verts[0][1]];
            [inv[0][0] * d[0] + inv[0][1] * d[1], inv[1][0] * d[0] + inv[1][1] * d[1]]
        };
        let xi = [0.25, 0.35];
        let jm = e.jacobian(xi);
        let ji = ideal.jacobian(xi);
        let composite = jm.det / ji.det;
        // Finite-difference Jacobian of y -> x(inv_ideal(y)).
        let y0 = ideal.map(xi);
        let h = 1e-6;
        let mut g = [[0.0; 2]; 2];
        for d in 0..2 {
            let mut a = y0;
            let mut b = y0;
            a[d] += h;
            b[d] -= h;
            let xa = e.map_physical(inv_ideal(a)).unwrap();
            let xb = e.map_physical(inv_ideal(b)).unwrap();
            for i in 0..2 {
                g[i][d] = (xa[i] - xb[i]) / (2.0 * h);
            }
        }
        let direct = Jacobian::from_grad(g).det;
        assert!((composite - direct).abs() < 1e-8);
        // Exact composite gradient grad(phi_M) grad(phi_I)^-1.
        let inv = ji.inverse();
        let mut prod = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                prod[i][j] = (0..2).map(|k| jm.grad[i][k] * inv[k][j]).sum();
            }
        }
        assert!((Jacobian::from_grad(prod).det - composite).abs() < 1e-10);
    }
}
