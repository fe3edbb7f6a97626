//! Spectral vanishing viscosity: kernels, the Peclet-scaled coefficient,
//! modal kernel application and the CG-SVV diffusion operator, plus the
//! one-dimensional element integrals evaluated with a single shared
//! quadrature rule (consistent integration).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::polybasis::{gll_rule, lagrange_derivatives, lagrange_values, mat_vec, modal_transform, ModalTransform, QuadratureRule};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum KernelProvenance {
    PowerLaw { exponent: f64 },
    DgOptimized,
    Unit,
    Custom,
}

/// Kernel entries `Q_0 .. Q_P`, one per Legendre mode of the gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvvKernel {
    #[serde(rename = "P")]
    pub order: usize,
    pub entries: Vec<f64>,
    pub provenance: KernelProvenance,
}

impl SvvKernel {
    pub fn new(order: usize, entries: Vec<f64>, provenance: KernelProvenance) -> Result<Self> {
        if order < 1 {
            return Err(Error::invalid("kernel order must be at least 1"));
        }
        if entries.len() != order + 1 {
            return Err(Error::invalid(format!(
                "kernel of order {order} needs {} entries, got {}",
                order + 1,
                entries.len()
            )));
        }
        if let Some(q) = entries.iter().find(|q| !(0.0..=1.0).contains(*q)) {
            return Err(Error::invalid(format!("kernel entry {q} outside [0, 1]")));
        }
        Ok(Self {
            order,
            entries,
            provenance,
        })
    }

    pub fn unit(order: usize) -> Result<Self> {
        Self::new(order, vec![1.0; order + 1], KernelProvenance::Unit)
    }
}

/// `Q_p = (p / P)^P_svv`. With `P_svv = 0` every entry is 1, including `p = 0`.
pub fn power_law_kernel(order: usize, exponent: f64) -> Result<SvvKernel> {
    if !(exponent >= 0.0) {
        return Err(Error::invalid(format!("power-law exponent {exponent} must be >= 0")));
    }
    let entries = (0..=order)
        .map(|p| {
            if exponent == 0.0 {
                1.0
            } else {
                (p as f64 / order as f64).powf(exponent)
            }
        })
        .collect();
    SvvKernel::new(order, entries, KernelProvenance::PowerLaw { exponent })
}

/// The DG-matching kernel for order `P` in 2..=10, read from the bundled cache
/// and regenerated when the cache file is missing.
pub fn dg_kernel(order: usize) -> Result<SvvKernel> {
    crate::eigenanalysis::KernelCache::bundled().load_or_generate(order)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvvConfig {
    /// Reference Peclet number.
    pub pe_star: f64,
    /// Local velocity measure.
    pub velocity: f64,
    /// Local mesh size.
    pub size: f64,
    pub order: usize,
}

/// `nu_svv = v h / (Pe* P)`.
pub fn svv_coefficient(cfg: &SvvConfig) -> Result<f64> {
    if !(cfg.pe_star > 0.0 && cfg.velocity > 0.0 && cfg.size > 0.0) || cfg.order == 0 {
        return Err(Error::invalid(format!("SVV coefficient needs positive inputs, got {cfg:?}")));
    }
    Ok(cfg.velocity * cfg.size / (cfg.pe_star * cfg.order as f64))
}

/// Filters gradient values at the `P + 1` GLL nodes: `R^-1 diag(Q) R g`.
pub fn apply_kernel(g: &[f64], kernel: &SvvKernel) -> Result<Vec<f64>> {
    if g.len() != kernel.order + 1 {
        return Err(Error::invalid(format!(
            "gradient has {} values, kernel of order {} needs {}",
            g.len(),
            kernel.order,
            kernel.order + 1
        )));
    }
    let t = modal_transform(kernel.order)?;
    Ok(filter_with(&t, g, &kernel.entries))
}

fn filter_with(t: &ModalTransform, g: &[f64], q: &[f64]) -> Vec<f64> {
    let modal: Vec<f64> = t.to_modal(g).iter().zip(q).map(|(c, q)| c * q).collect();
    t.to_nodal(&modal)
}

/// `ceil(3P/2 + 3/2) + 1` points per direction.
pub fn default_quadrature_points(order: usize) -> usize {
    (1.5 * order as f64 + 1.5).ceil() as usize + 1
}

/// One-dimensional CG element of order `P` on GLL nodes, with basis values
/// and derivatives tabulated at a `Q`-point GLL rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct Element1d {
    pub order: usize,
    pub nodes: Vec<f64>,
    pub rule: QuadratureRule,
    /// `interp[(q, j)] = l_j(x_q)`.
    pub interp: DMatrix<f64>,
    /// `deriv[(q, j)] = l_j'(x_q)`.
    pub deriv: DMatrix<f64>,
    transform: ModalTransform,
    /// `nodal_deriv[(i, j)] = l_j'(x_i)` at the element nodes.
    nodal_deriv: DMatrix<f64>,
}

impl Element1d {
    pub fn new(order: usize, q: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::invalid("element order must be at least 1"));
        }
        if q < order + 1 {
            return Err(Error::invalid(format!(
                "{q} quadrature points cannot represent order {order} (need at least {})",
                order + 1
            )));
        }
        let nodes = gll_rule(order + 1)?.points;
        let rule = gll_rule(q)?;
        let n = order + 1;
        let mut interp = DMatrix::zeros(q, n);
        let mut deriv = DMatrix::zeros(q, n);
        for (k, &x) in rule.points.iter().enumerate() {
            let v = lagrange_values(&nodes, x);
            let d = lagrange_derivatives(&nodes, x);
            for j in 0..n {
                interp[(k, j)] = v[j];
                deriv[(k, j)] = d[j];
            }
        }
        let mut nodal_deriv = DMatrix::zeros(n, n);
        for (i, &x) in nodes.iter().enumerate() {
            for (j, d) in lagrange_derivatives(&nodes, x).into_iter().enumerate() {
                nodal_deriv[(i, j)] = d;
            }
        }
        Ok(Self {
            order,
            nodes,
            rule,
            interp,
            deriv,
            transform: modal_transform(order)?,
            nodal_deriv,
        })
    }

    pub fn len(&self) -> usize {
        self.order + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn weighted_product(&self, a: &DMatrix<f64>, b: &DMatrix<f64>, scale: impl Fn(usize) -> f64) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for (k, &w) in self.rule.weights.iter().enumerate() {
            let s = w * scale(k);
            for i in 0..n {
                let ai = a[(k, i)] * s;
                for j in 0..n {
                    m[(i, j)] += ai * b[(k, j)];
                }
            }
        }
        m
    }

    /// Mass matrix of an element of length `h`.
    pub fn mass(&self, h: f64) -> DMatrix<f64> {
        self.weighted_product(&self.interp, &self.interp, |_| 0.5 * h)
    }

    /// Mass matrix of a mapped element with Jacobian `dx/dxi = jac(xi)`.
    pub fn mass_mapped(&self, jac: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let j: Vec<f64> = self.rule.points.iter().map(|&x| jac(x)).collect();
        self.weighted_product(&self.interp, &self.interp, |k| j[k])
    }

    /// `C[(i, j)] = int l_i l_j' dxi`, independent of the element length.
    pub fn convection(&self) -> DMatrix<f64> {
        self.weighted_product(&self.interp, &self.deriv, |_| 1.0)
    }

    /// `K[(i, j)] = int l_i' l_j' dx` for an element of length `h`.
    pub fn stiffness(&self, h: f64) -> DMatrix<f64> {
        self.weighted_product(&self.deriv, &self.deriv, |_| 2.0 / h)
    }

    /// SVV matrix `S[(i, j)] = -nu int l_i' (Q * l_j') dx`, symmetric and
    /// negative semi-definite.
    pub fn svv(&self, kernel: &SvvKernel, nu: f64, h: f64) -> Result<DMatrix<f64>> {
        if kernel.order != self.order {
            return Err(Error::invalid(format!(
                "kernel order {} does not match element order {}",
                kernel.order, self.order
            )));
        }
        let n = self.len();
        let mut filtered_nodal = DMatrix::zeros(n, n);
        for j in 0..n {
            let col: Vec<f64> = self.nodal_deriv.column(j).iter().copied().collect();
            for (i, v) in filter_with(&self.transform, &col, &kernel.entries).into_iter().enumerate() {
                filtered_nodal[(i, j)] = v;
            }
        }
        let filtered = &self.interp * filtered_nodal;
        let s = self.weighted_product(&self.deriv, &filtered, |_| -nu * 2.0 / h);
        Ok((&s + s.transpose()) * 0.5)
    }

    /// Burgers term `N_i = -int l_i u u_x dx` for nodal values `u`; the
    /// element length cancels.
    pub fn burgers(&self, u: &[f64]) -> Vec<f64> {
        let uq = mat_vec(&self.interp, u);
        let dq = mat_vec(&self.deriv, u);
        (0..self.len())
            .map(|i| {
                -self
                    .rule
                    .weights
                    .iter()
                    .enumerate()
                    .map(|(k, w)| w * self.interp[(k, i)] * uq[k] * dq[k])
                    .sum::<f64>()
            })
            .collect()
    }
}

/// A term of the semi-discrete 1D operator.
#[derive(Debug, Clone, Copy)]
pub enum OperatorTerm<'a> {
    Mass { h: f64 },
    /// `-a int l_i l_j' dxi`.
    Advection { a: f64 },
    /// Column vector `-int l_i u u_x dx`.
    Burgers { u: &'a [f64] },
    Svv { kernel: &'a SvvKernel, nu: f64, h: f64 },
}

/// Evaluates `term` for an order-`P` element with a `Q`-point GLL rule.
pub fn consistent_integration_eval(term: OperatorTerm<'_>, order: usize, q: usize) -> Result<DMatrix<f64>> {
    let el = Element1d::new(order, q)?;
    Ok(match term {
        OperatorTerm::Mass { h } => el.mass(h),
        OperatorTerm::Advection { a } => el.convection() * -a,
        OperatorTerm::Burgers { u } => {
            if u.len() != el.len() {
                return Err(Error::invalid(format!("expected {} nodal values, got {}", el.len(), u.len())));
            }
            DMatrix::from_vec(el.len(), 1, el.burgers(u))
        }
        OperatorTerm::Svv { kernel, nu, h } => el.svv(kernel, nu, h)?,
    })
}

/// Continuous 1D grid of order-`P` elements.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1d {
    pub order: usize,
    /// Element end points, strictly increasing.
    pub breaks: Vec<f64>,
    pub periodic: bool,
}

impl Grid1d {
    pub fn new(order: usize, breaks: Vec<f64>, periodic: bool) -> Result<Self> {
        if order < 1 || breaks.len() < 2 {
            return Err(Error::invalid("grid needs order >= 1 and at least one element"));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("element breaks must increase strictly"));
        }
        Ok(Self {
            order,
            breaks,
            periodic,
        })
    }

    pub fn uniform(order: usize, n: usize, length: f64, periodic: bool) -> Result<Self> {
        Self::new(order, (0..=n).map(|k| length * k as f64 / n as f64).collect(), periodic)
    }

    pub fn elements(&self) -> usize {
        self.breaks.len() - 1
    }

    pub fn element_length(&self, e: usize) -> f64 {
        self.breaks[e + 1] - self.breaks[e]
    }

    pub fn dofs(&self) -> usize {
        self.elements() * self.order + usize::from(!self.periodic)
    }

    /// Global index of local node `j` of element `e`.
    pub fn dof(&self, e: usize, j: usize) -> usize {
        (e * self.order + j) % self.dofs().max(1)
    }

    /// Node coordinates in global order.
    pub fn coordinates(&self) -> Result<Vec<f64>> {
        let xi = gll_rule(self.order + 1)?.points;
        let mut x = vec![0.0; self.dofs()];
        for e in 0..self.elements() {
            for (j, t) in xi.iter().enumerate() {
                let d = self.dof(e, j);
                if self.periodic && e + 1 == self.elements() && j == self.order {
                    continue;
                }
                x[d] = self.breaks[e] + 0.5 * (t + 1.0) * self.element_length(e);
            }
        }
        Ok(x)
    }

    /// Assembles element matrices `f(e, h_e)` into a dense global matrix.
    pub fn assemble(&self, mut f: impl FnMut(usize, f64) -> Result<DMatrix<f64>>) -> Result<DMatrix<f64>> {
        let n = self.dofs();
        let mut g = DMatrix::zeros(n, n);
        for e in 0..self.elements() {
            let m = f(e, self.element_length(e))?;
            for i in 0..=self.order {
                for j in 0..=self.order {
                    g[(self.dof(e, i), self.dof(e, j))] += m[(i, j)];
                }
            }
        }
        Ok(g)
    }
}

/// Global CG-SVV operator with per-element `nu = v h_e / (Pe* P)`, every
/// term integrated with `q` GLL points.
pub fn assemble_svv_operator(grid: &Grid1d, kernel: &SvvKernel, pe_star: f64, velocity: f64, q: usize) -> Result<DMatrix<f64>> {
    let el = Element1d::new(grid.order, q)?;
    grid.assemble(|_, h| {
        let nu = svv_coefficient(&SvvConfig {
            pe_star,
            velocity,
            size: h,
            order: grid.order,
        })?;
        el.svv(kernel, nu, h)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polybasis::legendre;

    #[test]
    fn power_law_examples() {
        let k = power_law_kernel(4, 2.0).unwrap();
        assert_eq!(k.entries[2], 0.25);
        assert_eq!(k.entries[4], 1.0);
        assert_eq!(k.entries[0], 0.0);
        assert!(power_law_kernel(5, 0.0).unwrap().entries.iter().all(|&q| q == 1.0));
        for e in [0.5, 1.0, 3.0, 7.5] {
            assert_eq!(power_law_kernel(6, e).unwrap().entries[6], 1.0);
        }
    }

    #[test]
    fn coefficient_examples() {
        let mut cfg = SvvConfig {
            pe_star: 1.0,
            velocity: 1.0,
            size: 1.0,
            order: 1,
        };
        assert_eq!(svv_coefficient(&cfg).unwrap(), 1.0);
        cfg.order = 3;
        let a = svv_coefficient(&cfg).unwrap();
        cfg.size = 2.0;
        assert_eq!(svv_coefficient(&cfg).unwrap(), 2.0 * a);
        cfg.velocity = 0.0;
        assert!(svv_coefficient(&cfg).is_err());
    }

    #[test]
    fn legendre_mode_is_scaled_by_its_entry() {
        let p = 6;
        let k = power_law_kernel(p, 1.5).unwrap();
        let nodes = gll_rule(p + 1).unwrap().points;
        for m in 0..=p {
            let g: Vec<f64> = nodes.iter().map(|&x| legendre(m, x).0).collect();
            let out = apply_kernel(&g, &k).unwrap();
            for (o, gi) in out.iter().zip(&g) {
                assert!((o - k.entries[m] * gi).abs() < 1e-12);
            }
        }
        assert!(apply_kernel(&[1.0; 3], &k).is_err());
    }

    #[test]
    fn unit_kernel_recovers_stiffness() {
        let el = Element1d::new(5, 8).unwrap();
        let s = el.svv(&SvvKernel::unit(5).unwrap(), 0.3, 0.7).unwrap();
        let k = el.stiffness(0.7) * -0.3;
        assert!((s - k).amax() < 1e-12);
    }

    #[test]
    fn too_few_points_rejected() {
        assert!(Element1d::new(4, 4).is_err());
        assert!(Element1d::new(4, 5).is_ok());
        assert_eq!(default_quadrature_points(4), 9);
    }

    #[test]
    fn periodic_grid_wraps_the_last_node() {
        let g = Grid1d::uniform(3, 4, 1.0, true).unwrap();
        assert_eq!(g.dofs(), 12);
        assert_eq!(g.dof(3, 3), 0);
        let x = g.coordinates().unwrap();
        assert_eq!(x[0], 0.0);
        assert!(x.windows(2).all(|w| w[1] > w[0]));
    }
}
