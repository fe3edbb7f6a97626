//! Variational relaxation of high-order node positions.
//!
//! Each element carries the energy `sum_q w_q W(F_q) det(grad phi_I)` where
//! `F = grad phi_M (grad phi_I)^-1` composes the curved isoparametric map
//! with the inverse of the straight-sided ideal map of the starting mesh.
//! Free nodes are moved one at a time (Gauss-Seidel, ascending index) by a
//! local Newton iteration on the energy of the elements they touch, with
//! Armijo backtracking; a move is kept only if that local energy decreases.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{validity_rule, ElementQuadrature, ElementShape, HighOrderMesh, NodalBasis};
use crate::vec3::Vec3;

type M2 = [[f64; 2]; 2];
/// Fourth-order tensor with index pairs `(i, j) -> 2 i + j`.
type H4 = [[f64; 4]; 4];

const ARMIJO_C: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyKind {
    /// `mu tr(E^2) + lambda/2 (ln J)^2`, `E = (F^T F - I) / 2`.
    LinearElasticity,
    /// Neo-Hookean: `mu/2 (tr C - 2) - mu ln J + lambda/2 (ln J)^2`.
    Hyperelastic,
    /// `tr C / J`.
    Winslow,
    /// `tr C / (d J^(2/d))`; with `d = 2` this is half the Winslow density.
    Distortion,
}

impl EnergyKind {
    pub const ALL: [EnergyKind; 4] = [
        EnergyKind::LinearElasticity,
        EnergyKind::Hyperelastic,
        EnergyKind::Winslow,
        EnergyKind::Distortion,
    ];
}

impl std::str::FromStr for EnergyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "linear-elasticity" | "linear_elasticity" | "elasticity" => EnergyKind::LinearElasticity,
            "hyperelastic" | "neo-hookean" => EnergyKind::Hyperelastic,
            "winslow" => EnergyKind::Winslow,
            "distortion" => EnergyKind::Distortion,
            _ => return Err(Error::invalid(format!("unknown energy functional '{s}'"))),
        })
    }
}

/// Energy density with material parameters and Jacobian regularisation.
///
/// Wherever `J` appears in a denominator or logarithm it is replaced by
/// `J_r = (J + sqrt(J^2 + 4 delta^2)) / 2`, which is positive for all `J`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyFunctional {
    pub kind: EnergyKind,
    pub mu: f64,
    pub lambda: f64,
    /// Regularisation; `None` derives it from the starting mesh.
    pub delta: Option<f64>,
}

impl EnergyFunctional {
    pub fn new(kind: EnergyKind) -> Self {
        Self {
            kind,
            mu: 1.0,
            lambda: 1.0,
            delta: None,
        }
    }

    /// `W(F)`.
    pub fn density(&self, f: &M2, delta: f64) -> f64 {
        self.eval(f, delta, false).0
    }

    /// `W(F)`, `dW/dF` and, if `hessian`, `d2W/dF2`.
    pub fn eval(&self, f: &M2, delta: f64, hessian: bool) -> (f64, M2, H4) {
        let j = f[0][0] * f[1][1] - f[0][1] * f[1][0];
        let cof = [[f[1][1], -f[1][0]], [-f[0][1], f[0][0]]];
        let s = (j * j + 4.0 * delta * delta).sqrt();
        // J_r and its first two derivatives with respect to J.
        let jr = if j >= 0.0 { 0.5 * (j + s) } else { 2.0 * delta * delta / (s - j) };
        let jr1 = jr / s;
        let jr2 = 2.0 * delta * delta / (s * s * s);
        let fnorm2 = f[0][0] * f[0][0] + f[0][1] * f[0][1] + f[1][0] * f[1][0] + f[1][1] * f[1][1];
        let mut g = [[0.0; 2]; 2];
        let mut h = [[0.0; 4]; 4];
        let w;
        match self.kind {
            EnergyKind::LinearElasticity => {
                let (mu, la) = (self.mu, self.lambda);
                let mut c = [[0.0; 2]; 2];
                for a in 0..2 {
                    for b in 0..2 {
                        c[a][b] = f[0][a] * f[0][b] + f[1][a] * f[1][b];
                    }
                }
                let e = [[0.5 * (c[0][0] - 1.0), 0.5 * c[0][1]], [0.5 * c[1][0], 0.5 * (c[1][1] - 1.0)]];
                let e2 = e[0][0] * e[0][0] + 2.0 * e[0][1] * e[1][0] + e[1][1] * e[1][1];
                let lj = jr.ln();
                w = mu * e2 + 0.5 * la * lj * lj;
                // Deviatoric part: d(mu tr E^2)/dF = 2 mu F E.
                for i in 0..2 {
                    for jj in 0..2 {
                        g[i][jj] = 2.0 * mu * (f[i][0] * e[0][jj] + f[i][1] * e[1][jj]);
                    }
                }
                let q = jr1 / jr;
                let f1 = la * lj * q;
                let f2 = la * q * q + la * lj * (jr2 / jr - q * q);
                for i in 0..2 {
                    for jj in 0..2 {
                        g[i][jj] += f1 * cof[i][jj];
                    }
                }
                if hessian {
                    let mut fft = [[0.0; 2]; 2];
                    for a in 0..2 {
                        for b in 0..2 {
                            fft[a][b] = f[a][0] * f[b][0] + f[a][1] * f[b][1];
                        }
                    }
                    for i in 0..2 {
                        for jj in 0..2 {
                            for k in 0..2 {
                                for l in 0..2 {
                                    let mut v = mu * f[i][l] * f[k][jj];
                                    if i == k {
                                        v += 2.0 * mu * e[jj][l];
                                    }
                                    if jj == l {
                                        v += mu * fft[i][k];
                                    }
                                    h[2 * i + jj][2 * k + l] = v;
                                }
                            }
                        }
                    }
                    fill_volumetric(&mut h, &cof, f2, f1);
                }
            }
            EnergyKind::Hyperelastic => {
                let (mu, la) = (self.mu, self.lambda);
                let lj = jr.ln();
                w = 0.5 * mu * (fnorm2 - 2.0) - mu * lj + 0.5 * la * lj * lj;
                let q = jr1 / jr;
                let f1 = (-mu + la * lj) * q;
                let f2 = la * q * q + (-mu + la * lj) * (jr2 / jr - q * q);
                for i in 0..2 {
                    for jj in 0..2 {
                        g[i][jj] = mu * f[i][jj] + f1 * cof[i][jj];
                    }
                }
                if hessian {
                    fill_volumetric(&mut h, &cof, f2, f1);
                    for a in 0..4 {
                        h[a][a] += mu;
                    }
                }
            }
            EnergyKind::Winslow | EnergyKind::Distortion => {
                // W = c |F|^2 / J_r.
                let c = if self.kind == EnergyKind::Winslow { 1.0 } else { 0.5 };
                let inv = 1.0 / jr;
                let p0 = c * inv;
                let p1 = -c * inv * inv * jr1;
                let p2 = c * inv * inv * (2.0 * inv * jr1 * jr1 - jr2);
                w = fnorm2 * p0;
                for i in 0..2 {
                    for jj in 0..2 {
                        g[i][jj] = 2.0 * p0 * f[i][jj] + fnorm2 * p1 * cof[i][jj];
                    }
                }
                if hessian {
                    fill_volumetric(&mut h, &cof, fnorm2 * p2, fnorm2 * p1);
                    for i in 0..4 {
                        let (fi, ci) = (f[i / 2][i % 2], cof[i / 2][i % 2]);
                        h[i][i] += 2.0 * p0;
                        for k in 0..4 {
                            let (fk, ck) = (f[k / 2][k % 2], cof[k / 2][k % 2]);
                            h[i][k] += 2.0 * p1 * (fi * ck + ci * fk);
                        }
                    }
                }
            }
        }
        (w, g, h)
    }
}

/// Adds `a cof (x) cof + b d2J/dF2`.
fn fill_volumetric(h: &mut H4, cof: &M2, a: f64, b: f64) {
    for i in 0..4 {
        for k in 0..4 {
            h[i][k] += a * cof[i / 2][i % 2] * cof[k / 2][k % 2];
        }
    }
    // J = F00 F11 - F01 F10.
    h[0][3] += b;
    h[3][0] += b;
    h[1][2] -= b;
    h[2][1] -= b;
}

/// Per-quadrature-point data of the ideal map.
#[derive(Debug, Clone, Copy)]
struct IdealPoint {
    /// `w_q det(grad phi_I)`.
    weight: f64,
    /// `(grad phi_I)^-1`.
    inv: M2,
}

#[derive(Debug, Clone)]
struct ShapeRule {
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    /// Reference basis gradients per point per node.
    grads: Vec<Vec<[f64; 2]>>,
}

/// Energy of a mesh with ideal maps frozen at construction.
#[derive(Debug, Clone)]
pub struct EnergyModel {
    pub functional: EnergyFunctional,
    /// Resolved regularisation.
    pub delta: f64,
    rules: Vec<(ElementShape, usize, ShapeRule)>,
    ideal: Vec<Vec<IdealPoint>>,
    /// `(element, local index)` pairs per node.
    stars: Vec<Vec<(usize, usize)>>,
}

/// Default number of GLL points per direction for energy quadrature.
pub fn default_energy_points(order: usize) -> usize {
    2 * order + 2
}

impl EnergyModel {
    /// Freezes the ideal maps of `mesh` and resolves the regularisation.
    /// `points` overrides the per-direction quadrature size.
    pub fn new(mesh: &HighOrderMesh, functional: EnergyFunctional, points: Option<usize>) -> Result<Self> {
        if !(functional.mu > 0.0 && functional.lambda >= 0.0) {
            return Err(Error::invalid("material parameters must satisfy mu > 0, lambda >= 0"));
        }
        let mut rules: Vec<(ElementShape, usize, ShapeRule)> = Vec::new();
        let mut ideal = Vec::with_capacity(mesh.elements.len());
        let mut stars = vec![Vec::new(); mesh.nodes.len()];
        for (e, el) in mesh.elements.iter().enumerate() {
            if !rules.iter().any(|r| r.0 == el.shape && r.1 == el.order) {
                let q = points.unwrap_or_else(|| default_energy_points(el.order));
                let quad = ElementQuadrature::gll(el.shape, q)?;
                let basis = NodalBasis::new(el.shape, el.order)?;
                let grads = quad.points.iter().map(|&x| basis.eval(x).1).collect();
                rules.push((
                    el.shape,
                    el.order,
                    ShapeRule {
                        points: quad.points,
                        weights: quad.weights,
                        grads,
                    },
                ));
            }
            let rule = &rules.iter().find(|r| r.0 == el.shape && r.1 == el.order).unwrap().2;
            let map = mesh.element_mapping(e)?.ideal();
            let mut pts = Vec::with_capacity(rule.weights.len());
            for (xi, w) in rule.points.iter().zip(&rule.weights) {
                let jac = map.jacobian(*xi);
                if jac.det <= 0.0 {
                    return Err(Error::DegenerateGeometry(format!(
                        "element {e}: straight-sided element is degenerate or inverted"
                    )));
                }
                pts.push(IdealPoint {
                    weight: w * jac.det,
                    inv: jac.inverse(),
                });
            }
            ideal.push(pts);
            for (l, &n) in el.nodes.iter().enumerate() {
                stars[n].push((e, l));
            }
        }
        let mut model = Self {
            functional,
            delta: 1.0,
            rules,
            ideal,
            stars,
        };
        model.delta = match functional.delta {
            Some(d) if d > 0.0 => d,
            Some(_) => return Err(Error::invalid("regularisation delta must be positive")),
            None => Self::auto_delta(mesh)?,
        };
        Ok(model)
    }

    /// `1e-2` times the smallest `|det F|` over initially valid elements,
    /// floored at `1e-8`. Sampled on the validity rule so that the value
    /// does not depend on the energy quadrature.
    fn auto_delta(mesh: &HighOrderMesh) -> Result<f64> {
        let validity = mesh.element_validity()?;
        let mut min_j = f64::INFINITY;
        for (e, v) in validity.iter().enumerate() {
            if !v.is_valid {
                continue;
            }
            let el = &mesh.elements[e];
            let map = mesh.element_mapping(e)?;
            let ideal = map.ideal();
            for &xi in &validity_rule(el.shape, el.order).points {
                min_j = min_j.min((map.jacobian(xi).det / ideal.jacobian(xi).det).abs());
            }
        }
        if !min_j.is_finite() {
            min_j = 1.0;
        }
        Ok((1e-2 * min_j).max(1e-8))
    }

    fn rule(&self, mesh: &HighOrderMesh, e: usize) -> &ShapeRule {
        let el = &mesh.elements[e];
        &self
            .rules
            .iter()
            .find(|r| r.0 == el.shape && r.1 == el.order)
            .expect("rule built for every element type")
            .2
    }

    /// `F = sum_n x^n (x) (inv^T grad l_n)`.
    fn deformation(&self, mesh: &HighOrderMesh, e: usize, grads: &[[f64; 2]], inv: &M2) -> M2 {
        let mut dx = [[0.0; 2]; 2];
        for (&n, g) in mesh.elements[e].nodes.iter().zip(grads) {
            let x = mesh.nodes[n];
            for a in 0..2 {
                dx[a][0] += x[a] * g[0];
                dx[a][1] += x[a] * g[1];
            }
        }
        mat_mul(&dx, inv)
    }

    pub fn element_energy(&self, mesh: &HighOrderMesh, e: usize) -> f64 {
        let rule = self.rule(mesh, e);
        let mut total = 0.0;
        for (q, ip) in self.ideal[e].iter().enumerate() {
            if ip.weight == 0.0 {
                continue;
            }
            let f = self.deformation(mesh, e, &rule.grads[q], &ip.inv);
            total += ip.weight * self.functional.density(&f, self.delta);
        }
        total
    }

    pub fn total_energy(&self, mesh: &HighOrderMesh) -> f64 {
        (0..mesh.elements.len()).map(|e| self.element_energy(mesh, e)).sum()
    }

    /// Energy of the elements touching `node`.
    pub fn local_energy(&self, mesh: &HighOrderMesh, node: usize) -> f64 {
        self.stars[node].iter().map(|&(e, _)| self.element_energy(mesh, e)).sum()
    }

    /// Gradient and Hessian of the local energy with respect to `node`.
    pub fn node_derivatives(&self, mesh: &HighOrderMesh, node: usize, hessian: bool) -> ([f64; 2], M2) {
        let mut grad = [0.0; 2];
        let mut hess = [[0.0; 2]; 2];
        for &(e, l) in &self.stars[node] {
            let rule = self.rule(mesh, e);
            for (q, ip) in self.ideal[e].iter().enumerate() {
                if ip.weight == 0.0 {
                    continue;
                }
                let f = self.deformation(mesh, e, &rule.grads[q], &ip.inv);
                let (_, p, h) = self.functional.eval(&f, self.delta, hessian);
                let r = rule.grads[q][l];
                // g_b = sum_c grad l_c inv_cb.
                let gn = [r[0] * ip.inv[0][0] + r[1] * ip.inv[1][0], r[0] * ip.inv[0][1] + r[1] * ip.inv[1][1]];
                for i in 0..2 {
                    grad[i] += ip.weight * (p[i][0] * gn[0] + p[i][1] * gn[1]);
                }
                if hessian {
                    for i in 0..2 {
                        for j in 0..2 {
                            let mut v = 0.0;
                            for b in 0..2 {
                                for d in 0..2 {
                                    v += h[2 * i + b][2 * j + d] * gn[b] * gn[d];
                                }
                            }
                            hess[i][j] += ip.weight * v;
                        }
                    }
                }
            }
        }
        (grad, hess)
    }

    /// Gradient of the total energy with respect to `node`.
    pub fn energy_gradient(&self, mesh: &HighOrderMesh, node: usize) -> [f64; 2] {
        self.node_derivatives(mesh, node, false).0
    }

    /// Local Newton iteration on `node`; returns the accepted displacement.
    ///
    /// Steps solve the 2x2 Hessian system when it is positive definite and
    /// follow the negative gradient otherwise, with Armijo backtracking. The
    /// node only moves if its local energy decreases.
    pub fn relax_node(&self, mesh: &mut HighOrderMesh, node: usize, max_iterations: usize) -> [f64; 2] {
        let start = mesh.nodes[node];
        let scale = self.star_size(mesh, node);
        let mut energy = self.local_energy(mesh, node);
        for _ in 0..max_iterations {
            let (g, h) = self.node_derivatives(mesh, node, true);
            let gnorm = (g[0] * g[0] + g[1] * g[1]).sqrt();
            if gnorm == 0.0 || !gnorm.is_finite() {
                break;
            }
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            let newton = (h[0][0] > 0.0 && det > 0.0).then(|| {
                [
                    -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
                    -(-h[1][0] * g[0] + h[0][0] * g[1]) / det,
                ]
            });
            let mut dir = newton.unwrap_or([-g[0], -g[1]]);
            // Keep trial steps within the element star.
            let len = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
            if len > 0.5 * scale {
                dir = [dir[0] * 0.5 * scale / len, dir[1] * 0.5 * scale / len];
            }
            let slope = g[0] * dir[0] + g[1] * dir[1];
            let base = mesh.nodes[node];
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-10 {
                mesh.nodes[node] = [base[0] + alpha * dir[0], base[1] + alpha * dir[1], base[2]];
                let trial = self.local_energy(mesh, node);
                if trial.is_finite() && trial <= energy + ARMIJO_C * alpha * slope && trial < energy {
                    energy = trial;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                mesh.nodes[node] = base;
                break;
            }
            let step = alpha * (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
            if step <= 1e-14 * scale {
                break;
            }
        }
        [mesh.nodes[node][0] - start[0], mesh.nodes[node][1] - start[1]]
    }

    /// Largest distance from `node` to another node of its star.
    fn star_size(&self, mesh: &HighOrderMesh, node: usize) -> f64 {
        let x = mesh.nodes[node];
        let mut r: f64 = 0.0;
        for &(e, _) in &self.stars[node] {
            for &m in mesh.elements[e].vertices() {
                let y = mesh.nodes[m];
                r = r.max(((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt());
            }
        }
        r
    }
}

fn mat_mul(a: &M2, b: &M2) -> M2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Energy of element `e` with its current vertices as the ideal element.
pub fn element_energy(mesh: &HighOrderMesh, e: usize, functional: EnergyFunctional, points: Option<usize>) -> Result<f64> {
    let model = EnergyModel::new(mesh, functional, points)?;
    Ok(model.element_energy(mesh, e))
}

/// Gradient of the total energy with respect to `node` (ideal maps from the
/// current vertices).
pub fn energy_gradient(mesh: &HighOrderMesh, functional: EnergyFunctional, node: usize) -> Result<[f64; 2]> {
    let model = EnergyModel::new(mesh, functional, None)?;
    Ok(model.energy_gradient(mesh, node))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Stopping tolerance on `max |N^{k+1} - N^k| / L`.
    pub eps: f64,
    pub max_sweeps: usize,
    /// Energy quadrature points per direction; `None` uses `2P + 2`.
    pub quadrature_points: Option<usize>,
    /// Local Newton iterations per node visit.
    pub local_iterations: usize,
    /// Let excluded boundary vertices move.
    pub free_excluded: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            max_sweeps: 200,
            quadrature_points: None,
            local_iterations: 1,
            free_excluded: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub energy: f64,
    pub residual: f64,
    pub invalid_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub sweeps: Vec<SweepRecord>,
    pub initial_energy: f64,
    pub initial_invalid: usize,
    pub delta: f64,
    pub characteristic_length: f64,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sweep,energy,residual,invalid_count\n");
        for r in &self.sweeps {
            let _ = writeln!(out, "{},{:.17e},{:.6e},{}", r.sweep, r.energy, r.residual, r.invalid_count);
        }
        out
    }

    pub fn final_invalid(&self) -> usize {
        self.sweeps.last().map_or(self.initial_invalid, |s| s.invalid_count)
    }
}

/// Nodes moved by the optimiser: everything off the boundary, plus excluded
/// vertices when requested.
pub fn free_nodes(mesh: &HighOrderMesh, free_excluded: bool) -> Vec<usize> {
    let mut fixed = vec![false; mesh.nodes.len()];
    for n in mesh.boundary_nodes() {
        fixed[n] = true;
    }
    for (a, b) in mesh.topological_boundary() {
        // Untagged outer edges are fixed too.
        if let Some(nodes) = mesh.edge_nodes((a, b)) {
            for n in nodes {
                fixed[n] = true;
            }
        }
    }
    if free_excluded {
        for (&n, info) in &mesh.node_info {
            if info.excluded.is_some() {
                fixed[n] = false;
            }
        }
    }
    (0..mesh.nodes.len()).filter(|&n| !fixed[n]).collect()
}

/// Gauss-Seidel relaxation of all free nodes until the largest node update
/// relative to the bounding-box diagonal drops below `eps`.
pub fn optimize(mesh: &mut HighOrderMesh, functional: EnergyFunctional, cfg: &OptimizerConfig) -> Result<ConvergenceReport> {
    let model = EnergyModel::new(mesh, functional, cfg.quadrature_points)?;
    let free = free_nodes(mesh, cfg.free_excluded);
    let length = mesh.characteristic_length();
    if length <= 0.0 {
        return Err(Error::DegenerateGeometry("mesh has zero extent".into()));
    }
    let mut report = ConvergenceReport {
        converged: false,
        sweeps: Vec::new(),
        initial_energy: model.total_energy(mesh),
        initial_invalid: mesh.invalid_element_count()?,
        delta: model.delta,
        characteristic_length: length,
    };
    for sweep in 1..=cfg.max_sweeps {
        let mut residual: f64 = 0.0;
        for &n in &free {
            let d = model.relax_node(mesh, n, cfg.local_iterations);
            residual = residual.max(d[0].abs()).max(d[1].abs());
        }
        let residual = residual / length;
        report.sweeps.push(SweepRecord {
            sweep,
            energy: model.total_energy(mesh),
            residual,
            invalid_count: mesh.invalid_element_count()?,
        });
        log::debug!("sweep {sweep}: residual {residual:.3e}");
        if residual < cfg.eps {
            report.converged = true;
            break;
        }
    }
    Ok(report)
}

/// Translation of every node, used by invariance checks.
pub fn translate(mesh: &mut HighOrderMesh, by: Vec3) {
    for x in &mut mesh.nodes {
        for k in 0..3 {
            x[k] += by[k];
        }
    }
}
