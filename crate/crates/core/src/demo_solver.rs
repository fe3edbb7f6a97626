//! Continuous Galerkin advection solver with SVV on a structured 1D or 2D
//! mesh whose streamwise spacing coarsens past an interface, used to study
//! spurious reflections from under-resolved regions.
//!
//! The state is stored as a streamwise-by-crossflow matrix of nodal values.
//! On the Cartesian mesh every operator factors into 1D pieces, so the
//! global mass matrix is `M_x (x) M_y` and its inverse is applied one
//! direction at a time.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CscMatrix, CsrMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::polybasis::{modal_transform, ModalTransform};
use crate::svv::{default_quadrature_points, power_law_kernel, svv_coefficient, Element1d, Grid1d, SvvConfig, SvvKernel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum KernelChoice {
    None,
    /// Kernel fitted to upwind DG, read from the bundled cache.
    Dg,
    Unit,
    PowerLaw { exponent: f64 },
}

impl KernelChoice {
    pub fn kernel(&self, order: usize) -> Result<Option<SvvKernel>> {
        Ok(match *self {
            KernelChoice::None => None,
            KernelChoice::Dg => Some(crate::svv::dg_kernel(order)?),
            KernelChoice::Unit => Some(SvvKernel::unit(order)?),
            KernelChoice::PowerLaw { exponent } => Some(power_law_kernel(order, exponent)?),
        })
    }
}

/// Sum of sines imposed at the inflow. Frequencies are spread evenly between
/// two fractions of the upstream Nyquist wavenumber `pi P / h`; phases are
/// drawn from a seeded generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InflowSignal {
    /// Sum of the component amplitudes.
    pub amplitude: f64,
    pub components: usize,
    pub min_fraction: f64,
    pub max_fraction: f64,
    pub seed: u64,
    /// Smooth start-up time, in units of `h / a`.
    pub ramp: f64,
}

impl Default for InflowSignal {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            components: 8,
            min_fraction: 0.02,
            max_fraction: 0.4,
            seed: 0,
            ramp: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wave {
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
}

impl InflowSignal {
    pub fn waves(&self, order: usize, h: f64, velocity: f64) -> Vec<Wave> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.components;
        let nyquist = PI * order as f64 / h;
        (0..n)
            .map(|k| {
                let t = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
                let frac = self.min_fraction + t * (self.max_fraction - self.min_fraction);
                Wave {
                    amplitude: self.amplitude / n as f64,
                    omega: velocity * frac * nyquist,
                    phase: rng.gen_range(0.0..2.0 * PI),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseConfig {
    /// 1 or 2.
    pub dimension: usize,
    /// Streamwise extent of the fine region.
    pub upstream_length: f64,
    /// Streamwise extent of the coarse region.
    pub downstream_length: f64,
    /// Crossflow extent in 2D; defaults to `crossflow_elements * h`.
    pub width: Option<f64>,
    /// Upstream cell size.
    pub h: f64,
    /// Ratio of downstream to upstream streamwise spacing.
    pub coarsening: f64,
    pub crossflow_elements: usize,
    pub order: usize,
    pub kernel: KernelChoice,
    pub pe_star: f64,
    /// Physical viscosity.
    pub viscosity: f64,
    /// Streamwise advection speed `a`.
    pub velocity: f64,
    /// Adds `-u u_x`.
    pub burgers: bool,
    /// Periodic in the streamwise direction; the inflow signal is unused.
    pub periodic: bool,
    pub inflow: InflowSignal,
    pub cfl: f64,
    /// End time in convective units `t_c = L / a`.
    pub end_time: f64,
    /// Quadrature points per direction; defaults to the dealiasing rule.
    pub quadrature: Option<usize>,
    /// Steps between diagnostic records.
    pub diagnostics_every: usize,
}

impl Default for CaseConfig {
    fn default() -> Self {
        Self {
            dimension: 1,
            upstream_length: 16.0,
            downstream_length: 32.0,
            width: None,
            h: 1.0,
            coarsening: 4.0,
            crossflow_elements: 11,
            order: 4,
            kernel: KernelChoice::Dg,
            pe_star: 1.0,
            viscosity: 0.0,
            velocity: 1.0,
            burgers: false,
            periodic: false,
            inflow: InflowSignal::default(),
            cfl: 0.9,
            end_time: 2.0,
            quadrature: None,
            diagnostics_every: 10,
        }
    }
}

impl CaseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimension != 1 && self.dimension != 2 {
            return Err(Error::invalid(format!("dimension must be 1 or 2, got {}", self.dimension)));
        }
        if !(self.coarsening >= 1.0) {
            return Err(Error::invalid(format!("coarsening factor must be at least 1, got {}", self.coarsening)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::invalid(format!("CFL number must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.h > 0.0 && self.upstream_length >= self.h && self.downstream_length >= 0.0) {
            return Err(Error::invalid("domain extents must be positive and hold at least one upstream cell"));
        }
        if self.order < 1 {
            return Err(Error::invalid("order must be at least 1"));
        }
        if !(self.pe_star > 0.0) || !(self.viscosity >= 0.0) || !self.velocity.is_finite() || !(self.end_time >= 0.0) {
            return Err(Error::invalid("Pe* must be positive, viscosity nonnegative and end time nonnegative"));
        }
        if self.kernel != KernelChoice::None && !(self.velocity.abs() > 0.0) {
            return Err(Error::invalid("SVV scaling needs a nonzero advection speed"));
        }
        if self.dimension == 2 && self.crossflow_elements == 0 {
            return Err(Error::invalid("2D cases need at least one crossflow element"));
        }
        if self.inflow.components == 0 && !self.periodic {
            return Err(Error::invalid("inflow signal needs at least one component"));
        }
        if self.diagnostics_every == 0 {
            return Err(Error::invalid("diagnostics_every must be positive"));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.upstream_length + self.downstream_length
    }

    /// `t_c = L / a`.
    pub fn convective_time(&self) -> f64 {
        self.length() / self.velocity.abs().max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub time: f64,
    pub energy: f64,
    pub max_abs: f64,
    pub reflection: f64,
}

/// Time and nodal values `u[(i, j)]` at streamwise node `i`, crossflow node
/// `j` (a single column in 1D).
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub time: f64,
    pub values: DMatrix<f64>,
    pub diagnostics: Vec<DiagnosticRecord>,
}

/// Element coefficients at one instant, for offline inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub order: usize,
    pub x_breaks: Vec<f64>,
    pub y_breaks: Vec<f64>,
    pub elements: Vec<ElementCoefficients>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementCoefficients {
    /// Streamwise and crossflow element index.
    pub index: [usize; 2],
    /// Nodal values, streamwise index fastest.
    pub coefficients: Vec<f64>,
}

/// Mesh, operators and boundary data of a configured case.
pub struct DiscreteCase {
    pub config: CaseConfig,
    pub x: Grid1d,
    pub y: Option<Grid1d>,
    /// Start of the coarse region when the spacing actually changes.
    pub interface: Option<f64>,
    /// End of the fine region; the reflection metric is measured upstream of it.
    pub upstream_end: f64,
    pub warnings: Vec<String>,
    pub quadrature: usize,
    pub kernel: Option<SvvKernel>,
    element: Element1d,
    transform: ModalTransform,
    mass_x: CsrMatrix<f64>,
    op_x: CsrMatrix<f64>,
    mass_y: DMatrix<f64>,
    op_y: Option<DMatrix<f64>>,
    mass_y_inv: DMatrix<f64>,
    /// Factor of the streamwise mass block acting on unknown nodes.
    mass_solver: CscCholesky<f64>,
    /// `M_x[(i, 0)]` for unknown rows, used to lift the inflow value.
    inflow_column: Vec<f64>,
    waves: Vec<Wave>,
    profile: Vec<f64>,
    ramp_time: f64,
}

impl std::fmt::Debug for DiscreteCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteCase")
            .field("config", &self.config)
            .field("x", &self.x)
            .field("y", &self.y)
            .field("interface", &self.interface)
            .field("warnings", &self.warnings)
            .finish_non_exhaustive()
    }
}

/// Number of cells of size close to `size` covering `length`, with a warning
/// when the spacing has to be adjusted.
fn cell_count(length: f64, size: f64, what: &str, warnings: &mut Vec<String>) -> usize {
    let n = (length / size).round().max(1.0) as usize;
    if (n as f64 * size - length).abs() > 1e-9 * length.max(size) {
        let msg = format!(
            "{what} length {length} is not a multiple of {size}; using {n} cells of size {}",
            length / n as f64
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    n
}

fn dense_to_csr(m: &DMatrix<f64>) -> CsrMatrix<f64> {
    CsrMatrix::from(m)
}

pub fn build_case(config: &CaseConfig) -> Result<DiscreteCase> {
    config.validate()?;
    let p = config.order;
    let mut warnings = Vec::new();
    let n_up = cell_count(config.upstream_length, config.h, "upstream", &mut warnings);
    let coarse = config.h * config.coarsening;
    let n_down = if config.downstream_length > 0.0 {
        cell_count(config.downstream_length, coarse, "downstream", &mut warnings)
    } else {
        0
    };
    let mut breaks: Vec<f64> = (0..=n_up).map(|k| config.upstream_length * k as f64 / n_up as f64).collect();
    for k in 1..=n_down {
        breaks.push(config.upstream_length + config.downstream_length * k as f64 / n_down as f64);
    }
    let upstream_end = config.upstream_length;
    let interface = (config.coarsening > 1.0 && n_down > 0).then_some(upstream_end);
    let x = Grid1d::new(p, breaks, config.periodic)?;

    let q = config.quadrature.unwrap_or_else(|| default_quadrature_points(p));
    let element = Element1d::new(p, q)?;
    let kernel = config.kernel.kernel(p)?;
    let a = config.velocity;

    let line_operator = |grid: &Grid1d, advect: bool| -> Result<DMatrix<f64>> {
        grid.assemble(|_, h| {
            let mut m = if advect { element.convection() * -a } else { DMatrix::zeros(p + 1, p + 1) };
            if let Some(k) = &kernel {
                let nu = svv_coefficient(&SvvConfig {
                    pe_star: config.pe_star,
                    velocity: a.abs(),
                    size: h,
                    order: p,
                })?;
                m += element.svv(k, nu, h)?;
            }
            if config.viscosity > 0.0 {
                m -= element.stiffness(h) * config.viscosity;
            }
            Ok(m)
        })
    };

    let mass_x_dense = x.assemble(|_, h| Ok(element.mass(h)))?;
    let op_x = dense_to_csr(&line_operator(&x, true)?);

    let (y, mass_y, op_y, profile) = if config.dimension == 2 {
        let n = config.crossflow_elements;
        let width = config.width.unwrap_or(n as f64 * config.h);
        if !(width > 0.0) {
            return Err(Error::invalid("crossflow width must be positive"));
        }
        let y = Grid1d::uniform(p, n, width, false)?;
        let mass = y.assemble(|_, h| Ok(element.mass(h)))?;
        let op = line_operator(&y, false)?;
        let profile = y.coordinates()?.iter().map(|&s| 1.0 + 0.5 * (PI * s / width).cos()).collect();
        (Some(y), mass, (op.amax() > 0.0).then_some(op), profile)
    } else {
        (None, DMatrix::identity(1, 1), None, vec![1.0])
    };
    let mass_y_inv = mass_y
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular crossflow mass matrix".into()))?;

    let first = usize::from(!config.periodic);
    let n = x.dofs();
    let free = mass_x_dense.view((first, first), (n - first, n - first)).clone_owned();
    let mass_solver = CscCholesky::factor(&CscMatrix::from(&free))
        .map_err(|e| Error::Numerical(format!("mass matrix factorisation failed: {e}")))?;
    let inflow_column = if config.periodic {
        Vec::new()
    } else {
        (first..n).map(|i| mass_x_dense[(i, 0)]).collect()
    };

    Ok(DiscreteCase {
        waves: if config.periodic { Vec::new() } else { config.inflow.waves(p, config.h, a) },
        ramp_time: config.inflow.ramp * config.h / a.abs().max(f64::MIN_POSITIVE),
        config: config.clone(),
        x,
        y,
        interface,
        upstream_end,
        warnings,
        quadrature: q,
        kernel,
        element,
        transform: modal_transform(p)?,
        mass_x: dense_to_csr(&mass_x_dense),
        op_x,
        mass_y,
        op_y,
        mass_y_inv,
        mass_solver,
        inflow_column,
        profile,
    })
}

/// SSP-RK3 stages as `(a, b)`: `u_k = a u_0 + (1 - a) (u_{k-1} + dt L)`,
/// ending at `t0 + b dt`.
const RK3: [(f64, f64); 3] = [(0.0, 1.0), (0.75, 0.5), (1.0 / 3.0, 1.0)];

impl DiscreteCase {
    pub fn order(&self) -> usize {
        self.config.order
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.x.dofs(), self.y.as_ref().map_or(1, Grid1d::dofs))
    }

    /// Node coordinates along each direction.
    pub fn coordinates(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let x = self.x.coordinates()?;
        let y = match &self.y {
            Some(g) => g.coordinates()?,
            None => vec![0.0],
        };
        Ok((x, y))
    }

    /// Inflow value and its time derivative at crossflow node `j`.
    pub fn inflow(&self, t: f64, j: usize) -> (f64, f64) {
        let (mut g, mut dg) = (0.0, 0.0);
        for w in &self.waves {
            let arg = w.omega * t + w.phase;
            g += w.amplitude * arg.sin();
            dg += w.amplitude * w.omega * arg.cos();
        }
        // Smoothstep envelope, so the signal starts from rest with zero slope.
        let (r, dr) = if self.ramp_time > 0.0 && t < self.ramp_time {
            let s = (t / self.ramp_time).max(0.0);
            (s * s * (3.0 - 2.0 * s), 6.0 * s * (1.0 - s) / self.ramp_time)
        } else {
            (1.0, 0.0)
        };
        (r * g * self.profile[j], (dr * g + r * dg) * self.profile[j])
    }

    pub fn state_from(&self, time: f64, f: impl Fn(f64, f64) -> f64) -> Result<SolverState> {
        let (x, y) = self.coordinates()?;
        let values = DMatrix::from_fn(x.len(), y.len(), |i, j| f(x[i], y[j]));
        Ok(SolverState {
            time,
            values,
            diagnostics: Vec::new(),
        })
    }

    /// Zero field satisfying the inflow condition at `t = 0`.
    pub fn initial_state(&self) -> Result<SolverState> {
        let mut s = self.state_from(0.0, |_, _| 0.0)?;
        self.impose_inflow(&mut s.values, 0.0);
        Ok(s)
    }

    fn impose_inflow(&self, u: &mut DMatrix<f64>, t: f64) {
        if !self.config.periodic {
            for j in 0..u.ncols() {
                u[(0, j)] = self.inflow(t, j).0;
            }
        }
    }

    /// Stable step estimate `0.5 h_min / (a P^2)`, with `a` including the
    /// local Burgers speed and a diffusive bound when `nu > 0`.
    pub fn cfl_limit(&self, u: &DMatrix<f64>) -> f64 {
        let mut h_min = (0..self.x.elements()).map(|e| self.x.element_length(e)).fold(f64::INFINITY, f64::min);
        if let Some(y) = &self.y {
            h_min = (0..y.elements()).map(|e| y.element_length(e)).fold(h_min, f64::min);
        }
        let p2 = (self.order() * self.order()) as f64;
        let speed = self.config.velocity.abs() + if self.config.burgers { u.amax() } else { 0.0 };
        let mut limit = if speed > 0.0 { 0.5 * h_min / (speed * p2) } else { f64::INFINITY };
        if self.config.viscosity > 0.0 {
            limit = limit.min(0.5 * h_min * h_min / (self.config.viscosity * p2 * p2));
        }
        limit
    }

    /// `-int phi u u_x` over every element with the shared quadrature rule.
    fn burgers_term(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        let p = self.order();
        let el = &self.element;
        let nq = el.rule.len();
        let mut out = DMatrix::zeros(u.nrows(), u.ncols());
        let (ny_el, ny_loc) = self.y.as_ref().map_or((1, 1), |g| (g.elements(), p + 1));
        let mut local = DMatrix::zeros(p + 1, ny_loc);
        for ey in 0..ny_el {
            let (by, wy, fy) = match &self.y {
                Some(g) => (el.interp.clone(), el.rule.weights.clone(), 0.5 * g.element_length(ey)),
                None => (DMatrix::identity(1, 1), vec![1.0], 1.0),
            };
            let ydof = |j: usize| self.y.as_ref().map_or(0, |g| g.dof(ey, j));
            for ex in 0..self.x.elements() {
                for i in 0..=p {
                    for j in 0..ny_loc {
                        local[(i, j)] = u[(self.x.dof(ex, i), ydof(j))];
                    }
                }
                let uq = &el.interp * &local * by.transpose();
                let dq = &el.deriv * &local * by.transpose();
                let mut f = DMatrix::zeros(nq, wy.len());
                for a in 0..nq {
                    for b in 0..wy.len() {
                        f[(a, b)] = el.rule.weights[a] * wy[b] * uq[(a, b)] * dq[(a, b)];
                    }
                }
                let n = el.interp.transpose() * f * &by * (-fy);
                for i in 0..=p {
                    for j in 0..ny_loc {
                        out[(self.x.dof(ex, i), ydof(j))] += n[(i, j)];
                    }
                }
            }
        }
        out
    }

    /// Time derivative `M^-1 (L u + N(u))` with the inflow rows set to the
    /// derivative of the prescribed signal.
    pub fn rate(&self, t: f64, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut r = (&self.op_x * u) * &self.mass_y;
        if let Some(op_y) = &self.op_y {
            r += (&self.mass_x * u) * op_y.transpose();
        }
        if self.config.burgers {
            r += self.burgers_term(u);
        }
        let (nx, ny) = (u.nrows(), u.ncols());
        if self.config.periodic {
            return Ok(self.mass_solver.solve(&r) * &self.mass_y_inv);
        }
        let dg = DMatrix::from_fn(1, ny, |_, j| self.inflow(t, j).1);
        let lift = &dg * &self.mass_y;
        let mut rhs = r.rows(1, nx - 1).clone_owned();
        for (i, m) in self.inflow_column.iter().enumerate() {
            for j in 0..ny {
                rhs[(i, j)] -= m * lift[(0, j)];
            }
        }
        let v = self.mass_solver.solve(&rhs) * &self.mass_y_inv;
        let mut out = DMatrix::zeros(nx, ny);
        out.rows_mut(1, nx - 1).copy_from(&v);
        out.row_mut(0).copy_from(&dg);
        Ok(out)
    }

    /// Advances nodal values `u` at time `t` by one SSP-RK3 step.
    fn advance(&self, t0: f64, u0: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
        let limit = self.cfl_limit(u0);
        if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, limit });
        }
        let mut u = u0.clone();
        let mut t = t0;
        for &(a, b) in &RK3 {
            let mut next = &u + self.rate(t, &u)? * dt;
            if a > 0.0 {
                next = u0 * a + next * (1.0 - a);
            }
            t = t0 + b * dt;
            self.impose_inflow(&mut next, t);
            u = next;
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { time: t0 + dt });
        }
        Ok(u)
    }

    /// One SSP-RK3 step; rejects `dt` above [`DiscreteCase::cfl_limit`].
    pub fn step(&self, state: SolverState, dt: f64) -> Result<SolverState> {
        let values = self.advance(state.time, &state.values, dt)?;
        Ok(SolverState {
            time: state.time + dt,
            values,
            diagnostics: state.diagnostics,
        })
    }

    /// Discrete L2 energy `u^T M u`.
    pub fn energy(&self, u: &DMatrix<f64>) -> f64 {
        let mu = (&self.mass_x * u) * &self.mass_y;
        u.component_mul(&mu).sum()
    }

    /// Share of L2 energy carried by the top `ceil((P + 1) / 3)` Legendre
    /// modes, over elements lying upstream of `interface`.
    pub fn reflection_metric(&self, u: &DMatrix<f64>, interface: f64) -> Result<f64> {
        let p = self.order();
        let band = (p + 1).div_ceil(3);
        let top = p + 1 - band;
        let norms: Vec<f64> = (0..=p).map(|k| 2.0 / (2 * k + 1) as f64).collect();
        let tol = 1e-9 * self.config.h;
        let (mut high, mut total) = (0.0, 0.0);
        for ex in 0..self.x.elements() {
            if self.x.breaks[ex + 1] > interface + tol {
                continue;
            }
            let hx = 0.5 * self.x.element_length(ex);
            match &self.y {
                None => {
                    let local: Vec<f64> = (0..=p).map(|i| u[(self.x.dof(ex, i), 0)]).collect();
                    for (k, c) in self.transform.to_modal(&local).iter().enumerate() {
                        let e = c * c * norms[k] * hx;
                        total += e;
                        if k >= top {
                            high += e;
                        }
                    }
                }
                Some(g) => {
                    for ey in 0..g.elements() {
                        let hy = 0.5 * g.element_length(ey);
                        let local = DMatrix::from_fn(p + 1, p + 1, |i, j| u[(self.x.dof(ex, i), g.dof(ey, j))]);
                        let modal = &self.transform.forward * local * self.transform.forward.transpose();
                        for k in 0..=p {
                            for l in 0..=p {
                                let c = modal[(k, l)];
                                let e = c * c * norms[k] * norms[l] * hx * hy;
                                total += e;
                                if k >= top || l >= top {
                                    high += e;
                                }
                            }
                        }
                    }
                }
            }
        }
        if !total.is_finite() {
            return Err(Error::Numerical("non-finite field in reflection metric".into()));
        }
        Ok(if total > 0.0 { (high / total).clamp(0.0, 1.0) } else { 0.0 })
    }

    pub fn diagnose(&self, state: &SolverState) -> Result<DiagnosticRecord> {
        Ok(DiagnosticRecord {
            time: state.time,
            energy: self.energy(&state.values),
            max_abs: state.values.amax(),
            reflection: self.reflection_metric(&state.values, self.upstream_end)?,
        })
    }

    /// Appends a diagnostic record; records stay ordered in time.
    pub fn record(&self, state: &mut SolverState) -> Result<()> {
        let rec = self.diagnose(state)?;
        if let Some(last) = state.diagnostics.last() {
            if rec.time < last.time {
                return Err(Error::invalid("diagnostics must be recorded in time order"));
            }
            if rec.time == last.time {
                state.diagnostics.pop();
            }
        }
        state.diagnostics.push(rec);
        Ok(())
    }

    /// Integrates from the initial state to the configured end time. A
    /// divergence stops the run and is reported in the outcome.
    pub fn run(&self) -> Result<RunOutcome> {
        let end = self.config.end_time * self.config.convective_time();
        let mut state = self.initial_state()?;
        self.record(&mut state)?;
        let mut steps = 0usize;
        let mut diverged_at = None;
        while state.time < end * (1.0 - 1e-14) {
            let dt = (self.config.cfl * self.cfl_limit(&state.values)).min(end - state.time);
            match self.advance(state.time, &state.values, dt) {
                Ok(u) => {
                    state.values = u;
                    state.time += dt;
                }
                Err(Error::Divergence { time }) => {
                    diverged_at = Some(time);
                    break;
                }
                Err(e) => return Err(e),
            }
            steps += 1;
            if steps % self.config.diagnostics_every == 0 {
                self.record(&mut state)?;
            }
        }
        self.record(&mut state)?;
        Ok(RunOutcome {
            state,
            diverged_at,
            steps,
        })
    }

    pub fn snapshot(&self, state: &SolverState) -> Snapshot {
        let p = self.order();
        let ny_el = self.y.as_ref().map_or(1, Grid1d::elements);
        let ny_loc = if self.y.is_some() { p + 1 } else { 1 };
        let mut elements = Vec::new();
        for ey in 0..ny_el {
            for ex in 0..self.x.elements() {
                let mut coefficients = Vec::with_capacity((p + 1) * ny_loc);
                for j in 0..ny_loc {
                    let jy = self.y.as_ref().map_or(0, |g| g.dof(ey, j));
                    for i in 0..=p {
                        coefficients.push(state.values[(self.x.dof(ex, i), jy)]);
                    }
                }
                elements.push(ElementCoefficients {
                    index: [ex, ey],
                    coefficients,
                });
            }
        }
        Snapshot {
            time: state.time,
            order: p,
            x_breaks: self.x.breaks.clone(),
            y_breaks: self.y.as_ref().map_or_else(Vec::new, |g| g.breaks.clone()),
            elements,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Last finite state.
    pub state: SolverState,
    pub diverged_at: Option<f64>,
    pub steps: usize,
}

/// Reflection metric of `state` upstream of `interface`.
pub fn reflection_metric(case: &DiscreteCase, state: &SolverState, interface: f64) -> Result<f64> {
    case.reflection_metric(&state.values, interface)
}

pub fn diagnostics_csv(records: &[DiagnosticRecord]) -> String {
    let mut out = String::from("time,energy,max_abs,reflection\n");
    for r in records {
        out.push_str(&format!("{:.12e},{:.12e},{:.12e},{:.12e}\n", r.time, r.energy, r.max_abs, r.reflection));
    }
    out
}

/// Trapezoidal time average of the reflection metric over `[t0, t1]`,
/// using the records that fall inside the window.
pub fn time_averaged_reflection(records: &[DiagnosticRecord], t0: f64, t1: f64) -> Option<f64> {
    let inside: Vec<&DiagnosticRecord> = records.iter().filter(|r| r.time >= t0 && r.time <= t1).collect();
    match inside.len() {
        0 => None,
        1 => Some(inside[0].reflection),
        _ => {
            let span = inside.last().unwrap().time - inside[0].time;
            let area: f64 = inside
                .windows(2)
                .map(|w| 0.5 * (w[0].reflection + w[1].reflection) * (w[1].time - w[0].time))
                .sum();
            Some(area / span)
        }
    }
}

/// Paired runs of one case with and without SVV.
#[derive(Debug, Clone)]
pub struct CoarseningComparison {
    pub interface: Option<f64>,
    /// Averaging window, from the arrival of the signal at the end of the
    /// fine region to the end time or the first blow-up.
    pub window: (f64, f64),
    pub svv: RunOutcome,
    pub baseline: RunOutcome,
    pub svv_mean: f64,
    pub baseline_mean: f64,
    /// `svv_mean / baseline_mean`.
    pub ratio: f64,
}

pub fn compare_coarsening(config: &CaseConfig) -> Result<CoarseningComparison> {
    if config.kernel == KernelChoice::None {
        return Err(Error::invalid("the comparison needs an SVV kernel"));
    }
    if config.periodic {
        return Err(Error::invalid("the comparison needs an inflow boundary"));
    }
    let with = build_case(config)?;
    let without = build_case(&CaseConfig {
        kernel: KernelChoice::None,
        ..config.clone()
    })?;
    let svv = with.run()?;
    let baseline = without.run()?;
    let end = config.end_time * config.convective_time();
    let start = (with.upstream_end / config.velocity.abs() + with.ramp_time).min(end);
    let stop = [Some(end), svv.diverged_at, baseline.diverged_at]
        .into_iter()
        .flatten()
        .fold(f64::INFINITY, f64::min);
    let mean = |o: &RunOutcome| time_averaged_reflection(&o.state.diagnostics, start, stop).unwrap_or(0.0);
    let (svv_mean, baseline_mean) = (mean(&svv), mean(&baseline));
    let ratio = if baseline_mean > 0.0 { svv_mean / baseline_mean } else { f64::NAN };
    Ok(CoarseningComparison {
        interface: with.interface,
        window: (start, stop),
        svv,
        baseline,
        svv_mean,
        baseline_mean,
        ratio,
    })
}

/// Geometric sequence `start, start * factor, ...` capped at `target`, each
/// value held for `hold`.
pub fn ramp_schedule(start: f64, target: f64, factor: f64, hold: f64) -> Result<Vec<(f64, f64)>> {
    if !(start > 0.0 && start <= target && target.is_finite()) || !(factor > 1.0) {
        return Err(Error::invalid(format!(
            "ramp needs 0 < start <= target and factor > 1, got ({start}, {target}, {factor})"
        )));
    }
    let mut out = vec![(start, hold)];
    let mut k = 1;
    while out.last().unwrap().0 < target {
        let v = start * factor.powi(k);
        // Values within roundoff of the target are snapped onto it.
        let v = if v >= target * (1.0 - 1e-12) { target } else { v };
        out.push((v, hold));
        k += 1;
    }
    Ok(out)
}
