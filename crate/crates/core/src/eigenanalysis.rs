//! Eigensolution analysis of 1D linear advection `u_t + a u_x = 0`.
//!
//! All quantities are nondimensional (`a = 1`, `h = 1`): wavenumbers are
//! `kappa h` and frequencies `omega h / a`, with the wave ansatz
//! `u = exp(i (kappa x - omega t))`. Decay in time is `Im(omega) < 0`; a wave
//! decaying towards `+x` has `Im(kappa) > 0`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::polybasis::{gll_rule, legendre};
use crate::svv::{power_law_kernel, svv_coefficient, Element1d, KernelProvenance, SvvConfig, SvvKernel};
use crate::{Error, Result};

type CMatrix = DMatrix<Complex64>;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Temporal,
    Spatial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeLabel {
    Physical,
    Unphysical,
    SpuriousSecondary,
}

impl ModeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeLabel::Physical => "physical",
            ModeLabel::Unphysical => "unphysical",
            ModeLabel::SpuriousSecondary => "spurious_secondary",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeDescriptor {
    pub order: usize,
    pub kernel: Option<Vec<f64>>,
    pub pe_star: f64,
    pub upwind: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSample {
    /// `kappa h` (temporal) or `omega h / a` (spatial).
    pub x: f64,
    /// `omega h / a` (temporal) or `kappa h` (spatial).
    pub values: Vec<Complex64>,
    pub labels: Vec<ModeLabel>,
    /// Mode classification was ambiguous at this sample.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSpectrum {
    pub analysis: Analysis,
    pub scheme: SchemeDescriptor,
    pub samples: Vec<SpectrumSample>,
}

impl EigenSpectrum {
    /// `(x, value)` of every mode carrying `label`.
    pub fn family(&self, label: ModeLabel) -> Vec<(f64, Complex64)> {
        self.samples
            .iter()
            .flat_map(|s| {
                s.values
                    .iter()
                    .zip(&s.labels)
                    .filter(move |(_, l)| **l == label)
                    .map(move |(v, _)| (s.x, *v))
            })
            .collect()
    }

    pub fn physical(&self) -> Vec<(f64, Complex64)> {
        self.family(ModeLabel::Physical)
    }

    /// CSV `sample,re,im,label` for one mode family.
    pub fn to_csv(&self, label: ModeLabel) -> String {
        let mut out = String::from("sample,re,im,label\n");
        for (x, v) in self.family(label) {
            out.push_str(&format!("{x:.17e},{:.17e},{:.17e},{}\n", v.re, v.im, label.as_str()));
        }
        out
    }
}

fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Eigenpairs of a complex matrix through its Schur form.
fn eigen(a: CMatrix) -> Result<(Vec<Complex64>, Vec<Vec<Complex64>>)> {
    let n = a.nrows();
    let scale = a.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
    let schur = a
        .try_schur(1e-15, 10_000)
        .ok_or_else(|| Error::Numerical(format!("Schur iteration did not converge ({n}x{n}, max entry {scale:.3e})")))?;
    let (q, t) = schur.unpack();
    let values: Vec<Complex64> = (0..n).map(|k| t[(k, k)]).collect();
    let tiny = 1e-14 * scale;
    let vectors = (0..n)
        .map(|k| {
            let mut y = vec![Complex64::new(0.0, 0.0); n];
            y[k] = Complex64::new(1.0, 0.0);
            for j in (0..k).rev() {
                let s: Complex64 = (j + 1..=k).map(|m| t[(j, m)] * y[m]).sum();
                let mut d = t[(j, j)] - t[(k, k)];
                if d.norm() < tiny {
                    d = Complex64::new(tiny, 0.0);
                }
                y[j] = -s / d;
            }
            let v: Vec<Complex64> = (0..n).map(|i| (0..n).map(|m| q[(i, m)] * y[m]).sum()).collect();
            let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            v.into_iter().map(|c| c / norm).collect()
        })
        .collect();
    Ok((values, vectors))
}

/// `|<f, v>| / (|f| |v|)` with `f = exp(i kappa x_s)`.
fn fourier_score(samples: &[Complex64], positions: &[f64], kappa: f64) -> f64 {
    let mut dot = Complex64::new(0.0, 0.0);
    let mut nv = 0.0;
    for (v, &x) in samples.iter().zip(positions) {
        dot += Complex64::from_polar(1.0, -kappa * x) * v;
        nv += v.norm_sqr();
    }
    dot.norm() / (nv.sqrt() * (positions.len() as f64).sqrt()).max(1e-300)
}

fn pick_physical(values: &[Complex64], scores: &[f64]) -> (Vec<ModeLabel>, bool) {
    let mut best = 0;
    for k in 1..scores.len() {
        if scores[k] > scores[best] {
            best = k;
        }
    }
    let second = scores
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != best)
        .map(|(_, &s)| s)
        .fold(0.0, f64::max);
    let flagged = scores.len() > 1 && (scores[best] - second).abs() < 1e-8;
    let labels = (0..values.len())
        .map(|k| {
            if k == best {
                ModeLabel::Physical
            } else {
                ModeLabel::SpuriousSecondary
            }
        })
        .collect();
    (labels, flagged)
}

/// Element matrices of the CG(-SVV) discretisation on a unit cell.
#[derive(Debug, Clone)]
pub struct CgScheme {
    pub order: usize,
    pub kernel: Option<SvvKernel>,
    pub pe_star: f64,
    mass: DMatrix<f64>,
    /// Right-hand side operator `-C + S`.
    rhs: DMatrix<f64>,
    /// Local node positions in the unit cell.
    positions: Vec<f64>,
}

impl CgScheme {
    pub fn new(order: usize, kernel: Option<&SvvKernel>, pe_star: f64) -> Result<Self> {
        let el = Element1d::new(order, order + 3)?;
        let mut rhs = -el.convection();
        if let Some(k) = kernel {
            let nu = svv_coefficient(&SvvConfig {
                pe_star,
                velocity: 1.0,
                size: 1.0,
                order,
            })?;
            rhs += el.svv(k, nu, 1.0)?;
        }
        Ok(Self {
            order,
            kernel: kernel.cloned(),
            pe_star,
            mass: el.mass(1.0),
            rhs,
            positions: el.nodes.iter().map(|x| 0.5 * (x + 1.0)).collect(),
        })
    }

    fn descriptor(&self) -> SchemeDescriptor {
        SchemeDescriptor {
            order: self.order,
            kernel: self.kernel.as_ref().map(|k| k.entries.clone()),
            pe_star: self.pe_star,
            upwind: false,
        }
    }

    /// Bloch reduction `G A E` with `E = [I; z e_0^T]`, `G = [I | z^-1 e_0]`.
    fn bloch(&self, a: &DMatrix<f64>, z: Complex64) -> CMatrix {
        let p = self.order;
        let mut out = CMatrix::zeros(p, p);
        let col = |j: usize| -> Vec<(usize, Complex64)> {
            if j == 0 {
                vec![(0, Complex64::new(1.0, 0.0)), (p, z)]
            } else {
                vec![(j, Complex64::new(1.0, 0.0))]
            }
        };
        for i in 0..p {
            for j in 0..p {
                let mut s = Complex64::new(0.0, 0.0);
                for (ri, wi) in col(i) {
                    for (cj, wj) in col(j) {
                        // Row weight is the conjugate pairing: z^-1 on the wrapped row.
                        let wi = if ri == p { wi.inv() } else { wi };
                        s += wi * wj * a[(ri, cj)];
                    }
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    /// All `P` frequencies at wavenumber `kappa h`, with labels.
    pub fn temporal_sample(&self, kappa: f64) -> Result<SpectrumSample> {
        let z = Complex64::from_polar(1.0, kappa);
        let m = self.bloch(&self.mass, z);
        let l = self.bloch(&self.rhs, z);
        let minv = m
            .try_inverse()
            .ok_or_else(|| Error::Numerical(format!("singular Bloch mass matrix at kappa h = {kappa}")))?;
        let (lambda, vecs) = eigen(minv * l)?;
        let values: Vec<Complex64> = lambda.iter().map(|l| I * l).collect();
        let pos = &self.positions[..self.order];
        let scores: Vec<f64> = vecs.iter().map(|v| fourier_score(v, pos, kappa)).collect();
        let (labels, flagged) = pick_physical(&values, &scores);
        Ok(SpectrumSample {
            x: kappa,
            values,
            labels,
            flagged,
        })
    }

    /// The element operator `C - S - i omega M` condensed onto its two end nodes.
    fn condensed(&self, omega: f64) -> Option<[[Complex64; 2]; 2]> {
        let p = self.order;
        let b = CMatrix::from_fn(p + 1, p + 1, |i, j| Complex64::new(-self.rhs[(i, j)], -omega * self.mass[(i, j)]));
        let ends = [0, p];
        let mut s = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (a, &i) in ends.iter().enumerate() {
            for (c, &j) in ends.iter().enumerate() {
                s[a][c] = b[(i, j)];
            }
        }
        if p > 1 {
            let inner: Vec<usize> = (1..p).collect();
            let bii = CMatrix::from_fn(p - 1, p - 1, |i, j| b[(inner[i], inner[j])]);
            let lu = bii.lu();
            let pivot = lu.u().diagonal().iter().map(|d| d.norm()).fold(f64::INFINITY, f64::min);
            if pivot < 1e-13 {
                return None;
            }
            for (c, &j) in ends.iter().enumerate() {
                let rhs = nalgebra::DVector::from_fn(p - 1, |i, _| b[(inner[i], j)]);
                let x = lu.solve(&rhs)?;
                for (a, &i) in ends.iter().enumerate() {
                    let corr: Complex64 = inner.iter().enumerate().map(|(k, &m)| b[(i, m)] * x[k]).sum();
                    s[a][c] -= corr;
                }
            }
        }
        Some(s)
    }

    /// Roots `z = exp(i kappa h)` of `S10 + (S00 + S11) z + S01 z^2 = 0`.
    pub fn transfer_roots(&self, omega: f64) -> Option<[Complex64; 2]> {
        let s = self.condensed(omega)?;
        let (a, b, c) = (s[0][1], s[0][0] + s[1][1], s[1][0]);
        if a.norm() < 1e-300 {
            return None;
        }
        let disc = (b * b - 4.0 * a * c).sqrt();
        let q = if (b.conj() * disc).re >= 0.0 { -0.5 * (b + disc) } else { -0.5 * (b - disc) };
        let z1 = q / a;
        let z2 = if q.norm() > 0.0 { c / q } else { -b / a - z1 };
        Some([z1, z2])
    }
}

/// Temporal eigenanalysis of CG order `P`, optionally with SVV.
pub fn temporal_esa(order: usize, kernel: Option<&SvvKernel>, pe_star: f64, kappas: &[f64]) -> Result<EigenSpectrum> {
    let scheme = CgScheme::new(order, kernel, pe_star)?;
    let samples = kappas
        .par_iter()
        .map(|&k| scheme.temporal_sample(k))
        .collect::<Result<Vec<_>>>()?;
    Ok(EigenSpectrum {
        analysis: Analysis::Temporal,
        scheme: scheme.descriptor(),
        samples,
    })
}

fn unwrap_near(angle: f64, previous: f64) -> f64 {
    angle + 2.0 * PI * ((previous - angle) / (2.0 * PI)).round()
}

/// Spatial eigenanalysis of CG order `P`: physical and unphysical `kappa h`
/// for each real `omega h / a`. Samples are processed in the given order
/// for continuity tracking, which starts from `kappa h = 0`.
pub fn spatial_esa(order: usize, kernel: Option<&SvvKernel>, pe_star: f64, omegas: &[f64]) -> Result<EigenSpectrum> {
    let scheme = CgScheme::new(order, kernel, pe_star)?;
    Ok(EigenSpectrum {
        analysis: Analysis::Spatial,
        scheme: scheme.descriptor(),
        samples: spatial_samples(&scheme, omegas),
    })
}

fn spatial_samples(scheme: &CgScheme, omegas: &[f64]) -> Vec<SpectrumSample> {
    let mut prev_w = 0.0;
    let mut prev_re = [0.0, f64::NAN];
    let mut out = Vec::with_capacity(omegas.len());
    for &w in omegas {
        // Interior resonances make the condensation singular; step just off them.
        let roots = (0..4).find_map(|k| scheme.transfer_roots(w + 1e-10 * k as f64 * (1.0 + w)));
        let Some(roots) = roots else {
            warn!("spatial ESA: singular condensation at omega h / a = {w}");
            out.push(SpectrumSample {
                x: w,
                values: vec![Complex64::new(f64::NAN, f64::NAN); 2],
                labels: vec![ModeLabel::Physical, ModeLabel::Unphysical],
                flagged: true,
            });
            continue;
        };
        let (m0, m1) = (roots[0].norm(), roots[1].norm());
        let tol = 1e-9 * (1.0 + m0.max(m1));
        // Group velocity a = 1 predicts the physical wavenumber.
        let predicted = prev_re[0] + (w - prev_w);
        let re = [unwrap_near(roots[0].arg(), predicted), unwrap_near(roots[1].arg(), predicted)];
        let phys = if (m0 - m1).abs() > tol {
            usize::from(m1 < m0)
        } else {
            usize::from((re[1] - predicted).abs() < (re[0] - predicted).abs())
        };
        let flagged = (roots[0] - roots[1]).norm() < 1e-8;
        let zp = roots[phys];
        let zu = roots[1 - phys];
        let kp_re = re[phys];
        let ku_re = if prev_re[1].is_nan() { zu.arg() } else { unwrap_near(zu.arg(), prev_re[1]) };
        prev_re = [kp_re, ku_re];
        prev_w = w;
        out.push(SpectrumSample {
            x: w,
            values: vec![Complex64::new(kp_re, -zp.norm().ln()), Complex64::new(ku_re, -zu.norm().ln())],
            labels: vec![ModeLabel::Physical, ModeLabel::Unphysical],
            flagged,
        });
    }
    out
}

/// Upwind DG of order `P` (modal Legendre basis) on a unit cell.
#[derive(Debug, Clone)]
pub struct DgScheme {
    pub order: usize,
    mass: DMatrix<f64>,
    conv_t: DMatrix<f64>,
}

impl DgScheme {
    pub fn new(order: usize) -> Result<Self> {
        let n = order + 1;
        let rule = gll_rule(order + 3)?;
        let mut conv_t = DMatrix::zeros(n, n);
        for (&x, &w) in rule.points.iter().zip(&rule.weights) {
            for i in 0..n {
                for j in 0..n {
                    // (C^T)_{ij} = int l_i' l_j dxi
                    conv_t[(i, j)] += w * legendre(i, x).1 * legendre(j, x).0;
                }
            }
        }
        let mass = DMatrix::from_fn(n, n, |i, j| if i == j { 0.5 * 2.0 / (2 * i + 1) as f64 } else { 0.0 });
        Ok(Self { order, mass, conv_t })
    }

    pub fn temporal_sample(&self, kappa: f64) -> Result<SpectrumSample> {
        let n = self.order + 1;
        let zinv = Complex64::from_polar(1.0, -kappa);
        let left = |i: usize| if i % 2 == 0 { 1.0 } else { -1.0 };
        let r = CMatrix::from_fn(n, n, |i, j| Complex64::new(self.conv_t[(i, j)] - 1.0, 0.0) + zinv * left(i));
        let minv = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / self.mass[(i, i)] } else { 0.0 });
        let (lambda, vecs) = eigen(to_complex(&minv) * r)?;
        let values: Vec<Complex64> = lambda.iter().map(|l| I * l).collect();
        let pos: Vec<f64> = (0..2 * n).map(|s| (s as f64 + 0.5) / (2 * n) as f64).collect();
        let scores: Vec<f64> = vecs
            .iter()
            .map(|v| {
                let u: Vec<Complex64> = pos
                    .iter()
                    .map(|&x| (0..n).map(|k| v[k] * legendre(k, 2.0 * x - 1.0).0).sum())
                    .collect();
                fourier_score(&u, &pos, kappa)
            })
            .collect();
        let (labels, flagged) = pick_physical(&values, &scores);
        Ok(SpectrumSample {
            x: kappa,
            values,
            labels,
            flagged,
        })
    }
}

/// Temporal eigenanalysis of upwind DG of order `P >= 0`.
pub fn dg_upwind_reference(order: usize, kappas: &[f64]) -> Result<EigenSpectrum> {
    let scheme = DgScheme::new(order)?;
    let samples = kappas
        .par_iter()
        .map(|&k| scheme.temporal_sample(k))
        .collect::<Result<Vec<_>>>()?;
    Ok(EigenSpectrum {
        analysis: Analysis::Temporal,
        scheme: SchemeDescriptor {
            order,
            kernel: None,
            pe_star: f64::INFINITY,
            upwind: true,
        },
        samples,
    })
}

/// Diffusion curve the optimised kernel is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelTarget {
    /// Upwind DG of order `P - 1` (same degrees of freedom per cell).
    DgUpwind,
    /// CG without SVV; the optimum is the zero kernel.
    CgNoSvv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub order: usize,
    /// Floor on `-Im(kappa_u h)` over the frequency sweep; `None` drops the constraint.
    pub c_min: Option<f64>,
    pub pe_star: f64,
    pub target: KernelTarget,
    pub kappa_samples: usize,
    pub omega_samples: usize,
    pub max_evaluations: usize,
    pub seed: u64,
}

impl OptimizeConfig {
    pub fn new(order: usize) -> Self {
        Self {
            order,
            c_min: Some(0.1),
            pe_star: 1.0,
            target: KernelTarget::DgUpwind,
            kappa_samples: 48,
            omega_samples: 192,
            max_evaluations: 2000,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedKernel {
    pub kernel: SvvKernel,
    /// Penalised objective at the optimum.
    pub objective: f64,
    /// Relative L2 mismatch of the physical-mode diffusion.
    pub mismatch: f64,
    /// `min -Im(kappa_u h)` over the frequency sweep.
    pub margin: f64,
    /// Best objective after each simplex iteration.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

/// Kernel with `Q_0 = 0`, free interior entries and the inactive top entry
/// copied from `Q_{P-1}`.
fn kernel_from_free(order: usize, x: &[f64]) -> SvvKernel {
    let mut e = vec![0.0];
    e.extend_from_slice(x);
    e.push(*x.last().unwrap_or(&0.0));
    SvvKernel {
        order,
        entries: e,
        provenance: KernelProvenance::DgOptimized,
    }
}

fn kappa_grid(order: usize, n: usize) -> Vec<f64> {
    (1..=n).map(|k| PI * order as f64 * k as f64 / n as f64).collect()
}

/// `min -Im(kappa_u h)` over `omega h / a` in `(0, pi P]`.
pub fn unphysical_margin(order: usize, kernel: Option<&SvvKernel>, pe_star: f64, samples: usize) -> Result<f64> {
    let spec = spatial_esa(order, kernel, pe_star, &kappa_grid(order, samples))?;
    Ok(spec
        .family(ModeLabel::Unphysical)
        .iter()
        .map(|(_, k)| if k.im.is_nan() { f64::NEG_INFINITY } else { -k.im })
        .fold(f64::INFINITY, f64::min))
}

struct Objective {
    cfg: OptimizeConfig,
    kappas: Vec<f64>,
    target: Vec<f64>,
    norm: f64,
}

struct Evaluation {
    value: f64,
    mismatch: f64,
    margin: f64,
}

impl Objective {
    fn new(cfg: &OptimizeConfig) -> Result<Self> {
        let kappas = kappa_grid(cfg.order, cfg.kappa_samples);
        let target: Vec<f64> = match cfg.target {
            KernelTarget::DgUpwind => dg_upwind_reference(cfg.order - 1, &kappas)?,
            KernelTarget::CgNoSvv => temporal_esa(cfg.order, None, cfg.pe_star, &kappas)?,
        }
        .physical()
        .iter()
        .map(|(_, w)| w.im)
        .collect();
        let norm = target.iter().map(|t| t * t).sum::<f64>().sqrt().max(1e-12);
        Ok(Self {
            cfg: cfg.clone(),
            kappas,
            target,
            norm,
        })
    }

    fn eval(&self, x: &[f64]) -> Result<Evaluation> {
        let kernel = kernel_from_free(self.cfg.order, x);
        let scheme = CgScheme::new(self.cfg.order, Some(&kernel), self.cfg.pe_star)?;
        let mut sq = 0.0;
        for (k, t) in self.kappas.iter().zip(&self.target) {
            let s = scheme.temporal_sample(*k)?;
            let w = s.values[s.labels.iter().position(|l| *l == ModeLabel::Physical).unwrap_or(0)];
            sq += (w.im - t).powi(2);
        }
        let mismatch = sq.sqrt() / self.norm;
        let (margin, penalty) = match self.cfg.c_min {
            Some(c) => {
                let m = spatial_samples(&scheme, &kappa_grid(self.cfg.order, self.cfg.omega_samples))
                    .iter()
                    .map(|s| if s.values[1].im.is_nan() { f64::NEG_INFINITY } else { -s.values[1].im })
                    .fold(f64::INFINITY, f64::min);
                (m, 10.0 * ((c - m) / c).max(0.0).min(1e3))
            }
            None => (f64::INFINITY, 0.0),
        };
        Ok(Evaluation {
            value: mismatch + penalty,
            mismatch,
            margin,
        })
    }
}

/// Fits the SVV kernel of CG order `P` so that its physical-mode diffusion
/// matches the target, by a seeded Nelder-Mead search over the free entries
/// `Q_1 .. Q_{P-1}` projected onto [0, 1].
pub fn optimize_kernel(cfg: &OptimizeConfig) -> Result<OptimizedKernel> {
    if !(2..=10).contains(&cfg.order) {
        return Err(Error::invalid(format!("kernel optimisation supports P in 2..=10, got {}", cfg.order)));
    }
    let obj = Objective::new(cfg)?;
    let dim = cfg.order - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = power_law_kernel(cfg.order, 2.0)?.entries[1..cfg.order].to_vec();
    let clamp = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|x| x.clamp(0.0, 1.0)).collect() };
    let evals = std::cell::Cell::new(0usize);
    let evaluate = |x: &[f64]| -> Result<f64> {
        evals.set(evals.get() + 1);
        Ok(obj.eval(x)?.value)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let f0 = evaluate(&start)?;
    simplex.push((start.clone(), f0));
    for i in 0..dim {
        let mut x = start.clone();
        let step = 0.25 + rng.gen_range(-0.05..0.05);
        x[i] = if x[i] + step <= 1.0 { x[i] + step } else { x[i] - step };
        let x = clamp(x);
        let f = evaluate(&x)?;
        simplex.push((x, f));
    }
    let mut history = Vec::new();
    while evals.get() < cfg.max_evaluations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        history.push(simplex[0].1);
        let spread = simplex[dim].1 - simplex[0].1;
        let size = simplex
            .iter()
            .skip(1)
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread < 1e-12 && size < 1e-9 {
            break;
        }
        let centroid: Vec<f64> = (0..dim)
            .map(|k| simplex[..dim].iter().map(|(x, _)| x[k]).sum::<f64>() / dim as f64)
            .collect();
        let worst = simplex[dim].clone();
        let along = |t: f64| -> Vec<f64> {
            clamp(
                centroid
                    .iter()
                    .zip(&worst.0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect(),
            )
        };
        let xr = along(1.0);
        let fr = evaluate(&xr)?;
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = evaluate(&xe)?;
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let x = along(0.5);
                let f = evaluate(&x)?;
                (x, f)
            } else {
                let x = along(-0.5);
                let f = evaluate(&x)?;
                (x, f)
            };
            if fc < worst.1.min(fr) {
                simplex[dim] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let x = clamp(best.iter().zip(&v.0).map(|(b, x)| b + 0.5 * (x - b)).collect());
                    let f = evaluate(&x)?;
                    *v = (x, f);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    history.push(simplex[0].1);
    let best = &simplex[0].0;
    let e = obj.eval(best)?;
    info!(
        "kernel P={}: objective {:.4e}, mismatch {:.4e}, margin {:.4e}, {} evaluations",
        cfg.order, e.value, e.mismatch, e.margin, evals.get()
    );
    if let Some(c) = cfg.c_min {
        if e.margin < c {
            return Err(Error::Infeasible {
                best_margin: e.margin,
                required: c,
            });
        }
    }
    Ok(OptimizedKernel {
        kernel: kernel_from_free(cfg.order, best),
        objective: e.value,
        mismatch: e.mismatch,
        margin: e.margin,
        history,
        evaluations: evals.get(),
    })
}

/// Kernel file: `{P, entries, provenance, generator_config}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFile {
    #[serde(rename = "P")]
    pub order: usize,
    pub entries: Vec<f64>,
    pub provenance: KernelProvenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_config: Option<GeneratorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRecord {
    pub config: OptimizeConfig,
    pub mismatch: f64,
    pub margin: f64,
    pub evaluations: usize,
}

impl KernelFile {
    pub fn kernel(&self) -> Result<SvvKernel> {
        SvvKernel::new(self.order, self.entries.clone(), self.provenance)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| {
            Error::parse(
                format!("{}:{}:{}", path.display(), e.line(), e.column()),
                e.to_string(),
            )
        })
    }

    /// Writes through a temporary file and a rename.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Numerical(e.to_string()))?;
        std::fs::write(&tmp, text + "\n")?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}

/// Generates the DG-matching kernel of order `P` with the default settings.
pub fn generate_dg_kernel(order: usize) -> Result<KernelFile> {
    let cfg = OptimizeConfig::new(order);
    let r = optimize_kernel(&cfg)?;
    Ok(KernelFile {
        order,
        entries: r.kernel.entries,
        provenance: KernelProvenance::DgOptimized,
        generator_config: Some(GeneratorRecord {
            config: cfg,
            mismatch: r.mismatch,
            margin: r.margin,
            evaluations: r.evaluations,
        }),
    })
}

/// Directory of `dg_P{P}.json` kernel files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelCache {
    pub dir: PathBuf,
}

impl KernelCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// The kernels shipped in `assets/kernels`.
    pub fn bundled() -> Self {
        Self::new(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/kernels"))
    }

    pub fn path(&self, order: usize) -> PathBuf {
        self.dir.join(format!("dg_P{order}.json"))
    }

    pub fn load_or_generate(&self, order: usize) -> Result<SvvKernel> {
        if !(2..=10).contains(&order) {
            return Err(Error::invalid(format!("DG kernels exist for P in 2..=10, got {order}")));
        }
        let path = self.path(order);
        if path.exists() {
            return KernelFile::read(&path)?.kernel();
        }
        info!("generating DG kernel for P={order} into {}", path.display());
        let file = generate_dg_kernel(order)?;
        file.write(&path)?;
        file.kernel()
    }
}
