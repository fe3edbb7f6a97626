//! Parametric boundary geometry.
//!
//! Patches are either curves `x(s)` or surfaces `x(s1, s2)` over a closed
//! parameter box. Each patch answers three queries: evaluation (with first and
//! second derivatives), projection of a point in space, and its own bounding
//! box. Patch sets are stored in a k-d tree of inflated boxes for candidate
//! lookup, and each patch can be linearised into an auxiliary triangulation
//! that seeds projections.

mod index;
mod io;
mod project;
mod triangulation;

pub use index::{build_patch_index, inflate_box, Aabb, SpatialIndex};
pub use io::{parse_geometry, read_geometry, write_geometry, GeometryFile};
pub use project::{project, Projection};
pub use triangulation::{auxiliary_triangulation, AuxTriangulation};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};

/// Parameter tuple; the second entry is unused for curves.
pub type Params = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "parameters", rename_all = "snake_case")]
pub enum Shape {
    /// `x(s) = start + s (end - start)`.
    Line { start: Vec3, end: Vec3 },
    /// `x(s) = center + radius (cos s e1 + sin s e2)`, with `e1`, `e2` orthonormal.
    CircularArc {
        center: Vec3,
        radius: f64,
        e1: Vec3,
        e2: Vec3,
    },
    /// `x(s1, s2) = origin + s1 u + s2 v`.
    Plane { origin: Vec3, u: Vec3, v: Vec3 },
    /// `x(s1, s2) = origin + radius (cos s1 e1 + sin s1 e2) + s2 axis`, `e2 = axis x e1`.
    Cylinder {
        origin: Vec3,
        axis: Vec3,
        radius: f64,
        e1: Vec3,
    },
    /// `x(s1, s2) = center + radius (sin s2 cos s1, sin s2 sin s1, cos s2)`.
    Sphere { center: Vec3, radius: f64 },
    /// Bezier curve; the parameter domain is mapped affinely onto [0, 1].
    BezierCurve { control: Vec<Vec3> },
    /// Tensor-product Bezier surface with `(degree_u + 1) * (degree_v + 1)`
    /// control points, `u` index fastest.
    BezierSurface {
        degree_u: usize,
        degree_v: usize,
        control: Vec<Vec3>,
    },
}

impl Shape {
    pub fn dimension(&self) -> usize {
        match self {
            Shape::Line { .. } | Shape::CircularArc { .. } | Shape::BezierCurve { .. } => 1,
            _ => 2,
        }
    }
}

/// A closed parameter box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamDomain {
    pub lo: Params,
    pub hi: Params,
}

impl ParamDomain {
    pub fn contains(&self, s: &Params, dim: usize) -> bool {
        (0..dim).all(|k| {
            let tol = 1e-12 * (1.0 + (self.hi[k] - self.lo[k]).abs());
            s[k] >= self.lo[k] - tol && s[k] <= self.hi[k] + tol
        })
    }

    pub fn clamp(&self, s: Params, dim: usize) -> Params {
        let mut out = s;
        for k in 0..dim {
            out[k] = s[k].clamp(self.lo[k], self.hi[k]);
        }
        out
    }

    pub fn center(&self) -> Params {
        [
            0.5 * (self.lo[0] + self.hi[0]),
            0.5 * (self.lo[1] + self.hi[1]),
        ]
    }

    pub fn lerp(&self, t: Params) -> Params {
        [
            self.lo[0] + t[0] * (self.hi[0] - self.lo[0]),
            self.lo[1] + t[1] * (self.hi[1] - self.lo[1]),
        ]
    }
}

/// Point and parametric derivatives at a parameter location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchEval {
    pub point: Vec3,
    /// `d1[k] = dx/ds_k`.
    pub d1: [Vec3; 2],
    /// `d2[k][l] = d2x/(ds_k ds_l)`.
    pub d2: [[Vec3; 2]; 2],
}

/// A curve or surface patch of a boundary representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "io::RawPatch", into = "io::RawPatch")]
pub struct ParametricPatch {
    pub id: usize,
    pub shape: Shape,
    pub domain: ParamDomain,
}

impl ParametricPatch {
    pub fn new(id: usize, shape: Shape, domain: ParamDomain) -> Result<Self> {
        let patch = Self { id, shape, domain };
        patch.validate()?;
        Ok(patch)
    }

    pub fn curve(id: usize, shape: Shape, lo: f64, hi: f64) -> Result<Self> {
        Self::new(
            id,
            shape,
            ParamDomain {
                lo: [lo, 0.0],
                hi: [hi, 0.0],
            },
        )
    }

    pub fn surface(id: usize, shape: Shape, lo: Params, hi: Params) -> Result<Self> {
        Self::new(id, shape, ParamDomain { lo, hi })
    }

    pub fn dimension(&self) -> usize {
        self.shape.dimension()
    }

    fn validate(&self) -> Result<()> {
        let dim = self.dimension();
        for k in 0..dim {
            if !(self.domain.lo[k].is_finite() && self.domain.hi[k].is_finite())
                || self.domain.hi[k] < self.domain.lo[k]
            {
                return Err(Error::invalid(format!(
                    "patch {}: invalid parameter interval [{}, {}]",
                    self.id, self.domain.lo[k], self.domain.hi[k]
                )));
            }
        }
        match &self.shape {
            Shape::CircularArc { radius, .. }
            | Shape::Cylinder { radius, .. }
            | Shape::Sphere { radius, .. }
                if *radius <= 0.0 =>
            {
                Err(Error::invalid(format!("patch {}: radius must be positive", self.id)))
            }
            Shape::BezierCurve { control } if control.len() < 2 => Err(Error::invalid(format!(
                "patch {}: Bezier curve needs at least 2 control points",
                self.id
            ))),
            Shape::BezierSurface {
                degree_u,
                degree_v,
                control,
            } if control.len() != (degree_u + 1) * (degree_v + 1) => Err(Error::invalid(format!(
                "patch {}: expected {} control points, got {}",
                self.id,
                (degree_u + 1) * (degree_v + 1),
                control.len()
            ))),
            _ => Ok(()),
        }
    }

    /// Point on the patch at `s`; errors if `s` lies outside the parameter domain.
    pub fn point(&self, s: Params) -> Result<Vec3> {
        Ok(self.eval(s)?.point)
    }

    /// Point and first/second derivatives at `s`.
    pub fn eval(&self, s: Params) -> Result<PatchEval> {
        if !self.domain.contains(&s, self.dimension()) {
            return Err(Error::Domain(format!(
                "parameters {:?} outside domain of patch {}",
                &s[..self.dimension()],
                self.id
            )));
        }
        Ok(self.eval_unchecked(s))
    }

    pub(crate) fn eval_unchecked(&self, s: Params) -> PatchEval {
        let zero = [0.0; 3];
        let mut out = PatchEval {
            point: zero,
            d1: [zero; 2],
            d2: [[zero; 2]; 2],
        };
        match &self.shape {
            Shape::Line { start, end } => {
                let d = vec3::sub(*end, *start);
                out.point = vec3::axpy(*start, s[0], d);
                out.d1[0] = d;
            }
            Shape::CircularArc {
                center,
                radius,
                e1,
                e2,
            } => {
                let (sn, cs) = s[0].sin_cos();
                out.point = vec3::add(
                    *center,
                    vec3::scale(vec3::add(vec3::scale(*e1, cs), vec3::scale(*e2, sn)), *radius),
                );
                out.d1[0] =
                    vec3::scale(vec3::add(vec3::scale(*e1, -sn), vec3::scale(*e2, cs)), *radius);
                out.d2[0][0] = vec3::scale(vec3::sub(out.point, *center), -1.0);
            }
            Shape::Plane { origin, u, v } => {
                out.point = vec3::axpy(vec3::axpy(*origin, s[0], *u), s[1], *v);
                out.d1 = [*u, *v];
            }
            Shape::Cylinder {
                origin,
                axis,
                radius,
                e1,
            } => {
                let e2 = vec3::cross(*axis, *e1);
                let (sn, cs) = s[0].sin_cos();
                let radial = vec3::add(vec3::scale(*e1, cs), vec3::scale(e2, sn));
                out.point = vec3::axpy(vec3::axpy(*origin, *radius, radial), s[1], *axis);
                out.d1[0] =
                    vec3::scale(vec3::add(vec3::scale(*e1, -sn), vec3::scale(e2, cs)), *radius);
                out.d1[1] = *axis;
                out.d2[0][0] = vec3::scale(radial, -radius);
            }
            Shape::Sphere { center, radius } => {
                let (s1, c1) = s[0].sin_cos();
                let (s2, c2) = s[1].sin_cos();
                let r = *radius;
                out.point = vec3::add(*center, [r * s2 * c1, r * s2 * s1, r * c2]);
                out.d1[0] = [-r * s2 * s1, r * s2 * c1, 0.0];
                out.d1[1] = [r * c2 * c1, r * c2 * s1, -r * s2];
                out.d2[0][0] = [-r * s2 * c1, -r * s2 * s1, 0.0];
                out.d2[0][1] = [-r * c2 * s1, r * c2 * c1, 0.0];
                out.d2[1][0] = out.d2[0][1];
                out.d2[1][1] = [-r * s2 * c1, -r * s2 * s1, -r * c2];
            }
            Shape::BezierCurve { control } => {
                let span = self.domain.hi[0] - self.domain.lo[0];
                let t = if span > 0.0 { (s[0] - self.domain.lo[0]) / span } else { 0.0 };
                let inv = if span > 0.0 { 1.0 / span } else { 0.0 };
                let (b, db, ddb) = bernstein(control.len() - 1, t);
                for (i, c) in control.iter().enumerate() {
                    out.point = vec3::axpy(out.point, b[i], *c);
                    out.d1[0] = vec3::axpy(out.d1[0], db[i] * inv, *c);
                    out.d2[0][0] = vec3::axpy(out.d2[0][0], ddb[i] * inv * inv, *c);
                }
            }
            Shape::BezierSurface {
                degree_u,
                degree_v,
                control,
            } => {
                let mut t = [0.0; 2];
                let mut inv = [0.0; 2];
                for k in 0..2 {
                    let span = self.domain.hi[k] - self.domain.lo[k];
                    if span > 0.0 {
                        t[k] = (s[k] - self.domain.lo[k]) / span;
                        inv[k] = 1.0 / span;
                    }
                }
                let (bu, dbu, ddbu) = bernstein(*degree_u, t[0]);
                let (bv, dbv, ddbv) = bernstein(*degree_v, t[1]);
                for j in 0..=*degree_v {
                    for i in 0..=*degree_u {
                        let c = control[j * (degree_u + 1) + i];
                        out.point = vec3::axpy(out.point, bu[i] * bv[j], c);
                        out.d1[0] = vec3::axpy(out.d1[0], dbu[i] * bv[j] * inv[0], c);
                        out.d1[1] = vec3::axpy(out.d1[1], bu[i] * dbv[j] * inv[1], c);
                        out.d2[0][0] =
                            vec3::axpy(out.d2[0][0], ddbu[i] * bv[j] * inv[0] * inv[0], c);
                        out.d2[0][1] =
                            vec3::axpy(out.d2[0][1], dbu[i] * dbv[j] * inv[0] * inv[1], c);
                        out.d2[1][1] =
                            vec3::axpy(out.d2[1][1], bu[i] * ddbv[j] * inv[1] * inv[1], c);
                    }
                }
                out.d2[1][0] = out.d2[0][1];
            }
        }
        out
    }

    /// Axis-aligned box containing the patch.
    pub fn bounding_box(&self) -> Aabb {
        index::patch_bounds(self)
    }

    /// Length of the bounding-box diagonal.
    pub fn diagonal(&self) -> f64 {
        let b = self.bounding_box();
        vec3::dist(b.min, b.max)
    }
}

/// Bernstein basis of degree `n` at `t` with first and second derivatives.
fn bernstein(n: usize, t: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let basis = |deg: usize| -> Vec<f64> {
        let mut b = vec![0.0; deg + 1];
        b[0] = 1.0;
        for k in 1..=deg {
            for i in (0..=k).rev() {
                let left = if i > 0 { b[i - 1] } else { 0.0 };
                b[i] = (1.0 - t) * b[i] + t * left;
            }
        }
        b
    };
    let b = basis(n);
    let mut db = vec![0.0; n + 1];
    let mut ddb = vec![0.0; n + 1];
    if n >= 1 {
        let b1 = basis(n - 1);
        for i in 0..=n {
            let left = if i > 0 { b1[i - 1] } else { 0.0 };
            let right = if i < n { b1[i] } else { 0.0 };
            db[i] = n as f64 * (left - right);
        }
    }
    if n >= 2 {
        let b2 = basis(n - 2);
        let get = |i: isize| -> f64 {
            if i < 0 || i as usize > n - 2 {
                0.0
            } else {
                b2[i as usize]
            }
        };
        for i in 0..=n {
            let ii = i as isize;
            ddb[i] = (n * (n - 1)) as f64 * (get(ii - 2) - 2.0 * get(ii - 1) + get(ii));
        }
    }
    (b, db, ddb)
}
