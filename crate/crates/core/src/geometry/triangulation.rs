use super::{ParametricPatch, Params};
use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};

const MAX_DIVISIONS: usize = 4096;

/// Fine linearisation of a patch: segments for curves, triangles for surfaces.
#[derive(Debug, Clone)]
pub struct AuxTriangulation {
    pub patch: usize,
    pub vertices: Vec<Vec3>,
    pub params: Vec<Params>,
    pub triangles: Vec<[usize; 3]>,
    pub segments: Vec<[usize; 2]>,
    pub chord_tol: f64,
    /// Largest chord error found by midpoint sampling.
    pub max_chord_error: f64,
}

impl AuxTriangulation {
    /// Index and parameters of the vertex nearest to `point`.
    pub fn nearest_vertex(&self, point: Vec3) -> (usize, Params) {
        let (idx, _) = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (i, vec3::dist(*v, point)))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        (idx, self.params[idx])
    }

    pub fn cell_count(&self) -> usize {
        self.triangles.len() + self.segments.len()
    }
}

/// Builds a uniform parameter-space linearisation whose chord error, sampled
/// at edge midpoints, does not exceed `chord_tol`.
///
/// Divisions are increased one at a time in the direction with the larger
/// sampled error, so the result uses the fewest divisions of this family.
pub fn auxiliary_triangulation(patch: &ParametricPatch, chord_tol: f64) -> Result<AuxTriangulation> {
    if chord_tol.is_nan() || chord_tol <= 0.0 {
        return Err(Error::invalid("chord tolerance must be positive"));
    }
    check_nondegenerate(patch)?;
    let dim = patch.dimension();
    let mut n = [1usize, 1usize];
    loop {
        let err = chord_errors(patch, n, dim);
        let worst = err.iter().cloned().fold(0.0, f64::max);
        if worst <= chord_tol {
            return Ok(build(patch, n, dim, chord_tol, worst));
        }
        if dim == 1 {
            n[0] += 1;
        } else if err[0] > chord_tol && err[0] >= err[1] {
            n[0] += 1;
        } else if err[1] > chord_tol {
            n[1] += 1;
        } else {
            n[0] += 1;
            n[1] += 1;
        }
        if n[0] > MAX_DIVISIONS || n[1] > MAX_DIVISIONS {
            return Err(Error::DegenerateGeometry(format!(
                "patch {}: chord tolerance {chord_tol:e} not reached with {MAX_DIVISIONS} divisions",
                patch.id
            )));
        }
    }
}

fn check_nondegenerate(patch: &ParametricPatch) -> Result<()> {
    let dim = patch.dimension();
    let samples = 5;
    let mut measure: f64 = 0.0;
    for i in 0..samples {
        for j in 0..if dim == 1 { 1 } else { samples } {
            let t = [
                (i as f64 + 0.5) / samples as f64,
                (j as f64 + 0.5) / samples as f64,
            ];
            let e = patch.eval_unchecked(patch.domain.lerp(t));
            let span0 = patch.domain.hi[0] - patch.domain.lo[0];
            let m = if dim == 1 {
                vec3::norm(e.d1[0]) * span0
            } else {
                let span1 = patch.domain.hi[1] - patch.domain.lo[1];
                vec3::norm(vec3::cross(e.d1[0], e.d1[1])) * span0 * span1
            };
            measure = measure.max(m);
        }
    }
    if measure <= 1e-14 {
        return Err(Error::DegenerateGeometry(format!(
            "patch {} has zero {}",
            patch.id,
            if dim == 1 { "length" } else { "area" }
        )));
    }
    Ok(())
}

fn grid_param(patch: &ParametricPatch, n: [usize; 2], i: f64, j: f64) -> Params {
    patch
        .domain
        .lerp([i / n[0] as f64, if n[1] > 0 { j / n[1] as f64 } else { 0.0 }])
}

/// Midpoint chord error on direction-0 edges, direction-1 edges and diagonals.
fn chord_errors(patch: &ParametricPatch, n: [usize; 2], dim: usize) -> [f64; 3] {
    let at = |i: f64, j: f64| patch.eval_unchecked(grid_param(patch, n, i, j)).point;
    let gap = |a: Vec3, b: Vec3, mid: Vec3| vec3::dist(vec3::lerp(a, b, 0.5), mid);
    let mut err = [0.0f64; 3];
    if dim == 1 {
        for i in 0..n[0] {
            let fi = i as f64;
            err[0] = err[0].max(gap(at(fi, 0.0), at(fi + 1.0, 0.0), at(fi + 0.5, 0.0)));
        }
        return err;
    }
    for j in 0..=n[1] {
        for i in 0..=n[0] {
            let (fi, fj) = (i as f64, j as f64);
            if i < n[0] {
                err[0] = err[0].max(gap(at(fi, fj), at(fi + 1.0, fj), at(fi + 0.5, fj)));
            }
            if j < n[1] {
                err[1] = err[1].max(gap(at(fi, fj), at(fi, fj + 1.0), at(fi, fj + 0.5)));
            }
            if i < n[0] && j < n[1] {
                err[2] = err[2].max(gap(
                    at(fi + 1.0, fj),
                    at(fi, fj + 1.0),
                    at(fi + 0.5, fj + 0.5),
                ));
            }
        }
    }
    err
}

fn build(patch: &ParametricPatch, n: [usize; 2], dim: usize, chord_tol: f64, err: f64) -> AuxTriangulation {
    let mut vertices = Vec::new();
    let mut params = Vec::new();
    let mut triangles = Vec::new();
    let mut segments = Vec::new();
    let rows = if dim == 1 { 0 } else { n[1] };
    for j in 0..=rows {
        for i in 0..=n[0] {
            let s = grid_param(patch, n, i as f64, j as f64);
            params.push(s);
            vertices.push(patch.eval_unchecked(s).point);
        }
    }
    if dim == 1 {
        segments.extend((0..n[0]).map(|i| [i, i + 1]));
    } else {
        let stride = n[0] + 1;
        for j in 0..n[1] {
            for i in 0..n[0] {
                let a = j * stride + i;
                let b = a + 1;
                let c = a + stride;
                let d = c + 1;
                triangles.push([a, b, c]);
                triangles.push([b, d, c]);
            }
        }
    }
    AuxTriangulation {
        patch: patch.id,
        vertices,
        params,
        triangles,
        segments,
        chord_tol,
        max_chord_error: err,
    }
}
