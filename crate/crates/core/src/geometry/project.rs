use nalgebra::{Matrix2, Vector2};

use super::{ParametricPatch, Params};
use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};

const MAX_ITERATIONS: usize = 100;
const GRADIENT_TOL: f64 = 1e-10;
const ARMIJO_C: f64 = 1e-4;

/// Result of projecting a point onto a patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub params: Params,
    pub point: Vec3,
    pub distance: f64,
    pub iterations: usize,
}

/// Projects `point` onto `patch`, starting from `initial_guess`.
///
/// Minimises `f(s) = |x(s) - p|^2 / 2` over the parameter box. Each step is a
/// Newton step on the full Hessian `J^T J + sum r . x_kl` when it is positive
/// definite, otherwise a Gauss-Newton step on `J^T J`. Steps are clamped to
/// the box (components pushing against an active bound are dropped) and
/// accepted by Armijo backtracking.
pub fn project(patch: &ParametricPatch, point: Vec3, initial_guess: Params) -> Result<Projection> {
    let dim = patch.dimension();
    if !patch.domain.contains(&initial_guess, dim) {
        return Err(Error::Domain(format!(
            "initial guess {:?} outside domain of patch {}",
            &initial_guess[..dim],
            patch.id
        )));
    }
    let scale = patch.diagonal().max(1e-300);
    let grad_tol = GRADIENT_TOL * scale.max(1.0);
    let mut s = patch.domain.clamp(initial_guess, dim);
    let mut gnorm = f64::INFINITY;

    for iteration in 0..=MAX_ITERATIONS {
        let e = patch.eval_unchecked(s);
        let r = vec3::sub(e.point, point);
        let f = 0.5 * vec3::dot(r, r);
        let mut g = [0.0; 2];
        let mut h = [[0.0; 2]; 2];
        for k in 0..dim {
            g[k] = vec3::dot(r, e.d1[k]);
            for l in 0..dim {
                h[k][l] = vec3::dot(e.d1[k], e.d1[l]);
            }
        }
        let active = active_bounds(patch, &s, &g, dim);
        gnorm = (0..dim)
            .filter(|&k| !active[k])
            .map(|k| g[k] * g[k])
            .sum::<f64>()
            .sqrt();
        if gnorm <= grad_tol {
            return Ok(Projection {
                params: s,
                point: e.point,
                distance: vec3::norm(r),
                iterations: iteration,
            });
        }
        if iteration == MAX_ITERATIONS {
            break;
        }

        let mut full = h;
        for k in 0..dim {
            for l in 0..dim {
                full[k][l] += vec3::dot(r, e.d2[k][l]);
            }
        }
        let mut dir = solve_free(&full, &g, &active, dim)
            .filter(|d| (0..dim).map(|k| d[k] * g[k]).sum::<f64>() < 0.0)
            .or_else(|| solve_free(&h, &g, &active, dim))
            .unwrap_or([-g[0], -g[1]]);
        for k in 0..dim {
            if active[k] {
                dir[k] = 0.0;
            }
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-14 {
            let trial = patch
                .domain
                .clamp([s[0] + alpha * dir[0], s[1] + alpha * dir[1]], dim);
            let step: f64 = (0..dim).map(|k| g[k] * (trial[k] - s[k])).sum();
            let rt = vec3::sub(patch.eval_unchecked(trial).point, point);
            let ft = 0.5 * vec3::dot(rt, rt);
            if ft <= f + ARMIJO_C * step {
                accepted = Some(trial);
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some(next) if next != s => s = next,
            _ => {
                // No representable decrease: the iterate is stationary to
                // machine precision.
                if gnorm <= 1e3 * grad_tol {
                    let e = patch.eval_unchecked(s);
                    return Ok(Projection {
                        params: s,
                        point: e.point,
                        distance: vec3::dist(e.point, point),
                        iterations: iteration,
                    });
                }
                break;
            }
        }
    }
    Err(Error::ProjectionFailed {
        patch: patch.id,
        iterations: MAX_ITERATIONS,
        gradient_norm: gnorm,
    })
}

fn active_bounds(patch: &ParametricPatch, s: &Params, g: &[f64; 2], dim: usize) -> [bool; 2] {
    let mut active = [false; 2];
    for k in 0..dim {
        // Descent direction is -g.
        active[k] = (s[k] <= patch.domain.lo[k] && g[k] > 0.0)
            || (s[k] >= patch.domain.hi[k] && g[k] < 0.0);
    }
    active
}

/// Solves `H d = -g` on the free components; `None` if not positive definite.
fn solve_free(h: &[[f64; 2]; 2], g: &[f64; 2], active: &[bool; 2], dim: usize) -> Option<[f64; 2]> {
    if dim == 1 || active[1] {
        if active[0] || h[0][0] <= 0.0 {
            return None;
        }
        return Some([-g[0] / h[0][0], 0.0]);
    }
    if active[0] {
        if h[1][1] <= 0.0 {
            return None;
        }
        return Some([0.0, -g[1] / h[1][1]]);
    }
    let m = Matrix2::new(h[0][0], h[0][1], h[1][0], h[1][1]);
    let chol = m.cholesky()?;
    let d = chol.solve(&Vector2::new(-g[0], -g[1]));
    Some([d[0], d[1]])
}
