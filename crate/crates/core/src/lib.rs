//! High-order curvilinear meshing and spectral vanishing viscosity toolkit.
//!
//! The crate covers two pipelines:
//!
//! * mesh curving: parametric boundary geometry ([`geometry`]), high-order
//!   meshes with isoparametric mappings ([`mesh`]), projection of a linear
//!   mesh onto the geometry ([`projection_curving`]) and variational
//!   untangling of the interior ([`variational_curving`]);
//! * stabilisation of continuous Galerkin discretisations: quadrature and
//!   dealiasing rules ([`polybasis`]), spectral vanishing viscosity kernels
//!   and operators ([`svv`]), dispersion/diffusion eigenanalysis
//!   ([`eigenanalysis`]) and a small advection solver reproducing the
//!   mesh-coarsening reflection experiment ([`demo_solver`]).

pub mod demo_solver;
pub mod eigenanalysis;
pub mod error;
pub mod geometry;
pub mod mesh;
pub mod polybasis;
pub mod projection_curving;
pub mod svv;
pub mod variational_curving;
pub mod vec3;

pub use error::{Error, Result};
