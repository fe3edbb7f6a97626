//! Generated test meshes.
//!
//! The quarter annulus `1 <= r <= 2, 0 <= theta <= pi/2` is meshed with a
//! thin first layer against the inner arc and a coarse angular division, so
//! that bending the inner edges onto the arc at order 4 pushes them through
//! the first-layer elements. The default configuration is bundled as
//! `assets/quarter_annulus.mesh.json` and `assets/quarter_annulus.geometry.json`.

use std::f64::consts::FRAC_PI_2;

use super::{BoundaryEdge, BoundaryTag, ElementShape, HighOrderMesh, MeshBuilder};
use crate::error::{Error, Result};
use crate::geometry::{ParametricPatch, Shape};

/// Element count of the bundled quarter-annulus mesh.
pub const ANNULUS_ELEMENTS: usize = 30;
/// Node count of the bundled quarter-annulus mesh (linear, so vertices only).
pub const ANNULUS_NODES: usize = 24;

/// Patch ids of the quarter-annulus geometry.
pub const INNER_ARC: usize = 0;
pub const OUTER_ARC: usize = 1;
pub const BOTTOM_SIDE: usize = 2;
pub const LEFT_SIDE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct AnnulusConfig {
    /// Radii of the vertex rings, inner to outer.
    pub radii: Vec<f64>,
    /// Angular divisions.
    pub divisions: usize,
    pub shape: ElementShape,
}

impl Default for AnnulusConfig {
    fn default() -> Self {
        Self {
            radii: vec![1.0, 1.025, 1.08, 1.2, 1.45, 2.0],
            divisions: 3,
            shape: ElementShape::Triangle,
        }
    }
}

/// Linear quarter-annulus mesh and its boundary geometry.
pub fn quarter_annulus(cfg: &AnnulusConfig) -> Result<(HighOrderMesh, Vec<ParametricPatch>)> {
    let radii = &cfg.radii;
    if radii.len() < 2 || cfg.divisions < 1 || radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0.0 {
        return Err(Error::invalid("annulus needs increasing positive radii and at least one division"));
    }
    cfg.shape.require_supported()?;
    let nr = radii.len();
    let nt = cfg.divisions;
    let id = |i: usize, j: usize| j * nr + i;
    let mut builder = MeshBuilder::new(1);
    for j in 0..=nt {
        let theta = FRAC_PI_2 * j as f64 / nt as f64;
        let (s, c) = theta.sin_cos();
        for (i, r) in radii.iter().enumerate() {
            // Exact axis coordinates on the straight sides.
            let x = if j == nt { 0.0 } else { r * c };
            let y = if j == 0 { 0.0 } else { r * s };
            builder.vertex(id(i, j), [x, y, 0.0]);
        }
    }
    let pos = |v: &[usize], b: &MeshBuilder| v.iter().map(|&k| b.nodes[b.vertex_ids[&k]]).collect::<Vec<_>>();
    for j in 0..nt {
        for i in 0..nr - 1 {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            match cfg.shape {
                ElementShape::Triangle => {
                    for tri in [[a, b, c], [a, c, d]] {
                        let x = pos(&tri, &builder);
                        builder.element(ElementShape::Triangle, &tri, &x)?;
                    }
                }
                _ => {
                    let quad = [a, b, c, d];
                    let x = pos(&quad, &builder);
                    builder.element(ElementShape::Quadrilateral, &quad, &x)?;
                }
            }
        }
    }
    let mut boundary = Vec::new();
    for j in 0..nt {
        boundary.push(BoundaryEdge {
            vertices: [id(0, j + 1), id(0, j)],
            tag: BoundaryTag::Patch(INNER_ARC),
        });
        boundary.push(BoundaryEdge {
            vertices: [id(nr - 1, j), id(nr - 1, j + 1)],
            tag: BoundaryTag::Patch(OUTER_ARC),
        });
    }
    for i in 0..nr - 1 {
        boundary.push(BoundaryEdge {
            vertices: [id(i, 0), id(i + 1, 0)],
            tag: BoundaryTag::Patch(BOTTOM_SIDE),
        });
        boundary.push(BoundaryEdge {
            vertices: [id(i + 1, nt), id(i, nt)],
            tag: BoundaryTag::Patch(LEFT_SIDE),
        });
    }
    let (mesh, _) = builder.finish(&boundary)?;
    Ok((mesh, annulus_geometry(radii[0], radii[nr - 1])?))
}

/// Inner and outer arcs plus the two straight sides.
pub fn annulus_geometry(r_inner: f64, r_outer: f64) -> Result<Vec<ParametricPatch>> {
    let arc = |id, r| {
        ParametricPatch::curve(
            id,
            Shape::CircularArc {
                center: [0.0; 3],
                radius: r,
                e1: [1.0, 0.0, 0.0],
                e2: [0.0, 1.0, 0.0],
            },
            0.0,
            FRAC_PI_2,
        )
    };
    Ok(vec![
        arc(INNER_ARC, r_inner)?,
        arc(OUTER_ARC, r_outer)?,
        ParametricPatch::curve(
            BOTTOM_SIDE,
            Shape::Line {
                start: [r_inner, 0.0, 0.0],
                end: [r_outer, 0.0, 0.0],
            },
            0.0,
            1.0,
        )?,
        ParametricPatch::curve(
            LEFT_SIDE,
            Shape::Line {
                start: [0.0, r_inner, 0.0],
                end: [0.0, r_outer, 0.0],
            },
            0.0,
            1.0,
        )?,
    ])
}

/// Open tube of radius 1 and height 2 split into `sectors` angular by
/// `rings` axial cylinder patches, numbered ring by ring.
pub fn segmented_tube(sectors: usize, rings: usize) -> Result<Vec<ParametricPatch>> {
    if sectors == 0 || rings == 0 {
        return Err(Error::invalid("tube needs at least one sector and one ring"));
    }
    let dtheta = 2.0 * std::f64::consts::PI / sectors as f64;
    let dz = 2.0 / rings as f64;
    let mut patches = Vec::with_capacity(sectors * rings);
    for r in 0..rings {
        for k in 0..sectors {
            patches.push(ParametricPatch::surface(
                r * sectors + k,
                Shape::Cylinder {
                    origin: [0.0; 3],
                    axis: [0.0, 0.0, 1.0],
                    radius: 1.0,
                    e1: [1.0, 0.0, 0.0],
                },
                [k as f64 * dtheta, r as f64 * dz],
                [(k + 1) as f64 * dtheta, (r + 1) as f64 * dz],
            )?);
        }
    }
    Ok(patches)
}

/// Bundled multi-patch geometry: [`segmented_tube`] with 8 sectors and 2 rings.
pub const TUBE_GEOMETRY_JSON: &str = include_str!("../../assets/segmented_tube.geometry.json");

pub fn bundled_tube() -> Result<Vec<ParametricPatch>> {
    crate::geometry::parse_geometry(TUBE_GEOMETRY_JSON, "segmented_tube.geometry.json")
}

/// Bundled quarter-annulus mesh as JSON text.
pub const ANNULUS_MESH_JSON: &str = include_str!("../../assets/quarter_annulus.mesh.json");
/// Bundled quarter-annulus geometry as JSON text.
pub const ANNULUS_GEOMETRY_JSON: &str = include_str!("../../assets/quarter_annulus.geometry.json");

/// Loads the bundled quarter-annulus mesh and geometry.
pub fn bundled_annulus() -> Result<(HighOrderMesh, Vec<ParametricPatch>)> {
    let mesh = super::io::parse_mesh(ANNULUS_MESH_JSON, "quarter_annulus.mesh.json")?;
    let patches = crate::geometry::parse_geometry(ANNULUS_GEOMETRY_JSON, "quarter_annulus.geometry.json")?;
    Ok((mesh, patches))
}

/// Writes the bundled meshes and geometries into `dir`.
pub fn write_annulus_assets(dir: &std::path::Path) -> Result<()> {
    let (mesh, patches) = quarter_annulus(&AnnulusConfig::default())?;
    super::write_mesh(dir.join("quarter_annulus.mesh.json"), &mesh)?;
    crate::geometry::write_geometry(dir.join("quarter_annulus.geometry.json"), &patches)?;
    crate::geometry::write_geometry(dir.join("segmented_tube.geometry.json"), &segmented_tube(8, 2)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    #[ignore = "rewrites the bundled assets"]
    fn regenerate_assets() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
        write_annulus_assets(&dir).unwrap();
    }

    #[test]
    fn bundled_asset_matches_generator_and_counts() {
        let (mesh, patches) = bundled_annulus().unwrap();
        assert_eq!(mesh.elements.len(), ANNULUS_ELEMENTS);
        assert_eq!(mesh.nodes.len(), ANNULUS_NODES);
        let (generated, geo) = quarter_annulus(&AnnulusConfig::default()).unwrap();
        assert_eq!(mesh, generated);
        assert_eq!(patches, geo);
        assert_eq!(mesh.invalid_element_count().unwrap(), 0);
        assert_eq!(bundled_tube().unwrap(), segmented_tube(8, 2).unwrap());
    }

    #[test]
    fn quad_variant_is_valid() {
        let cfg = AnnulusConfig {
            shape: ElementShape::Quadrilateral,
            ..Default::default()
        };
        let (mesh, _) = quarter_annulus(&cfg).unwrap();
        assert_eq!(mesh.elements.len(), 15);
        assert_eq!(mesh.invalid_element_count().unwrap(), 0);
    }
}
