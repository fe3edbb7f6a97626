//! Projection of a linear mesh boundary onto its geometry.
//!
//! Boundary vertices are associated with the closest of the candidate
//! patches returned by the spatial index, snapped onto it unless the move is
//! too large or inverts a neighbouring element (such nodes go to the
//! exclusion set), and finally every boundary edge whose endpoints were both
//! snapped receives curved high-order nodes by projecting its straight
//! interpolation points onto the parent patch.

use std::collections::{BTreeMap, HashMap};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    auxiliary_triangulation, build_patch_index, project, AuxTriangulation, ParametricPatch, Params,
    Projection, SpatialIndex,
};
use crate::mesh::reference::unit_gll_nodes;
use crate::mesh::{BoundaryTag, ExclusionReason, HighOrderMesh, NodeInfo};
use crate::vec3::{self, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvingConfig {
    /// Snap rule (a): largest displacement relative to the mean incident edge length.
    pub max_rel_disp: f64,
    /// Auxiliary triangulation chord tolerance relative to each patch diagonal.
    pub chord_tol_rel: f64,
    /// Candidate patches kept per node.
    pub max_candidates: usize,
}

impl Default for CurvingConfig {
    fn default() -> Self {
        Self {
            max_rel_disp: 0.10,
            chord_tol_rel: 1e-3,
            max_candidates: 8,
        }
    }
}

/// Patches with their index and auxiliary triangulations.
#[derive(Debug, Clone)]
pub struct PatchSet {
    pub patches: Vec<ParametricPatch>,
    pub index: SpatialIndex,
    pub aux: Vec<AuxTriangulation>,
    by_id: HashMap<usize, usize>,
}

impl PatchSet {
    pub fn new(patches: Vec<ParametricPatch>, chord_tol_rel: f64) -> Result<Self> {
        if patches.is_empty() {
            return Err(Error::invalid("patch set is empty"));
        }
        let mut by_id = HashMap::new();
        for (k, p) in patches.iter().enumerate() {
            if by_id.insert(p.id, k).is_some() {
                return Err(Error::invalid(format!("duplicate patch id {}", p.id)));
            }
        }
        let aux = patches
            .iter()
            .map(|p| auxiliary_triangulation(p, chord_tol_rel * p.diagonal()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            index: build_patch_index(&patches),
            patches,
            aux,
            by_id,
        })
    }

    pub fn get(&self, id: usize) -> Option<&ParametricPatch> {
        self.by_id.get(&id).map(|&k| &self.patches[k])
    }

    /// Candidate patch ids for `point`, capped at `cap`.
    pub fn candidates(&self, point: Vec3, cap: usize) -> Vec<usize> {
        let mut c = self.index.query(point);
        if c.len() > cap {
            warn!("{} candidate patches at {point:?}; keeping the first {cap}", c.len());
            c.truncate(cap);
        }
        c
    }

    /// Projects `point` onto patch `id`, seeded from the nearest vertex of
    /// its auxiliary triangulation.
    pub fn project_seeded(&self, id: usize, point: Vec3) -> Result<Projection> {
        let k = *self
            .by_id
            .get(&id)
            .ok_or_else(|| Error::invalid(format!("unknown patch {id}")))?;
        let (_, seed) = self.aux[k].nearest_vertex(point);
        project(&self.patches[k], point, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Snapped,
    Excluded(ExclusionReason),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeAssociation {
    pub node: usize,
    pub patch: usize,
    pub params: Params,
    /// Projected position on the patch.
    pub point: Vec3,
    pub distance: f64,
    pub status: NodeStatus,
}

/// Vertices of boundary edges lying on geometry (farfield edges excluded),
/// ascending.
pub fn geometric_boundary_vertices(mesh: &HighOrderMesh) -> Vec<usize> {
    let mut v: Vec<usize> = mesh
        .boundary
        .iter()
        .filter(|b| b.tag != BoundaryTag::Farfield)
        .flat_map(|b| b.vertices)
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Associates every geometric boundary vertex with its closest candidate
/// patch (lowest id on ties). Projections run in parallel.
pub fn assign_parent_surfaces(
    mesh: &HighOrderMesh,
    set: &PatchSet,
    cfg: &CurvingConfig,
) -> Result<Vec<NodeAssociation>> {
    let nodes = geometric_boundary_vertices(mesh);
    let results: Vec<Option<NodeAssociation>> = nodes
        .par_iter()
        .map(|&n| closest_patch(set, mesh.nodes[n], cfg.max_candidates).map(|(id, p)| NodeAssociation {
            node: n,
            patch: id,
            params: p.params,
            point: p.point,
            distance: p.distance,
            status: NodeStatus::Snapped,
        }))
        .collect();
    let missing: Vec<usize> = nodes
        .iter()
        .zip(&results)
        .filter(|(_, r)| r.is_none())
        .map(|(&n, _)| n)
        .collect();
    if !missing.is_empty() {
        return Err(Error::UnassignedNodes { nodes: missing });
    }
    Ok(results.into_iter().flatten().collect())
}

fn closest_patch(set: &PatchSet, x: Vec3, cap: usize) -> Option<(usize, Projection)> {
    let mut best: Option<(usize, Projection)> = None;
    for id in set.candidates(x, cap) {
        match set.project_seeded(id, x) {
            Ok(p) => {
                let better = match &best {
                    None => true,
                    Some((_, b)) => p.distance < b.distance - 1e-12 * (1.0 + b.distance),
                };
                if better {
                    best = Some((id, p));
                }
            }
            Err(e) => warn!("projection of {x:?} onto patch {id} failed: {e}"),
        }
    }
    best
}

/// One entry of the exclusion report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExclusionRecord {
    pub node: usize,
    pub reason: ExclusionReason,
    /// Projection distance over the mean incident edge length.
    pub displacement_ratio: f64,
}

/// Moves associated nodes onto their patches in ascending node order.
///
/// A node is excluded instead when (a) its displacement exceeds
/// `max_rel_disp` times the mean length of its incident edges, or (b) the
/// move turns a valid incident element invalid. Rule (a) is checked first.
pub fn snap_nodes(
    mesh: &HighOrderMesh,
    associations: &[NodeAssociation],
    max_rel_disp: f64,
) -> Result<(HighOrderMesh, Vec<NodeAssociation>, Vec<ExclusionRecord>)> {
    let mut out = mesh.clone();
    let lengths = mesh.mean_incident_edge_length();
    let node_elements = mesh.node_elements();
    let mut assoc: Vec<NodeAssociation> = associations.to_vec();
    assoc.sort_by_key(|a| a.node);
    let mut report = Vec::new();
    for a in assoc.iter_mut() {
        let len = lengths.get(&a.node).copied().unwrap_or(0.0);
        let ratio = if len > 0.0 { a.distance / len } else { 0.0 };
        let mut status = NodeStatus::Snapped;
        if ratio > max_rel_disp {
            status = NodeStatus::Excluded(ExclusionReason::Displacement);
        } else {
            let incident = &node_elements[a.node];
            let before: Vec<bool> = incident
                .iter()
                .map(|&e| Ok(out.element_mapping(e)?.check_validity().is_valid))
                .collect::<Result<_>>()?;
            let old = out.nodes[a.node];
            out.nodes[a.node] = a.point;
            for (&e, &was_valid) in incident.iter().zip(&before) {
                if was_valid && !out.element_mapping(e)?.check_validity().is_valid {
                    out.nodes[a.node] = old;
                    status = NodeStatus::Excluded(ExclusionReason::Inversion);
                    break;
                }
            }
        }
        a.status = status;
        let excluded = match status {
            NodeStatus::Excluded(r) => {
                report.push(ExclusionRecord {
                    node: a.node,
                    reason: r,
                    displacement_ratio: ratio,
                });
                Some(r)
            }
            NodeStatus::Snapped => None,
        };
        out.node_info.insert(
            a.node,
            NodeInfo {
                patch: Some(a.patch),
                params: Some(a.params),
                excluded,
            },
        );
    }
    Ok((out, assoc, report))
}

/// A boundary edge left straight because its curved nodes could not be placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemotedEdge {
    pub vertices: [usize; 2],
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CurveReport {
    /// Boundary edges that received curved nodes.
    pub curved: usize,
    /// Edges kept straight because an endpoint is excluded.
    pub straight_excluded: usize,
    /// Edges demoted after a projection failure.
    pub demoted: Vec<DemotedEdge>,
}

/// Raises the mesh to order `p` and curves every geometric boundary edge
/// whose endpoints are both snapped.
///
/// The parent of an edge is chosen among the patches both endpoints lie on:
/// the edge's tag when it qualifies, otherwise the qualifying patch closest
/// to the chord midpoint (lowest id on ties). Interior edges stay straight.
pub fn curve_boundary(mesh: &HighOrderMesh, set: &PatchSet, p: usize) -> Result<(HighOrderMesh, CurveReport)> {
    let (mut out, vertex_map) = mesh.elevate_with_map(p)?;
    let mut report = CurveReport::default();
    let t = unit_gll_nodes(p);
    let scale = mesh.characteristic_length().max(1e-300);
    let on_tol = 1e-8 * scale;
    for b in mesh.boundary.clone() {
        if b.tag == BoundaryTag::Farfield {
            continue;
        }
        let edge_nodes = match out.edge_nodes((vertex_map[&b.vertices[0]], vertex_map[&b.vertices[1]])) {
            Some(n) => n,
            None => continue,
        };
        let (va, vb) = (edge_nodes[0], edge_nodes[p]);
        let excluded = |n: usize| out.node_info.get(&n).is_some_and(|i| i.excluded.is_some());
        let snapped = |n: usize| out.node_info.get(&n).is_some_and(|i| i.excluded.is_none() && i.patch.is_some());
        if excluded(va) || excluded(vb) {
            report.straight_excluded += 1;
            continue;
        }
        if !(snapped(va) && snapped(vb)) {
            continue;
        }
        let (xa, xb) = (out.nodes[va], out.nodes[vb]);
        let parent = match edge_parent(set, b.tag, xa, xb, on_tol) {
            Some(x) => x,
            None => {
                report.demoted.push(DemotedEdge {
                    vertices: b.vertices,
                    reason: "no patch contains both endpoints".into(),
                });
                continue;
            }
        };
        match place_edge_nodes(set, parent, xa, xb, &t) {
            Ok(placed) => {
                for (m, (x, s)) in placed.into_iter().enumerate() {
                    let n = edge_nodes[m + 1];
                    out.nodes[n] = x;
                    out.node_info.insert(
                        n,
                        NodeInfo {
                            patch: Some(parent.0),
                            params: Some(s),
                            excluded: None,
                        },
                    );
                }
                report.curved += 1;
            }
            Err(e) => {
                warn!("edge {:?} left straight: {e}", b.vertices);
                report.demoted.push(DemotedEdge {
                    vertices: b.vertices,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok((out, report))
}

/// Parent patch and endpoint parameters for an edge.
fn edge_parent(set: &PatchSet, tag: BoundaryTag, xa: Vec3, xb: Vec3, tol: f64) -> Option<(usize, [Params; 2])> {
    let mid = vec3::lerp(xa, xb, 0.5);
    let mut ids = set.index.query(xa);
    ids.retain(|id| set.index.query(xb).contains(id));
    let mut qualifying: BTreeMap<usize, ([Params; 2], f64)> = BTreeMap::new();
    for id in ids {
        let (Ok(pa), Ok(pb)) = (set.project_seeded(id, xa), set.project_seeded(id, xb)) else {
            continue;
        };
        if pa.distance <= tol && pb.distance <= tol {
            let dm = set.project_seeded(id, mid).map(|p| p.distance).unwrap_or(f64::INFINITY);
            qualifying.insert(id, ([pa.params, pb.params], dm));
        }
    }
    if let BoundaryTag::Patch(id) = tag {
        if let Some((s, _)) = qualifying.get(&id) {
            return Some((id, *s));
        }
    }
    let mut best: Option<(usize, [Params; 2], f64)> = None;
    for (id, (s, d)) in qualifying {
        if best.as_ref().map_or(true, |b| d < b.2 - 1e-12 * (1.0 + b.2)) {
            best = Some((id, s, d));
        }
    }
    best.map(|(id, s, _)| (id, s))
}

/// Projects the interior interpolation points of chord `xa`-`xb` onto the
/// parent, each seeded by the interpolated endpoint parameters.
fn place_edge_nodes(
    set: &PatchSet,
    parent: (usize, [Params; 2]),
    xa: Vec3,
    xb: Vec3,
    t: &[f64],
) -> Result<Vec<(Vec3, Params)>> {
    let patch = set.get(parent.0).expect("parent exists");
    let [sa, sb] = parent.1;
    let dim = patch.dimension();
    let mut out = Vec::with_capacity(t.len().saturating_sub(2));
    for &tm in &t[1..t.len() - 1] {
        let x = vec3::lerp(xa, xb, tm);
        let seed = patch
            .domain
            .clamp([sa[0] + tm * (sb[0] - sa[0]), sa[1] + tm * (sb[1] - sa[1])], dim);
        let p = project(patch, x, seed)?;
        out.push((p.point, p.params));
    }
    Ok(out)
}

/// Output of the full projection pipeline.
#[derive(Debug, Clone)]
pub struct ProjectionOutcome {
    pub mesh: HighOrderMesh,
    pub associations: Vec<NodeAssociation>,
    pub exclusions: Vec<ExclusionRecord>,
    pub curve: CurveReport,
}

/// Associate, snap and curve a linear mesh at order `p`.
pub fn project_mesh(mesh: &HighOrderMesh, set: &PatchSet, p: usize, cfg: &CurvingConfig) -> Result<ProjectionOutcome> {
    let assoc = assign_parent_surfaces(mesh, set, cfg)?;
    let (snapped, associations, exclusions) = snap_nodes(mesh, &assoc, cfg.max_rel_disp)?;
    let (curved, curve) = curve_boundary(&snapped, set, p)?;
    Ok(ProjectionOutcome {
        mesh: curved,
        associations,
        exclusions,
        curve,
    })
}

/// Exclusion report as pretty JSON.
pub fn exclusion_report_json(records: &[ExclusionRecord]) -> String {
    serde_json::to_string_pretty(records).expect("records serialise")
}
