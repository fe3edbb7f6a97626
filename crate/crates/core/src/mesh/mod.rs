//! High-order meshes of triangles and quadrilaterals.
//!
//! A mesh stores one coordinate array holding vertex and high-order nodes;
//! each element lists its nodes in the reference ordering documented in
//! [`reference`]. Shared edges reference the same node indices, so the
//! interior nodes of an edge appear in opposite orders in the two elements
//! that share it.

pub mod fixtures;
mod gmsh;
mod io;
mod mapping;
pub mod reference;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use gmsh::read_gmsh;
pub use io::{read_mesh, write_mesh, MeshFile, MESH_FORMAT, NODE_ORDERING};
pub use mapping::{
    ideal_map, jacobian, map_physical, shared_basis, validity, validity_rule, ElementMapping,
    IdealMapping, Jacobian, Validity,
};
pub use reference::{ElementQuadrature, ElementShape, NodalBasis, Xi};

use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::vec3::{self, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub shape: ElementShape,
    pub order: usize,
    pub nodes: Vec<usize>,
}

impl Element {
    pub fn vertices(&self) -> &[usize] {
        &self.nodes[..self.shape.vertex_count()]
    }

    pub fn edge_count(&self) -> usize {
        self.shape.vertex_count()
    }

    /// Global nodes of local edge `edge`, start vertex to end vertex.
    pub fn edge_nodes(&self, edge: usize) -> Vec<usize> {
        reference::edge_local_nodes(self.shape, self.order, edge)
            .into_iter()
            .map(|l| self.nodes[l])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    /// Boundary that lies on geometry patch `id`.
    Patch(usize),
    /// Artificial outer boundary; never curved.
    Farfield,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEdge {
    /// End vertices of the edge.
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Displacement,
    Inversion,
}

/// Optional per-node geometric association.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NodeInfo {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded: Option<ExclusionReason>,
}

/// Elements sharing an edge, keyed by the sorted vertex pair.
#[derive(Debug, Clone, Default)]
pub struct EdgeUse {
    /// `(element, local edge)` pairs.
    pub elements: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HighOrderMesh {
    pub nodes: Vec<Vec3>,
    pub elements: Vec<Element>,
    pub boundary: Vec<BoundaryEdge>,
    pub node_info: BTreeMap<usize, NodeInfo>,
}

impl HighOrderMesh {
    /// Builds and validates a mesh.
    pub fn new(nodes: Vec<Vec3>, elements: Vec<Element>, boundary: Vec<BoundaryEdge>) -> Result<Self> {
        let mesh = Self {
            nodes,
            elements,
            boundary,
            node_info: BTreeMap::new(),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Checks index ranges, node counts, conformity of shared edges and that
    /// every boundary edge is an element side used exactly once.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        for (e, el) in self.elements.iter().enumerate() {
            el.shape.require_supported()?;
            if el.order < 1 {
                return Err(Error::invalid(format!("element {e}: order must be at least 1")));
            }
            if el.nodes.len() != el.shape.node_count(el.order) {
                return Err(Error::invalid(format!(
                    "element {e}: expected {} nodes, found {}",
                    el.shape.node_count(el.order),
                    el.nodes.len()
                )));
            }
            if let Some(&bad) = el.nodes.iter().find(|&&i| i >= n) {
                return Err(Error::invalid(format!("element {e}: node index {bad} out of range")));
            }
        }
        for (key, edge) in self.edges() {
            if edge.elements.len() > 2 {
                return Err(Error::invalid(format!(
                    "edge {key:?} is shared by {} elements",
                    edge.elements.len()
                )));
            }
            if let [(a, ea), (b, eb)] = edge.elements[..] {
                let na = self.elements[a].edge_nodes(ea);
                let mut nb = self.elements[b].edge_nodes(eb);
                nb.reverse();
                if na != nb {
                    return Err(Error::invalid(format!(
                        "elements {a} and {b} do not share identical nodes on edge {key:?}"
                    )));
                }
            }
        }
        let edges = self.edges();
        for (k, b) in self.boundary.iter().enumerate() {
            let key = edge_key(b.vertices[0], b.vertices[1]);
            match edges.get(&key) {
                Some(u) if u.elements.len() == 1 => {}
                Some(_) => {
                    return Err(Error::invalid(format!("boundary edge {k} {key:?} is an interior edge")))
                }
                None => {
                    return Err(Error::invalid(format!("boundary edge {k} {key:?} is not an element side")))
                }
            }
        }
        for &node in self.node_info.keys() {
            if node >= n {
                return Err(Error::invalid(format!("node info for missing node {node}")));
            }
        }
        Ok(())
    }

    pub fn element_mapping(&self, e: usize) -> Result<ElementMapping> {
        let el = &self.elements[e];
        ElementMapping::new(el.shape, el.order, el.nodes.iter().map(|&i| self.nodes[i]).collect())
    }

    /// Every edge with the elements using it, keyed by sorted vertex pair.
    pub fn edges(&self) -> BTreeMap<(usize, usize), EdgeUse> {
        let mut out: BTreeMap<(usize, usize), EdgeUse> = BTreeMap::new();
        for (e, el) in self.elements.iter().enumerate() {
            let v = el.vertices();
            for k in 0..el.edge_count() {
                let key = edge_key(v[k], v[(k + 1) % v.len()]);
                out.entry(key).or_default().elements.push((e, k));
            }
        }
        out
    }

    /// All nodes of edge `key` ordered from `key.0` to `key.1`.
    pub fn edge_nodes(&self, key: (usize, usize)) -> Option<Vec<usize>> {
        let edges = self.edges();
        let &(e, k) = edges.get(&edge_key(key.0, key.1))?.elements.first()?;
        let mut nodes = self.elements[e].edge_nodes(k);
        if nodes[0] != key.0 {
            nodes.reverse();
        }
        Some(nodes)
    }

    /// Elements touching each node.
    pub fn node_elements(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (e, el) in self.elements.iter().enumerate() {
            for &n in &el.nodes {
                if out[n].last() != Some(&e) {
                    out[n].push(e);
                }
            }
        }
        out
    }

    /// Vertex node indices, ascending.
    pub fn vertex_nodes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.elements.iter().flat_map(|e| e.vertices().iter().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Every node lying on a tagged boundary edge (vertices and edge nodes).
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for b in &self.boundary {
            if let Some(nodes) = self.edge_nodes((b.vertices[0], b.vertices[1])) {
                out.extend(nodes);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Edges used by exactly one element, as sorted vertex pairs.
    pub fn topological_boundary(&self) -> Vec<(usize, usize)> {
        self.edges()
            .into_iter()
            .filter(|(_, u)| u.elements.len() == 1)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn bounding_box(&self) -> Aabb {
        Aabb::from_points(self.nodes.iter().copied())
    }

    /// Bounding-box diagonal, used as the characteristic length.
    pub fn characteristic_length(&self) -> f64 {
        vec3::norm(self.bounding_box().extent())
    }

    /// Uniform element order, if all elements share one.
    pub fn order(&self) -> Option<usize> {
        let p = self.elements.first()?.order;
        self.elements.iter().all(|e| e.order == p).then_some(p)
    }

    /// Mean length (vertex to vertex) of the edges incident to each vertex.
    pub fn mean_incident_edge_length(&self) -> HashMap<usize, f64> {
        let mut acc: HashMap<usize, (f64, usize)> = HashMap::new();
        for &(a, b) in self.edges().keys() {
            let l = vec3::dist(self.nodes[a], self.nodes[b]);
            for n in [a, b] {
                let s = acc.entry(n).or_insert((0.0, 0));
                s.0 += l;
                s.1 += 1;
            }
        }
        acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect()
    }

    /// Validity of every element over its default sampling set.
    pub fn element_validity(&self) -> Result<Vec<Validity>> {
        (0..self.elements.len())
            .map(|e| Ok(self.element_mapping(e)?.check_validity()))
            .collect()
    }

    pub fn invalid_element_count(&self) -> Result<usize> {
        Ok(self.element_validity()?.iter().filter(|v| !v.is_valid).count())
    }

    /// Copy of the mesh at order `p` with straight edges: every new node is
    /// placed by the current isoparametric map of its element.
    pub fn elevate(&self, p: usize) -> Result<HighOrderMesh> {
        Ok(self.elevate_with_map(p)?.0)
    }

    /// Like [`elevate`](Self::elevate), also returning the map from old to
    /// new vertex indices.
    pub fn elevate_with_map(&self, p: usize) -> Result<(HighOrderMesh, BTreeMap<usize, usize>)> {
        let mut builder = MeshBuilder::new(p);
        for v in self.vertex_nodes() {
            builder.vertex(v, self.nodes[v]);
        }
        for e in 0..self.elements.len() {
            let el = &self.elements[e];
            let map = self.element_mapping(e)?;
            let positions = reference::reference_nodes(el.shape, p)
                .into_iter()
                .map(|xi| map.map_physical(xi))
                .collect::<Result<Vec<_>>>()?;
            builder.element(el.shape, el.vertices(), &positions)?;
        }
        let (mut mesh, vertex_map) = builder.finish(&self.boundary)?;
        for (&n, info) in &self.node_info {
            if let Some(&m) = vertex_map.get(&n) {
                mesh.node_info.insert(m, *info);
            }
        }
        Ok((mesh, vertex_map))
    }
}

pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Assembles a conforming order-`p` mesh from per-element node positions.
///
/// Vertices are keyed by caller ids; the first element to use an edge fixes
/// the positions of its interior nodes.
pub(crate) struct MeshBuilder {
    order: usize,
    nodes: Vec<Vec3>,
    vertex_ids: BTreeMap<usize, usize>,
    edges: HashMap<(usize, usize), Vec<usize>>,
    elements: Vec<Element>,
}

impl MeshBuilder {
    pub(crate) fn new(order: usize) -> Self {
        Self {
            order,
            nodes: Vec::new(),
            vertex_ids: BTreeMap::new(),
            edges: HashMap::new(),
            elements: Vec::new(),
        }
    }

    pub(crate) fn vertex(&mut self, id: usize, x: Vec3) {
        let n = self.nodes.len();
        if let std::collections::btree_map::Entry::Vacant(v) = self.vertex_ids.entry(id) {
            v.insert(n);
            self.nodes.push(x);
        }
    }

    /// Adds an element from caller vertex ids and the positions of all its
    /// reference nodes.
    pub(crate) fn element(&mut self, shape: ElementShape, vertex_ids: &[usize], positions: &[Vec3]) -> Result<()> {
        let p = self.order;
        let nv = shape.vertex_count();
        if positions.len() != shape.node_count(p) || vertex_ids.len() != nv {
            return Err(Error::invalid("element node count does not match its shape"));
        }
        let mut nodes = Vec::with_capacity(positions.len());
        for &v in vertex_ids {
            let n = *self
                .vertex_ids
                .get(&v)
                .ok_or_else(|| Error::invalid(format!("unknown vertex {v}")))?;
            nodes.push(n);
        }
        for k in 0..nv {
            let (a, b) = (nodes[k], nodes[(k + 1) % nv]);
            let local: Vec<usize> = (0..p - 1).map(|m| nv + k * (p - 1) + m).collect();
            let key = edge_key(a, b);
            let ids = match self.edges.get(&key) {
                Some(ids) => ids.clone(),
                None => {
                    let mut ids = Vec::with_capacity(p - 1);
                    // Stored from the lower to the higher vertex.
                    let ordered: Vec<usize> = if a < b {
                        local.clone()
                    } else {
                        local.iter().rev().copied().collect()
                    };
                    for l in ordered {
                        ids.push(self.nodes.len());
                        self.nodes.push(positions[l]);
                    }
                    self.edges.insert(key, ids.clone());
                    ids
                }
            };
            if a < b {
                nodes.extend(ids);
            } else {
                nodes.extend(ids.into_iter().rev());
            }
        }
        for x in &positions[nodes.len()..] {
            nodes.push(self.nodes.len());
            self.nodes.push(*x);
        }
        self.elements.push(Element {
            shape,
            order: p,
            nodes,
        });
        Ok(())
    }

    /// Finishes the mesh; `boundary` refers to caller vertex ids. Returns the
    /// map from caller ids to node indices.
    pub(crate) fn finish(self, boundary: &[BoundaryEdge]) -> Result<(HighOrderMesh, BTreeMap<usize, usize>)> {
        let mut edges = Vec::with_capacity(boundary.len());
        for b in boundary {
            let map = |v: usize| {
                self.vertex_ids
                    .get(&v)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("boundary edge uses unknown vertex {v}")))
            };
            edges.push(BoundaryEdge {
                vertices: [map(b.vertices[0])?, map(b.vertices[1])?],
                tag: b.tag,
            });
        }
        let mesh = HighOrderMesh::new(self.nodes, self.elements, edges)?;
        Ok((mesh, self.vertex_ids))
    }
}
