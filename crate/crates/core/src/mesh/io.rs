use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BoundaryEdge, Element, HighOrderMesh, NodeInfo};
use crate::error::{Error, Result};
use crate::vec3::Vec3;

pub const MESH_FORMAT: &str = "hofem-mesh";
const MESH_VERSION: u32 = 1;
/// Declares the element node ordering used by the file.
pub const NODE_ORDERING: &str = "vertices-edges-interior/gll";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeInfoRecord {
    pub node: usize,
    #[serde(flatten)]
    pub info: NodeInfo,
}

/// On-disk layout of a mesh.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshFile {
    pub format: String,
    pub version: u32,
    pub node_ordering: String,
    pub nodes: Vec<Vec3>,
    pub elements: Vec<Element>,
    #[serde(default)]
    pub boundary: Vec<BoundaryEdge>,
    #[serde(default)]
    pub node_info: Vec<NodeInfoRecord>,
}

impl From<&HighOrderMesh> for MeshFile {
    fn from(m: &HighOrderMesh) -> Self {
        Self {
            format: MESH_FORMAT.into(),
            version: MESH_VERSION,
            node_ordering: NODE_ORDERING.into(),
            nodes: m.nodes.clone(),
            elements: m.elements.clone(),
            boundary: m.boundary.clone(),
            node_info: m
                .node_info
                .iter()
                .map(|(&node, &info)| NodeInfoRecord { node, info })
                .collect(),
        }
    }
}

pub(crate) fn parse_mesh(text: &str, context: &str) -> Result<HighOrderMesh> {
    let file: MeshFile = serde_json::from_str(text).map_err(|e| {
        Error::parse(
            format!("{context}:{}:{}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    if file.format != MESH_FORMAT {
        return Err(Error::parse(context, format!("unexpected format '{}'", file.format)));
    }
    if file.version != MESH_VERSION {
        return Err(Error::parse(context, format!("unsupported version {}", file.version)));
    }
    if file.node_ordering != NODE_ORDERING {
        return Err(Error::parse(
            context,
            format!("unsupported node ordering '{}'", file.node_ordering),
        ));
    }
    let mut node_info = BTreeMap::new();
    for (k, r) in file.node_info.into_iter().enumerate() {
        if node_info.insert(r.node, r.info).is_some() {
            return Err(Error::parse(
                format!("{context}: node_info[{k}]"),
                format!("duplicate entry for node {}", r.node),
            ));
        }
    }
    let mesh = HighOrderMesh {
        nodes: file.nodes,
        elements: file.elements,
        boundary: file.boundary,
        node_info,
    };
    mesh.validate().map_err(|e| Error::parse(context, e.to_string()))?;
    Ok(mesh)
}

/// Reads a mesh; `.msh` files go through the interchange reader.
pub fn read_mesh(path: impl AsRef<Path>) -> Result<HighOrderMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let context = path.display().to_string();
    if path.extension().is_some_and(|e| e == "msh") {
        super::gmsh::parse_gmsh(&text, &context)
    } else {
        parse_mesh(&text, &context)
    }
}

pub fn write_mesh(path: impl AsRef<Path>, mesh: &HighOrderMesh) -> Result<()> {
    let text = serde_json::to_string_pretty(&MeshFile::from(mesh)).expect("mesh serialises");
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{fixtures, ExclusionReason};
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let (mut mesh, _) = fixtures::quarter_annulus(&fixtures::AnnulusConfig::default()).unwrap();
        mesh.node_info.insert(
            3,
            NodeInfo {
                patch: Some(1),
                params: Some([0.25, 0.0]),
                excluded: Some(ExclusionReason::Inversion),
            },
        );
        let mesh = {
            let mut m = mesh.elevate(3).unwrap();
            m.nodes[7][0] += 1e-3 / 3.0;
            m.node_info = mesh.node_info.clone();
            m
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        write_mesh(&path, &mesh).unwrap();
        let back = read_mesh(&path).unwrap();
        assert_eq!(back, mesh);
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let (mesh, _) = fixtures::quarter_annulus(&fixtures::AnnulusConfig::default()).unwrap();
        let text = serde_json::to_string_pretty(&MeshFile::from(&mesh)).unwrap();
        let cut = &text[..text.len() / 2];
        match parse_mesh(cut, "cut.json") {
            Err(Error::Parse { context, .. }) => assert!(context.starts_with("cut.json:")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_ordering_rejected() {
        let (mesh, _) = fixtures::quarter_annulus(&fixtures::AnnulusConfig::default()).unwrap();
        let mut file = MeshFile::from(&mesh);
        file.node_ordering = "gmsh".into();
        let text = serde_json::to_string(&file).unwrap();
        assert!(matches!(parse_mesh(&text, "x"), Err(Error::Parse { .. })));
    }
}
