use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamDomain, ParametricPatch, Shape};
use crate::error::{Error, Result};

pub const GEOMETRY_FORMAT: &str = "hofem-geometry";
pub const GEOMETRY_VERSION: u32 = 1;

/// On-disk form of a patch: `{id, kind, parameters, domain}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct RawPatch {
    id: usize,
    #[serde(flatten)]
    shape: Shape,
    domain: Vec<[f64; 2]>,
}

impl TryFrom<RawPatch> for ParametricPatch {
    type Error = Error;

    fn try_from(raw: RawPatch) -> Result<Self> {
        let dim = raw.shape.dimension();
        if raw.domain.len() != dim {
            return Err(Error::invalid(format!(
                "patch {}: expected {dim} parameter interval(s), got {}",
                raw.id,
                raw.domain.len()
            )));
        }
        let mut domain = ParamDomain {
            lo: [0.0; 2],
            hi: [0.0; 2],
        };
        for (k, [lo, hi]) in raw.domain.iter().enumerate() {
            domain.lo[k] = *lo;
            domain.hi[k] = *hi;
        }
        ParametricPatch::new(raw.id, raw.shape, domain)
    }
}

impl From<ParametricPatch> for RawPatch {
    fn from(p: ParametricPatch) -> Self {
        let dim = p.dimension();
        RawPatch {
            id: p.id,
            domain: (0..dim).map(|k| [p.domain.lo[k], p.domain.hi[k]]).collect(),
            shape: p.shape,
        }
    }
}

/// Geometry file: a versioned list of patches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometryFile {
    pub format: String,
    pub version: u32,
    pub patches: Vec<ParametricPatch>,
}

impl GeometryFile {
    pub fn new(patches: Vec<ParametricPatch>) -> Self {
        Self {
            format: GEOMETRY_FORMAT.to_string(),
            version: GEOMETRY_VERSION,
            patches,
        }
    }
}

pub fn parse_geometry(text: &str, context: &str) -> Result<Vec<ParametricPatch>> {
    let file: GeometryFile = serde_json::from_str(text).map_err(|e| {
        Error::parse(
            format!("{context}:{}:{}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    if file.format != GEOMETRY_FORMAT {
        return Err(Error::parse(context, format!("unexpected format tag '{}'", file.format)));
    }
    if file.version != GEOMETRY_VERSION {
        return Err(Error::parse(context, format!("unsupported version {}", file.version)));
    }
    let mut ids: Vec<usize> = file.patches.iter().map(|p| p.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::parse(context, "duplicate patch ids"));
    }
    Ok(file.patches)
}

pub fn read_geometry(path: impl AsRef<Path>) -> Result<Vec<ParametricPatch>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_geometry(&text, &path.display().to_string())
}

pub fn write_geometry(path: impl AsRef<Path>, patches: &[ParametricPatch]) -> Result<()> {
    let file = GeometryFile::new(patches.to_vec());
    let text = serde_json::to_string_pretty(&file).map_err(|e| Error::Numerical(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}
