//! Reader for the ASCII gmsh 2.2 format: `$Nodes`, `$Elements` and optional
//! `$PhysicalNames` sections, triangles and quadrilaterals up to order 4.
//!
//! Gmsh places high-order nodes equispaced; they are resampled onto this
//! crate's node layout by evaluating the equispaced interpolant. Line
//! elements become boundary edges tagged with their physical id, or
//! `farfield` when the physical group is named so.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;

use super::reference::{reference_nodes, ElementShape, Xi};
use super::{BoundaryEdge, BoundaryTag, HighOrderMesh, MeshBuilder};
use crate::error::{Error, Result};
use crate::polybasis::legendre;
use crate::vec3::Vec3;

pub fn read_gmsh(path: impl AsRef<Path>) -> Result<HighOrderMesh> {
    let path = path.as_ref();
    parse_gmsh(&std::fs::read_to_string(path)?, &path.display().to_string())
}

/// Shape and order of a gmsh element type, `None` for unsupported types.
fn surface_type(t: u32) -> Option<(ElementShape, usize)> {
    Some(match t {
        2 => (ElementShape::Triangle, 1),
        9 => (ElementShape::Triangle, 2),
        21 => (ElementShape::Triangle, 3),
        23 => (ElementShape::Triangle, 4),
        3 => (ElementShape::Quadrilateral, 1),
        10 => (ElementShape::Quadrilateral, 2),
        36 => (ElementShape::Quadrilateral, 3),
        37 => (ElementShape::Quadrilateral, 4),
        _ => return None,
    })
}

fn is_line_type(t: u32) -> bool {
    matches!(t, 1 | 8 | 26 | 27)
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    context: &'a str,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        loop {
            match self.iter.next() {
                Some((k, l)) => {
                    self.line = k + 1;
                    let l = l.trim();
                    if !l.is_empty() {
                        return Ok(l);
                    }
                }
                None => return Err(self.err("unexpected end of file")),
            }
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(format!("{}:{}", self.context, self.line), msg)
    }

    fn expect(&mut self, tag: &str) -> Result<()> {
        let l = self.next()?;
        if l == tag {
            Ok(())
        } else {
            Err(self.err(format!("expected {tag}, found '{l}'")))
        }
    }

    fn numbers<T: std::str::FromStr>(&self, l: &str) -> Result<Vec<T>> {
        l.split_whitespace()
            .map(|t| t.parse::<T>().map_err(|_| self.err(format!("bad number '{t}'"))))
            .collect()
    }
}

pub(crate) fn parse_gmsh(text: &str, context: &str) -> Result<HighOrderMesh> {
    let mut lines = Lines {
        iter: text.lines().enumerate(),
        context,
        line: 0,
    };
    let mut coords: HashMap<usize, Vec3> = HashMap::new();
    let mut surfaces: Vec<(ElementShape, usize, Vec<usize>)> = Vec::new();
    let mut lines_elems: Vec<(usize, [usize; 2])> = Vec::new();
    let mut names: HashMap<usize, String> = HashMap::new();
    let mut seen_format = false;
    while let Some((k, raw)) = lines.iter.next() {
        lines.line = k + 1;
        match raw.trim() {
            "" => {}
            "$MeshFormat" => {
                let l = lines.next()?;
                let mut parts = l.split_whitespace();
                let version = parts.next().unwrap_or("");
                if !version.starts_with("2.") {
                    return Err(lines.err(format!("unsupported format version {version}")));
                }
                if parts.next() != Some("0") {
                    return Err(lines.err("only ASCII files are supported"));
                }
                lines.expect("$EndMeshFormat")?;
                seen_format = true;
            }
            "$PhysicalNames" => {
                let l = lines.next()?;
                let n: usize = lines.numbers(l)?.first().copied().ok_or_else(|| lines.err("missing count"))?;
                for _ in 0..n {
                    let l = lines.next()?;
                    let mut parts = l.splitn(3, char::is_whitespace);
                    let _dim = parts.next();
                    let tag: usize = parts
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| lines.err("bad physical name record"))?;
                    let name = parts.next().unwrap_or("").trim().trim_matches('"').to_string();
                    names.insert(tag, name);
                }
                lines.expect("$EndPhysicalNames")?;
            }
            "$Nodes" => {
                let l = lines.next()?;
                let n: usize = lines.numbers(l)?.first().copied().ok_or_else(|| lines.err("missing node count"))?;
                for _ in 0..n {
                    let l = lines.next()?;
                    let v: Vec<f64> = lines.numbers(l)?;
                    if v.len() != 4 {
                        return Err(lines.err("node record needs id x y z"));
                    }
                    coords.insert(v[0] as usize, [v[1], v[2], v[3]]);
                }
                lines.expect("$EndNodes")?;
            }
            "$Elements" => {
                let l = lines.next()?;
                let n: usize = lines.numbers(l)?.first().copied().ok_or_else(|| lines.err("missing element count"))?;
                for _ in 0..n {
                    let l = lines.next()?;
                    let v: Vec<usize> = lines.numbers(l)?;
                    if v.len() < 3 || v.len() < 3 + v[2] {
                        return Err(lines.err("truncated element record"));
                    }
                    let etype = v[1] as u32;
                    let ntags = v[2];
                    let physical = if ntags > 0 { v[3] } else { 0 };
                    let nodes = v[3 + ntags..].to_vec();
                    if let Some((shape, p)) = surface_type(etype) {
                        if nodes.len() != shape.node_count(p) {
                            return Err(lines.err(format!("element type {etype} needs {} nodes", shape.node_count(p))));
                        }
                        surfaces.push((shape, p, nodes));
                    } else if is_line_type(etype) {
                        if nodes.len() < 2 {
                            return Err(lines.err("line element needs two end nodes"));
                        }
                        lines_elems.push((physical, [nodes[0], nodes[1]]));
                    } else if etype != 15 {
                        return Err(lines.err(format!("unsupported element type {etype}")));
                    }
                }
                lines.expect("$EndElements")?;
            }
            other if other.starts_with('$') => {
                // Skip unknown sections.
                let end = format!("$End{}", &other[1..]);
                while lines.next()? != end {}
            }
            other => return Err(lines.err(format!("unexpected content '{other}'"))),
        }
    }
    if !seen_format {
        return Err(Error::parse(context, "missing $MeshFormat section"));
    }
    if surfaces.is_empty() {
        return Err(Error::parse(context, "no triangle or quadrilateral elements"));
    }
    let order = surfaces[0].1;
    if surfaces.iter().any(|s| s.1 != order) {
        return Err(Error::parse(context, "mixed element orders are not supported"));
    }
    let node = |id: usize| {
        coords
            .get(&id)
            .copied()
            .ok_or_else(|| Error::parse(context, format!("element references missing node {id}")))
    };

    let mut builder = MeshBuilder::new(order);
    let mut resample: HashMap<ElementShape, DMatrix<f64>> = HashMap::new();
    for (shape, p, ids) in &surfaces {
        for &v in &ids[..shape.vertex_count()] {
            builder.vertex(v, node(v)?);
        }
        let w = match resample.get(shape) {
            Some(w) => w,
            None => {
                let w = resampling_matrix(*shape, *p)?;
                resample.entry(*shape).or_insert(w)
            }
        };
        let src: Vec<Vec3> = ids.iter().map(|&i| node(i)).collect::<Result<_>>()?;
        let positions: Vec<Vec3> = (0..w.nrows())
            .map(|r| {
                let mut x = [0.0; 3];
                for (c, s) in src.iter().enumerate() {
                    for d in 0..3 {
                        x[d] += w[(r, c)] * s[d];
                    }
                }
                x
            })
            .collect();
        builder
            .element(*shape, &ids[..shape.vertex_count()], &positions)
            .map_err(|e| Error::parse(context, e.to_string()))?;
    }
    let boundary: Vec<BoundaryEdge> = lines_elems
        .into_iter()
        .map(|(phys, v)| BoundaryEdge {
            vertices: v,
            tag: if names.get(&phys).is_some_and(|n| n.eq_ignore_ascii_case("farfield")) {
                BoundaryTag::Farfield
            } else {
                BoundaryTag::Patch(phys)
            },
        })
        .collect();
    let (mesh, _) = builder
        .finish(&boundary)
        .map_err(|e| Error::parse(context, e.to_string()))?;
    Ok(mesh)
}

/// Lattice positions of gmsh nodes for an order-`p` element: vertices,
/// edges, then the interior recursively as a smaller element of the same
/// shape.
pub(crate) fn gmsh_lattice(shape: ElementShape, p: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    match shape {
        ElementShape::Triangle => {
            if p == 0 {
                return vec![(0, 0)];
            }
            out.extend([(0, 0), (p, 0), (0, p)]);
            out.extend((1..p).map(|i| (i, 0)));
            out.extend((1..p).map(|i| (p - i, i)));
            out.extend((1..p).map(|i| (0, p - i)));
            if p >= 3 {
                out.extend(gmsh_lattice(shape, p - 3).into_iter().map(|(i, j)| (i + 1, j + 1)));
            }
        }
        _ => {
            if p == 0 {
                return vec![(0, 0)];
            }
            out.extend([(0, 0), (p, 0), (p, p), (0, p)]);
            out.extend((1..p).map(|i| (i, 0)));
            out.extend((1..p).map(|i| (p, i)));
            out.extend((1..p).map(|i| (p - i, p)));
            out.extend((1..p).map(|i| (0, p - i)));
            if p >= 2 {
                out.extend(gmsh_lattice(shape, p - 2).into_iter().map(|(i, j)| (i + 1, j + 1)));
            }
        }
    }
    out
}

/// Matrix mapping gmsh node values to values at this crate's nodes.
fn resampling_matrix(shape: ElementShape, p: usize) -> Result<DMatrix<f64>> {
    let src: Vec<Xi> = gmsh_lattice(shape, p)
        .into_iter()
        .map(|(i, j)| [i as f64 / p as f64, j as f64 / p as f64])
        .collect();
    let modes: Vec<(usize, usize)> = match shape {
        ElementShape::Triangle => (0..=p).flat_map(|b| (0..=p - b).map(move |a| (a, b))).collect(),
        _ => (0..=p).flat_map(|b| (0..=p).map(move |a| (a, b))).collect(),
    };
    let psi = |x: Xi, (a, b): (usize, usize)| legendre(a, 2.0 * x[0] - 1.0).0 * legendre(b, 2.0 * x[1] - 1.0).0;
    let n = src.len();
    let v = DMatrix::from_fn(n, n, |r, c| psi(src[r], modes[c]));
    let inv = v
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular equispaced Vandermonde".into()))?;
    let dst = reference_nodes(shape, p);
    let t = DMatrix::from_fn(dst.len(), n, |r, c| psi(dst[r], modes[c]));
    Ok(t * inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_P2_TRIANGLES: &str = "$MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
2
1 1 \"wall\"
1 2 \"farfield\"
$EndPhysicalNames
$Nodes
9
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
5 0.5 -0.1 0
6 1 0.5 0
7 0.5 0.5 0
8 0.5 1 0
9 0 0.5 0
$EndNodes
$Elements
4
1 8 2 1 1 1 2 5
2 8 2 2 2 3 4 8
3 9 2 0 1 1 2 3 5 6 7
4 9 2 0 1 1 3 4 7 8 9
$EndElements
";

    #[test]
    fn reads_quadratic_triangles() {
        let m = parse_gmsh(TWO_P2_TRIANGLES, "t.msh").unwrap();
        assert_eq!(m.elements.len(), 2);
        assert_eq!(m.nodes.len(), 9);
        assert_eq!(m.boundary.len(), 2);
        assert_eq!(m.boundary[0].tag, BoundaryTag::Patch(1));
        assert_eq!(m.boundary[1].tag, BoundaryTag::Farfield);
        // P=2 edge nodes are midpoints in both layouts.
        let mid = m.elements[0].edge_nodes(0)[1];
        assert!((m.nodes[mid][1] + 0.1).abs() < 1e-14);
    }

    #[test]
    fn quartic_resampling_reproduces_polynomials() {
        for shape in [ElementShape::Triangle, ElementShape::Quadrilateral] {
            let p = 4;
            let w = resampling_matrix(shape, p).unwrap();
            let f = |x: Xi| x[0].powi(2) * x[1] + 0.5 * x[1].powi(3) - x[0];
            let src: Vec<f64> = gmsh_lattice(shape, p)
                .into_iter()
                .map(|(i, j)| f([i as f64 / 4.0, j as f64 / 4.0]))
                .collect();
            for (r, x) in reference_nodes(shape, p).into_iter().enumerate() {
                let v: f64 = (0..src.len()).map(|c| w[(r, c)] * src[c]).sum();
                assert!((v - f(x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gmsh_lattices_are_complete() {
        for shape in [ElementShape::Triangle, ElementShape::Quadrilateral] {
            for p in 1..=4 {
                let mut l = gmsh_lattice(shape, p);
                assert_eq!(l.len(), shape.node_count(p));
                l.sort_unstable();
                l.dedup();
                assert_eq!(l.len(), shape.node_count(p));
            }
        }
        // Interior of the cubic quadrilateral follows the sub-element order.
        let l = gmsh_lattice(ElementShape::Quadrilateral, 3);
        assert_eq!(&l[12..], &[(1, 1), (2, 1), (2, 2), (1, 2)]);
    }

    #[test]
    fn truncated_file_reports_line() {
        let cut = &TWO_P2_TRIANGLES[..TWO_P2_TRIANGLES.find("$EndNodes").unwrap()];
        match parse_gmsh(cut, "t.msh") {
            Err(Error::Parse { context, .. }) => assert!(context.starts_with("t.msh:")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
