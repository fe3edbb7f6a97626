#![allow(dead_code)]

use hofem::mesh::{BoundaryEdge, BoundaryTag, Element, ElementShape, HighOrderMesh};
use hofem::variational_curving::free_nodes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Linear mesh from vertex positions and triangles, with the outer edges
/// tagged as farfield.
pub fn triangle_mesh(points: &[[f64; 2]], tris: &[[usize; 3]]) -> HighOrderMesh {
    let nodes = points.iter().map(|p| [p[0], p[1], 0.0]).collect();
    let elements = tris
        .iter()
        .map(|t| Element {
            shape: ElementShape::Triangle,
            order: 1,
            nodes: t.to_vec(),
        })
        .collect::<Vec<_>>();
    let mut count = std::collections::BTreeMap::new();
    for t in tris {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            count.entry((a.min(b), a.max(b))).or_insert((0, [a, b])).0 += 1;
        }
    }
    let boundary = count
        .values()
        .filter(|(n, _)| *n == 1)
        .map(|&(_, v)| BoundaryEdge {
            vertices: v,
            tag: BoundaryTag::Farfield,
        })
        .collect();
    HighOrderMesh::new(nodes, elements, boundary).unwrap()
}

/// Six triangles around a centre vertex (node 0) on the unit hexagon.
pub fn hexagon_star() -> HighOrderMesh {
    let mut pts = vec![[0.0, 0.0]];
    for k in 0..6 {
        let t = std::f64::consts::PI / 3.0 * k as f64;
        pts.push([t.cos(), t.sin()]);
    }
    let tris: Vec<[usize; 3]> = (0..6).map(|k| [0, 1 + k, 1 + (k + 1) % 6]).collect();
    triangle_mesh(&pts, &tris)
}

/// Structured `n x n` triangulation of the unit square.
pub fn square_mesh(n: usize) -> HighOrderMesh {
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut pts = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            pts.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    let mut tris = Vec::new();
    for j in 0..n {
        for i in 0..n {
            tris.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            tris.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    triangle_mesh(&pts, &tris)
}

/// Moves every free node of `mesh` by a uniform random offset of at most
/// `amplitude` per coordinate.
pub fn perturb_free_nodes(mesh: &mut HighOrderMesh, amplitude: f64, rng: &mut ChaCha8Rng) {
    for n in free_nodes(mesh, false) {
        mesh.nodes[n][0] += rng.gen_range(-amplitude..amplitude);
        mesh.nodes[n][1] += rng.gen_range(-amplitude..amplitude);
    }
}
