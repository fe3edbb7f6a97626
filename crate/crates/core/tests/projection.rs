mod common;

use std::f64::consts::{FRAC_PI_4, PI};

use hofem::geometry::{project, ParametricPatch, Shape};
use hofem::mesh::{BoundaryEdge, BoundaryTag, Element, ElementShape, HighOrderMesh};
use hofem::projection_curving::{
    assign_parent_surfaces, geometric_boundary_vertices, project_mesh, snap_nodes, CurvingConfig, NodeStatus,
    PatchSet,
};
use hofem::vec3::{cross, dist, norm, sub};
use proptest::prelude::*;
use rand::Rng;

/// Unit circle split into eight arcs, ids 0..8 counter-clockwise.
fn circle_arcs() -> Vec<ParametricPatch> {
    (0..8)
        .map(|k| {
            ParametricPatch::curve(
                k,
                Shape::CircularArc {
                    center: [0.0; 3],
                    radius: 1.0,
                    e1: [1.0, 0.0, 0.0],
                    e2: [0.0, 1.0, 0.0],
                },
                k as f64 * FRAC_PI_4,
                (k + 1) as f64 * FRAC_PI_4,
            )
            .unwrap()
        })
        .collect()
}

/// Fan of `n` triangles around the origin. Boundary vertex k sits at angle
/// 2 pi k / n and radius `radii[k]`.
fn fan(radii: &[f64]) -> HighOrderMesh {
    let n = radii.len();
    let mut nodes: Vec<[f64; 3]> = radii
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let t = 2.0 * PI * k as f64 / n as f64;
            [r * t.cos(), r * t.sin(), 0.0]
        })
        .collect();
    nodes.push([0.0; 3]);
    let elements = (0..n)
        .map(|k| Element {
            shape: ElementShape::Triangle,
            order: 1,
            nodes: vec![n, k, (k + 1) % n],
        })
        .collect();
    let boundary = (0..n)
        .map(|k| BoundaryEdge {
            vertices: [k, (k + 1) % n],
            tag: BoundaryTag::Patch(0),
        })
        .collect();
    HighOrderMesh::new(nodes, elements, boundary).unwrap()
}

/// Distance to a patch by projecting from eleven seeds across its domain.
fn brute_distance(patch: &ParametricPatch, x: [f64; 3]) -> f64 {
    (0..=10)
        .filter_map(|i| project(patch, x, patch.domain.lerp([i as f64 / 10.0, 0.5])).ok())
        .map(|p| p.distance)
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn parents_match_projection_onto_every_patch() {
    let mut rng = common::rng(21);
    let radii: Vec<f64> = (0..200).map(|_| 1.0 + rng.gen_range(-0.01..0.01)).collect();
    let mesh = fan(&radii);
    let patches = circle_arcs();
    let set = PatchSet::new(patches.clone(), 1e-3).unwrap();
    let assoc = assign_parent_surfaces(&mesh, &set, &CurvingConfig::default()).unwrap();
    assert_eq!(assoc.len(), 200);
    for a in &assoc {
        let x = mesh.nodes[a.node];
        let d: Vec<f64> = patches.iter().map(|p| brute_distance(p, x)).collect();
        let best = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let oracle = d.iter().position(|&v| v <= best + 1e-12 * (1.0 + best)).unwrap();
        assert_eq!(a.patch, oracle, "node {} at {x:?}", a.node);
        assert!((a.distance - best).abs() < 1e-12);
    }
}

#[test]
fn node_on_a_cylinder_picks_that_cylinder() {
    let r = 2.0;
    let on = |t: f64, z: f64| [r * t.cos(), r * t.sin(), z];
    let nodes = vec![on(0.2, 0.0), on(0.5, 0.0), on(0.35, 0.4)];
    let mesh = HighOrderMesh::new(
        nodes.clone(),
        vec![Element {
            shape: ElementShape::Triangle,
            order: 1,
            nodes: vec![0, 1, 2],
        }],
        vec![BoundaryEdge {
            vertices: [0, 1],
            tag: BoundaryTag::Patch(4),
        }],
    )
    .unwrap();
    let patches = vec![
        ParametricPatch::surface(
            1,
            Shape::Plane {
                origin: [0.0, 0.0, -0.05],
                u: [1.0, 0.0, 0.0],
                v: [0.0, 1.0, 0.0],
            },
            [-3.0, -3.0],
            [3.0, 3.0],
        )
        .unwrap(),
        ParametricPatch::surface(
            4,
            Shape::Cylinder {
                origin: [0.0, 0.0, -1.0],
                axis: [0.0, 0.0, 1.0],
                radius: r,
                e1: [1.0, 0.0, 0.0],
            },
            [0.0, 0.0],
            [PI, 2.0],
        )
        .unwrap(),
    ];
    let set = PatchSet::new(patches, 1e-3).unwrap();
    let assoc = assign_parent_surfaces(&mesh, &set, &CurvingConfig::default()).unwrap();
    assert_eq!(assoc.len(), 2);
    for a in &assoc {
        assert_eq!(a.patch, 4);
        assert!(a.distance <= 1e-10);
    }
}

#[test]
fn arc_edges_at_order_three_lie_on_the_circle() {
    let mut rng = common::rng(22);
    let radii: Vec<f64> = (0..24).map(|_| 1.0 + rng.gen_range(-1e-3..1e-3)).collect();
    let mesh = fan(&radii);
    let set = PatchSet::new(circle_arcs(), 1e-3).unwrap();
    let out = project_mesh(&mesh, &set, 3, &CurvingConfig::default()).unwrap();
    assert!(out.exclusions.is_empty());
    assert_eq!(out.curve.curved, 24);
    for b in &out.mesh.boundary {
        for n in out.mesh.edge_nodes((b.vertices[0], b.vertices[1])).unwrap() {
            assert!((norm(out.mesh.nodes[n]) - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn plane_edges_keep_their_linear_nodes() {
    let mut mesh = common::square_mesh(3);
    for b in mesh.boundary.iter_mut() {
        let (a, c) = (mesh.nodes[b.vertices[0]], mesh.nodes[b.vertices[1]]);
        if a[1] == 0.0 && c[1] == 0.0 {
            b.tag = BoundaryTag::Patch(0);
        }
    }
    let plane = ParametricPatch::surface(
        0,
        Shape::Plane {
            origin: [-1.0, 0.0, -1.0],
            u: [1.0, 0.0, 0.0],
            v: [0.0, 0.0, 1.0],
        },
        [0.0, 0.0],
        [3.0, 2.0],
    )
    .unwrap();
    let set = PatchSet::new(vec![plane], 1e-3).unwrap();
    let out = project_mesh(&mesh, &set, 3, &CurvingConfig::default()).unwrap();
    assert_eq!(out.curve.curved, 3);
    let straight = mesh.elevate(3).unwrap();
    for (x, y) in out.mesh.nodes.iter().zip(&straight.nodes) {
        assert!(dist(*x, *y) < 1e-14);
    }
}

#[test]
fn snapped_nodes_lie_on_their_parent() {
    let mut rng = common::rng(23);
    let radii: Vec<f64> = (0..64).map(|_| 1.0 + rng.gen_range(-0.02..0.02)).collect();
    let mesh = fan(&radii);
    let set = PatchSet::new(circle_arcs(), 1e-3).unwrap();
    let out = project_mesh(&mesh, &set, 2, &CurvingConfig::default()).unwrap();
    let boundary = geometric_boundary_vertices(&mesh);
    assert_eq!(out.associations.len(), boundary.len());
    for a in &out.associations {
        assert!(boundary.contains(&a.node));
        let excluded = out.exclusions.iter().any(|r| r.node == a.node);
        assert_eq!(excluded, a.status != NodeStatus::Snapped);
        if a.status == NodeStatus::Snapped {
            let parent = set.get(a.patch).unwrap();
            let x = out.mesh.nodes[a.node];
            assert!(project(parent, x, a.params).unwrap().distance <= 1e-10);
        }
    }
}

fn snapped_set(mesh: &HighOrderMesh, set: &PatchSet, ratio: f64) -> (Vec<usize>, Vec<usize>) {
    let assoc = assign_parent_surfaces(mesh, set, &CurvingConfig::default()).unwrap();
    let (_, assoc, report) = snap_nodes(mesh, &assoc, ratio).unwrap();
    let snapped = assoc.iter().filter(|a| a.status == NodeStatus::Snapped).map(|a| a.node).collect();
    let inverted = report
        .iter()
        .filter(|r| r.reason == hofem::mesh::ExclusionReason::Inversion)
        .map(|r| r.node)
        .collect();
    (snapped, inverted)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_boundary_node_is_snapped_or_excluded(
        radii in prop::collection::vec(0.99f64..1.01, 12..40),
        ratio in 0.001f64..0.03,
    ) {
        let mesh = fan(&radii);
        let set = PatchSet::new(circle_arcs(), 1e-3).unwrap();
        let assoc = assign_parent_surfaces(&mesh, &set, &CurvingConfig::default()).unwrap();
        let (_, assoc, report) = snap_nodes(&mesh, &assoc, ratio).unwrap();
        let nodes: Vec<usize> = assoc.iter().map(|a| a.node).collect();
        prop_assert_eq!(nodes, geometric_boundary_vertices(&mesh));
        for a in &assoc {
            let reported = report.iter().filter(|r| r.node == a.node).count();
            prop_assert_eq!(reported, usize::from(a.status != NodeStatus::Snapped));
        }
    }

    #[test]
    fn raising_the_threshold_never_shrinks_the_snapped_set(
        radii in prop::collection::vec(0.99f64..1.01, 12..40),
        lo in 0.001f64..0.02,
        extra in 0.0f64..0.02,
    ) {
        let mesh = fan(&radii);
        let set = PatchSet::new(circle_arcs(), 1e-3).unwrap();
        let (small, inv_small) = snapped_set(&mesh, &set, lo);
        let (large, inv_large) = snapped_set(&mesh, &set, lo + extra);
        prop_assume!(inv_small == inv_large);
        for n in &small {
            prop_assert!(large.contains(n), "node {} lost at the larger threshold", n);
        }
    }
}

#[test]
fn excluded_edges_are_exactly_straight() {
    let mut radii = vec![1.0; 16];
    radii[5] = 1.01;
    let mesh = fan(&radii);
    let set = PatchSet::new(circle_arcs(), 1e-3).unwrap();
    let cfg = CurvingConfig {
        max_rel_disp: 0.005,
        ..CurvingConfig::default()
    };
    let out = project_mesh(&mesh, &set, 4, &cfg).unwrap();
    assert_eq!(out.exclusions.len(), 1);
    assert_eq!(out.exclusions[0].node, 5);
    assert_eq!(out.curve.straight_excluded, 2);
    for b in &out.mesh.boundary {
        if !b.vertices.contains(&5) {
            continue;
        }
        let nodes = out.mesh.edge_nodes((b.vertices[0], b.vertices[1])).unwrap();
        let (a, c) = (out.mesh.nodes[nodes[0]], out.mesh.nodes[nodes[4]]);
        for &n in &nodes[1..4] {
            assert!(norm(cross(sub(out.mesh.nodes[n], a), sub(c, a))) < 1e-15);
        }
    }
}
