mod common;

use common::{hexagon_star, perturb_free_nodes, rng, square_mesh};
use hofem::mesh::fixtures::bundled_annulus;
use hofem::projection_curving::{project_mesh, CurvingConfig, PatchSet};
use hofem::variational_curving::{
    element_energy, free_nodes, optimize, translate, EnergyFunctional, EnergyKind, EnergyModel, OptimizerConfig,
};
use rand::Rng;

fn with_delta(kind: EnergyKind, delta: f64) -> EnergyFunctional {
    EnergyFunctional {
        delta: Some(delta),
        ..EnergyFunctional::new(kind)
    }
}

fn triangle_area(mesh: &hofem::mesh::HighOrderMesh, e: usize) -> f64 {
    let v = mesh.elements[e].vertices();
    let (a, b, c) = (mesh.nodes[v[0]], mesh.nodes[v[1]], mesh.nodes[v[2]]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

#[test]
fn identity_element_energies() {
    let mesh = square_mesh(2).elevate(3).unwrap();
    for e in 0..mesh.elements.len() {
        let area = triangle_area(&mesh, e);
        let w = element_energy(&mesh, e, with_delta(EnergyKind::Winslow, 1e-10), None).unwrap();
        assert!((w - 2.0 * area).abs() < 1e-12, "winslow {w} vs {}", 2.0 * area);
        let le = element_energy(&mesh, e, with_delta(EnergyKind::LinearElasticity, 1e-10), None).unwrap();
        assert!(le.abs() < 1e-12);
    }
}

#[test]
fn curved_element_energy_is_stable_under_quadrature_refinement() {
    let mut mesh = square_mesh(1).elevate(3).unwrap();
    // Bow the bottom edge of the first triangle.
    for n in mesh.elements[0].edge_nodes(0) {
        let x = mesh.nodes[n][0];
        mesh.nodes[n][1] -= 0.15 * x * (1.0 - x);
    }
    let func = EnergyFunctional::new(EnergyKind::Hyperelastic);
    for q in [12, 16] {
        let coarse = element_energy(&mesh, 0, func, Some(q)).unwrap();
        let fine = element_energy(&mesh, 0, func, Some(q + 4)).unwrap();
        assert!(((coarse - fine) / fine).abs() < 1e-8, "Q={q}: {coarse} vs {fine}");
    }
}

#[test]
fn gradient_vanishes_on_the_ideal_mesh() {
    let mesh = square_mesh(2).elevate(3).unwrap();
    for kind in EnergyKind::ALL {
        let model = EnergyModel::new(&mesh, EnergyFunctional::new(kind), None).unwrap();
        for n in free_nodes(&mesh, false) {
            let g = model.energy_gradient(&mesh, n);
            assert!(g[0].abs() < 1e-12 && g[1].abs() < 1e-12, "{kind:?} node {n}: {g:?}");
        }
    }
}

#[test]
fn gradient_matches_central_differences() {
    let base = square_mesh(2).elevate(3).unwrap();
    let mut r = rng(11);
    for config in 0..25 {
        let mut mesh = base.clone();
        perturb_free_nodes(&mut mesh, 0.04, &mut r);
        let free = free_nodes(&mesh, false);
        let node = free[r.gen_range(0..free.len())];
        for kind in EnergyKind::ALL {
            let model = EnergyModel::new(&base, EnergyFunctional::new(kind), None).unwrap();
            let g = model.energy_gradient(&mesh, node);
            let gnorm = g[0].hypot(g[1]);
            let best = [1e-4, 1e-5, 1e-6]
                .iter()
                .map(|&h| {
                    let mut fd = [0.0; 2];
                    for (k, v) in fd.iter_mut().enumerate() {
                        let mut m = mesh.clone();
                        m.nodes[node][k] += h;
                        let ep = model.local_energy(&m, node);
                        m.nodes[node][k] -= 2.0 * h;
                        let em = model.local_energy(&m, node);
                        *v = (ep - em) / (2.0 * h);
                    }
                    (fd[0] - g[0]).hypot(fd[1] - g[1]) / gnorm
                })
                .fold(f64::INFINITY, f64::min);
            assert!(best <= 1e-6, "config {config} {kind:?}: rel err {best:e}");
        }
    }
}

#[test]
fn gradient_is_translation_invariant() {
    let base = square_mesh(2).elevate(2).unwrap();
    let mut mesh = base.clone();
    perturb_free_nodes(&mut mesh, 0.05, &mut rng(3));
    let shift = [12.5, -7.25, 0.0];
    let (mut base_t, mut mesh_t) = (base.clone(), mesh.clone());
    translate(&mut base_t, shift);
    translate(&mut mesh_t, shift);
    for kind in EnergyKind::ALL {
        let func = with_delta(kind, 1e-3);
        let model = EnergyModel::new(&base, func, None).unwrap();
        let model_t = EnergyModel::new(&base_t, func, None).unwrap();
        for n in free_nodes(&mesh, false) {
            let (a, b) = (model.energy_gradient(&mesh, n), model_t.energy_gradient(&mesh_t, n));
            let scale = a[0].hypot(a[1]).max(1e-3);
            assert!((a[0] - b[0]).hypot(a[1] - b[1]) < 1e-8 * scale, "{kind:?} node {n}");
        }
    }
}

/// Minimises the local energy of `node` over a square window by repeated
/// grid search, shrinking the window around the best sample.
fn grid_minimum(model: &EnergyModel, mesh: &hofem::mesh::HighOrderMesh, node: usize, half: f64) -> [f64; 2] {
    let mut m = mesh.clone();
    let mut center = [mesh.nodes[node][0], mesh.nodes[node][1]];
    let mut half = half;
    let n = 400;
    for round in 0..6 {
        let samples = if round == 0 { n } else { 40 };
        let mut best = (f64::INFINITY, center);
        for i in 0..=samples {
            for j in 0..=samples {
                let x = center[0] - half + 2.0 * half * i as f64 / samples as f64;
                let y = center[1] - half + 2.0 * half * j as f64 / samples as f64;
                m.nodes[node][0] = x;
                m.nodes[node][1] = y;
                let e = model.local_energy(&m, node);
                if e < best.0 {
                    best = (e, [x, y]);
                }
            }
        }
        center = best.1;
        half *= if round == 0 { 4.0 / n as f64 } else { 0.2 };
    }
    center
}

#[test]
fn relax_node_matches_grid_minimisation() {
    let ideal = hexagon_star();
    for kind in EnergyKind::ALL {
        let model = EnergyModel::new(&ideal, EnergyFunctional::new(kind), None).unwrap();
        let mut mesh = ideal.clone();
        mesh.nodes[1][0] += 0.3;
        mesh.nodes[1][1] += 0.2;
        let expected = grid_minimum(&model, &mesh, 0, 0.5);
        model.relax_node(&mut mesh, 0, 100);
        let got = mesh.nodes[0];
        let err = (got[0] - expected[0]).hypot(got[1] - expected[1]);
        assert!(err < 1e-5, "{kind:?}: relaxed {got:?} vs grid {expected:?}");
    }
}

#[test]
fn relax_node_leaves_a_minimum_in_place() {
    let mesh = hexagon_star();
    for kind in EnergyKind::ALL {
        let model = EnergyModel::new(&mesh, EnergyFunctional::new(kind), None).unwrap();
        let mut m = mesh.clone();
        let d = model.relax_node(&mut m, 0, 10);
        assert!(d[0].abs() < 1e-14 && d[1].abs() < 1e-14, "{kind:?}: {d:?}");
    }
}

#[test]
fn relax_node_never_increases_local_energy() {
    let base = square_mesh(2).elevate(2).unwrap();
    let mut r = rng(5);
    for fixture in 0..100 {
        let kind = EnergyKind::ALL[fixture % 4];
        let mut mesh = base.clone();
        perturb_free_nodes(&mut mesh, 0.12, &mut r);
        let model = EnergyModel::new(&base, EnergyFunctional::new(kind), None).unwrap();
        let free = free_nodes(&mesh, false);
        let node = free[r.gen_range(0..free.len())];
        let before = model.local_energy(&mesh, node);
        model.relax_node(&mut mesh, node, 1 + fixture % 5);
        let after = model.local_energy(&mesh, node);
        assert!(after <= before, "fixture {fixture}: {before} -> {after}");
    }
}

#[test]
fn optimal_mesh_converges_in_one_sweep() {
    let mut mesh = square_mesh(3).elevate(3).unwrap();
    let before = mesh.nodes.clone();
    for kind in EnergyKind::ALL {
        let report = optimize(&mut mesh, EnergyFunctional::new(kind), &OptimizerConfig::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.sweeps.len(), 1);
        for (a, b) in mesh.nodes.iter().zip(&before) {
            assert!((a[0] - b[0]).abs() < 1e-14 && (a[1] - b[1]).abs() < 1e-14);
        }
    }
}

#[test]
fn annulus_untangles_and_keeps_the_boundary_fixed() {
    let (mesh, patches) = bundled_annulus().unwrap();
    let set = PatchSet::new(patches, 1e-3).unwrap();
    let curved = project_mesh(&mesh, &set, 4, &CurvingConfig::default()).unwrap().mesh;
    assert!(curved.invalid_element_count().unwrap() >= 1);
    let mut m = curved.clone();
    let cfg = OptimizerConfig {
        max_sweeps: 1000,
        ..Default::default()
    };
    let report = optimize(&mut m, EnergyFunctional::new(EnergyKind::Hyperelastic), &cfg).unwrap();
    assert!(report.converged);
    assert!(report.sweeps.last().unwrap().residual < 1e-6);
    assert_eq!(m.invalid_element_count().unwrap(), 0);
    assert!(report.sweeps.windows(2).all(|w| w[1].energy <= w[0].energy));
    assert!(report.sweeps[0].energy <= report.initial_energy);
    let free = free_nodes(&curved, false);
    for n in 0..m.nodes.len() {
        if !free.contains(&n) {
            assert_eq!(m.nodes[n], curved.nodes[n], "fixed node {n} moved");
        }
    }
    let csv = report.to_csv();
    assert!(csv.starts_with("sweep,energy,residual,invalid_count\n"));
    assert_eq!(csv.lines().count(), report.sweeps.len() + 1);
}

#[test]
fn optimisation_commutes_with_translation() {
    let base = square_mesh(2).elevate(3).unwrap();
    let mut mesh = base.clone();
    perturb_free_nodes(&mut mesh, 0.05, &mut rng(21));
    let shift = [4.0, -2.5, 0.0];
    let mut shifted = mesh.clone();
    translate(&mut shifted, shift);
    let func = with_delta(EnergyKind::Winslow, 1e-3);
    let cfg = OptimizerConfig::default();
    // Ideal maps come from the perturbed vertices, identical in both copies.
    optimize(&mut mesh, func, &cfg).unwrap();
    optimize(&mut shifted, func, &cfg).unwrap();
    for (a, b) in mesh.nodes.iter().zip(&shifted.nodes) {
        assert!((a[0] + shift[0] - b[0]).abs() < 1e-8 && (a[1] + shift[1] - b[1]).abs() < 1e-8);
    }
}

#[test]
fn halving_tolerance_never_raises_final_energy() {
    let base = square_mesh(2).elevate(3).unwrap();
    let mut start = base.clone();
    perturb_free_nodes(&mut start, 0.06, &mut rng(8));
    for kind in EnergyKind::ALL {
        let mut finals = Vec::new();
        for eps in [1e-3, 5e-4, 2.5e-4] {
            let mut m = start.clone();
            let cfg = OptimizerConfig {
                eps,
                ..Default::default()
            };
            let report = optimize(&mut m, EnergyFunctional::new(kind), &cfg).unwrap();
            finals.push(report.sweeps.last().unwrap().energy);
        }
        assert!(finals.windows(2).all(|w| w[1] <= w[0]), "{kind:?}: {finals:?}");
    }
}

#[test]
fn regularisation_error_is_quadratic_in_delta() {
    let base = square_mesh(2).elevate(2).unwrap();
    let mut mesh = base.clone();
    perturb_free_nodes(&mut mesh, 0.03, &mut rng(2));
    assert_eq!(mesh.invalid_element_count().unwrap(), 0);
    for kind in EnergyKind::ALL {
        let energy = |d: f64| EnergyModel::new(&base, with_delta(kind, d), None).unwrap().total_energy(&mesh);
        let exact = energy(1e-12);
        let e1 = (energy(1e-2) - exact).abs();
        let e2 = (energy(5e-3) - exact).abs();
        assert!(e1 > 0.0 && e1 < 10.0 * 1e-4 * exact.abs().max(1.0), "{kind:?}: {e1}");
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.1, "{kind:?}: ratio {ratio}");
    }
}

#[test]
fn regularised_energy_is_finite_on_an_inverted_mesh() {
    let base = hexagon_star();
    let mut mesh = base.clone();
    mesh.nodes[0] = [1.5, 0.3, 0.0];
    assert!(mesh.invalid_element_count().unwrap() > 0);
    for kind in EnergyKind::ALL {
        let model = EnergyModel::new(&base, EnergyFunctional::new(kind), None).unwrap();
        assert!(model.total_energy(&mesh).is_finite());
        let g = model.energy_gradient(&mesh, 0);
        assert!(g[0].is_finite() && g[1].is_finite());
    }
}
