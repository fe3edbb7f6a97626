use hofem::polybasis::{
    gll_rule, lagrange_eval, legendre, min_points_for_degree, min_quadrature_points, modal_transform, Basis,
};
use proptest::prelude::*;

#[test]
fn gll_rules_integrate_monomials_to_their_exactness_degree() {
    for q in 2..=12 {
        let rule = gll_rule(q).unwrap();
        assert!(rule.points.windows(2).all(|w| w[0] < w[1]));
        assert_eq!((rule.points[0], rule.points[q - 1]), (-1.0, 1.0));
        assert!(rule.weights.iter().all(|&w| w > 0.0));
        for d in 0..=2 * q - 3 {
            let exact = if d % 2 == 1 { 0.0 } else { 2.0 / (d + 1) as f64 };
            let got = rule.integrate(|x| x.powi(d as i32));
            assert!((got - exact).abs() <= 1e-12 * exact.max(1.0), "Q={q} d={d}: {got} vs {exact}");
        }
    }
}

#[test]
fn point_counts_reproduce_the_dealiasing_table() {
    for p in 1..=10usize {
        // Rows for quadratic, cubic and quartic integrands: degree 2P, 3P, 4P.
        let bounds = [p as f64 + 1.5, 1.5 * p as f64 + 1.5, 2.0 * p as f64 + 1.5];
        for (row, bound) in bounds.iter().enumerate() {
            assert_eq!(min_points_for_degree((row + 2) * p), bound.ceil() as usize, "P={p} row {row}");
        }
        assert_eq!(min_quadrature_points(p, 2).unwrap(), bounds[1].ceil() as usize);
        assert_eq!(min_quadrature_points(p, 3).unwrap(), bounds[2].ceil() as usize);
        assert_eq!(min_quadrature_points(p, 1).unwrap(), ((p as f64 + 3.0) / 2.0).ceil() as usize);
    }
    assert_eq!(min_quadrature_points(4, 2).unwrap(), 8);
    assert_eq!(min_quadrature_points(4, 3).unwrap(), 10);
    assert_eq!(min_quadrature_points(1, 1).unwrap(), 2);
    assert!(min_quadrature_points(4, 4).is_err());
}

#[test]
fn sampled_legendre_polynomials_map_to_unit_vectors() {
    for p in 1..=12 {
        let t = modal_transform(p).unwrap();
        let nodes = gll_rule(p + 1).unwrap().points;
        for k in 0..=p {
            let sampled: Vec<f64> = nodes.iter().map(|&x| legendre(k, x).0).collect();
            let modal = t.to_modal(&sampled);
            for (j, c) in modal.iter().enumerate() {
                let e = if j == k { 1.0 } else { 0.0 };
                assert!((c - e).abs() < 1e-12, "P={p} k={k} j={j}: {c}");
            }
        }
    }
}

proptest! {
    #[test]
    fn point_counts_are_monotone(p in 1usize..30, m in 1usize..3) {
        let q = min_quadrature_points(p, m).unwrap();
        prop_assert!(min_quadrature_points(p + 1, m).unwrap() >= q);
        prop_assert!(min_quadrature_points(p, m + 1).unwrap() >= q);
    }

    #[test]
    fn modal_round_trip(p in 1usize..=12, coeffs in prop::collection::vec(-10.0f64..10.0, 13)) {
        let t = modal_transform(p).unwrap();
        let nodal = &coeffs[..=p];
        let back = t.to_nodal(&t.to_modal(nodal));
        for (a, b) in nodal.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12 * 10.0);
        }
    }

    #[test]
    fn lagrange_basis_is_a_partition_of_unity(p in 1usize..=10, xi in -1.0f64..1.0) {
        let basis = Basis::nodal_gll(p).unwrap();
        let sum: f64 = (0..=p).map(|k| lagrange_eval(&basis, k, xi).unwrap()).sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }
}
