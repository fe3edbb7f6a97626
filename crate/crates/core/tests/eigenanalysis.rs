use std::f64::consts::PI;

use hofem::eigenanalysis::{
    dg_upwind_reference, optimize_kernel, spatial_esa, temporal_esa, unphysical_margin, KernelCache, KernelFile,
    KernelTarget, ModeLabel, OptimizeConfig,
};
use hofem::svv::{assemble_svv_operator, dg_kernel, power_law_kernel, Element1d, Grid1d, SvvKernel};
use num_complex::Complex64;

fn physical_at(order: usize, kernel: Option<&SvvKernel>, kappa: f64) -> Complex64 {
    temporal_esa(order, kernel, 1.0, &[kappa]).unwrap().physical()[0].1
}

#[test]
fn constants_are_preserved() {
    for p in 1..=8 {
        assert!(physical_at(p, None, 0.0).norm() < 1e-12);
        let k = power_law_kernel(p, 2.0).unwrap();
        assert!(physical_at(p, Some(&k), 0.0).norm() < 1e-12);
    }
}

#[test]
fn low_wavenumber_phase_speed() {
    let w = physical_at(3, None, 0.1);
    assert!((w.re - 0.1).abs() / 0.1 <= 1e-6);
    for p in 1..=8 {
        let w = physical_at(p, None, 0.05);
        assert!((w.re / 0.05 - 1.0).abs() <= 1e-6, "P={p}: {w}");
    }
}

/// Every Bloch eigenvalue at `kappa h = 2 pi m / N` is an eigenvalue of the
/// periodic N-element operator assembled in full.
#[test]
fn bloch_spectrum_matches_a_periodic_assembly() {
    let n = 20;
    for (p, kernel) in [(3, None), (4, Some(power_law_kernel(4, 1.0).unwrap()))] {
        let grid = Grid1d::uniform(p, n, n as f64, true).unwrap();
        let el = Element1d::new(p, p + 3).unwrap();
        let m = grid.assemble(|_, h| Ok(el.mass(h))).unwrap();
        let mut l = grid.assemble(|_, _| Ok(-el.convection())).unwrap();
        if let Some(k) = &kernel {
            l += assemble_svv_operator(&grid, k, 1.0, 1.0, p + 3).unwrap();
        }
        let a = m.try_inverse().unwrap() * l;
        let global: Vec<Complex64> = a.complex_eigenvalues().iter().map(|l| Complex64::new(0.0, 1.0) * l).collect();
        for mode in [1, 5, 9, 10] {
            let kappa = 2.0 * PI * mode as f64 / n as f64;
            let s = temporal_esa(p, kernel.as_ref(), 1.0, &[kappa]).unwrap();
            for w in &s.samples[0].values {
                let nearest = global.iter().map(|g| (g - w).norm()).fold(f64::INFINITY, f64::min);
                assert!(nearest < 1e-8, "P={p} kappa h={kappa}: {w} missing ({nearest:e})");
            }
        }
    }
}

#[test]
fn nonnegative_kernels_are_dissipative() {
    let kappas: Vec<f64> = (0..=120).map(|i| -10.0 * PI + 20.0 * PI * i as f64 / 120.0).collect();
    for p in 2..=10 {
        let mut kernels = vec![power_law_kernel(p, 1.0).unwrap(), SvvKernel::unit(p).unwrap(), dg_kernel(p).unwrap()];
        kernels.push(power_law_kernel(p, 6.0).unwrap());
        for k in &kernels {
            let s = temporal_esa(p, Some(k), 1.0, &kappas).unwrap();
            for sample in &s.samples {
                for w in &sample.values {
                    assert!(w.im <= 1e-12, "P={p} kappa h={}: {w}", sample.x);
                }
            }
        }
    }
}

#[test]
fn spectra_are_conjugate_symmetric() {
    let k = power_law_kernel(5, 2.0).unwrap();
    for kappa in [0.3, 1.7, 4.0, 9.5] {
        let a = temporal_esa(5, Some(&k), 1.0, &[kappa]).unwrap();
        let b = temporal_esa(5, Some(&k), 1.0, &[-kappa]).unwrap();
        for w in &a.samples[0].values {
            let mirrored = -w.conj();
            assert!(b.samples[0].values.iter().any(|v| (v - mirrored).norm() < 1e-10));
        }
        let pa = a.physical()[0].1;
        let pb = b.physical()[0].1;
        assert!((pb + pa.conj()).norm() < 1e-10);
    }
}

#[test]
fn first_order_upwind_closed_form() {
    let kappas: Vec<f64> = (0..=50).map(|i| PI * i as f64 / 50.0).collect();
    let s = dg_upwind_reference(0, &kappas).unwrap();
    for (k, w) in s.physical() {
        assert!((w.re - k.sin()).abs() < 1e-13);
        assert!((w.im + (1.0 - k.cos())).abs() < 1e-13);
    }
}

#[test]
fn upwind_dg_is_dissipative() {
    for p in 0..=5 {
        let z = dg_upwind_reference(p, &[0.0]).unwrap();
        assert!(z.physical()[0].1.norm() < 1e-12);
        let n = (p + 1) as f64;
        let kappas: Vec<f64> = (1..100).map(|i| PI * n * i as f64 / 100.0).collect();
        let s = dg_upwind_reference(p, &kappas).unwrap();
        for sample in &s.samples {
            for w in &sample.values {
                assert!(w.im <= 1e-12);
            }
        }
        for (k, w) in s.physical() {
            if k < PI {
                assert!(w.im < 0.0, "P={p} kappa h={k}: {w}");
            }
        }
    }
}

#[test]
fn spatial_rest_state() {
    for p in [1, 3, 5, 7] {
        let s = spatial_esa(p, None, 1.0, &[0.0]).unwrap();
        assert!(s.physical()[0].1.norm() < 1e-12, "P={p}");
    }
    // Even orders carry a double root at z = 1; it is resolved to roundoff level.
    for p in [2, 4, 6] {
        let s = spatial_esa(p, None, 1.0, &[0.0]).unwrap();
        assert!(s.physical()[0].1.norm() < 1e-6, "P={p}");
    }
}

#[test]
fn spatial_and_temporal_analyses_agree_at_low_frequency() {
    for p in 2..=8 {
        for kernel in [None, Some(dg_kernel(p).unwrap())] {
            let s = spatial_esa(p, kernel.as_ref(), 1.0, &[0.0, 0.05, 0.1]).unwrap();
            let kp = s.physical()[2].1;
            let w = physical_at(p, kernel.as_ref(), kp.re);
            assert!((w.re - 0.1).abs() / 0.1 <= 1e-4, "P={p}: omega({}) = {w}", kp.re);
        }
    }
}

#[test]
fn dg_kernels_have_the_damping_sign_structure() {
    for p in 2..=10 {
        let k = dg_kernel(p).unwrap();
        let omegas: Vec<f64> = (0..=300).map(|i| PI * p as f64 * i as f64 / 300.0).collect();
        let s = spatial_esa(p, Some(&k), 1.0, &omegas).unwrap();
        for (w, kp) in s.family(ModeLabel::Physical) {
            assert!(kp.im >= -1e-12, "P={p} omega={w}: {kp}");
        }
        for (w, ku) in s.family(ModeLabel::Unphysical) {
            assert!(ku.im <= 1e-12, "P={p} omega={w}: {ku}");
        }
    }
}

#[test]
fn cached_kernels_satisfy_their_constraint() {
    for p in 2..=10 {
        let file = KernelFile::read(KernelCache::bundled().path(p)).unwrap();
        let cfg = &file.generator_config.as_ref().unwrap().config;
        let k = file.kernel().unwrap();
        assert!(k.entries.iter().all(|q| (0.0..=1.0).contains(q)));
        assert_eq!(k.entries[0], 0.0);
        let margin = unphysical_margin(p, Some(&k), cfg.pe_star, cfg.omega_samples).unwrap();
        assert!(margin >= cfg.c_min.unwrap(), "P={p}: margin {margin}");
    }
}

#[test]
fn regenerated_kernels_match_the_cache() {
    for p in 2..=4 {
        let cached = dg_kernel(p).unwrap();
        let fresh = optimize_kernel(&OptimizeConfig::new(p)).unwrap().kernel;
        for (a, b) in cached.entries.iter().zip(&fresh.entries) {
            assert!((a - b).abs() <= 1e-10, "P={p}");
        }
    }
}

#[test]
fn missing_cache_is_regenerated() {
    let dir = tempfile::tempdir().unwrap();
    let cache = KernelCache::new(dir.path());
    let k = cache.load_or_generate(2).unwrap();
    assert!(cache.path(2).exists());
    assert_eq!(cache.load_or_generate(2).unwrap(), k);
    assert_eq!(k, dg_kernel(2).unwrap());
}

#[test]
fn kernel_fit_for_order_four() {
    let r = optimize_kernel(&OptimizeConfig::new(4)).unwrap();
    assert!(r.mismatch <= 0.2, "mismatch {}", r.mismatch);
    assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    assert!(r.margin >= 0.1);
}

#[test]
fn fitting_the_unstabilised_curve_gives_a_zero_kernel() {
    let cfg = OptimizeConfig {
        target: KernelTarget::CgNoSvv,
        c_min: None,
        ..OptimizeConfig::new(4)
    };
    let r = optimize_kernel(&cfg).unwrap();
    let top = r.kernel.entries.iter().cloned().fold(0.0, f64::max);
    assert!(top <= 1e-3, "{:?}", r.kernel.entries);
    assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn impossible_constraint_is_reported() {
    let cfg = OptimizeConfig {
        c_min: Some(1e3),
        max_evaluations: 60,
        ..OptimizeConfig::new(2)
    };
    match optimize_kernel(&cfg) {
        Err(hofem::Error::Infeasible { best_margin, required }) => {
            assert!(best_margin < required);
        }
        other => panic!("expected an infeasibility error, got {other:?}"),
    }
}
