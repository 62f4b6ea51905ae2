use fdim_core::builder::*;
use fdim_core::density::GFactor;
use fdim_core::profile::{power_law_profile, ApproximationProfile, CoprimeRule};
use fdim_core::Error;

fn profile() -> ApproximationProfile {
    power_law_profile(2.0, 2, 20_000, 0.3, CoprimeRule::Homogeneous).unwrap()
}

fn config(stages: usize, route: Route) -> BuildConfig {
    let mut c = BuildConfig::new(0.3, 0.05, stages);
    c.xi_max = 1024.0;
    c.route = route;
    c
}

#[test]
fn gap_routes_agree_on_first_stage() {
    let p = profile();
    let grid = xi_grid(1024.0, 8);
    for m in [4u64, 16, 64] {
        let g = GFactor::new(&p, 0.3, m, Default::default()).unwrap();
        let cfg = config(1, Route::Series);
        let prefix = Prefix::h0(&cfg.bump, cfg.lattice_max());
        let (a, ra, win) = stability_gap(&prefix, &g, &grid, &cfg).unwrap();
        let (b, rb, none) = stability_gap(&prefix, &g, &grid, &config(1, Route::Quadrature)).unwrap();
        assert_eq!((ra, rb), (GapRoute::Fourier, GapRoute::Direct));
        assert!(win.is_some() && none.is_none());
        assert!((a - b).abs() < 1e-8 * (1.0 + a), "M = {m}: {a} vs {b}");
    }
}

#[test]
fn series_and_quadrature_builds_agree() {
    let p = profile();
    let a = build_measure(&p, &config(2, Route::Series)).unwrap();
    let b = build_measure(&p, &config(2, Route::Quadrature)).unwrap();
    assert_eq!(a.scales, b.scales);
    assert!(a.logs.iter().all(|l| l.rest_route == Route::Series));
    assert!(b.logs.iter().all(|l| l.rest_route == Route::Quadrature));
    for (x, y) in a.gaps.iter().zip(&b.gaps) {
        assert!((x - y).abs() < 1e-7 * (1.0 + x), "{x} vs {y}");
    }
    assert!((a.mass - b.mass).abs() < 1e-8);
    for (l, (x, y)) in a.coeffs.iter().zip(&b.coeffs).enumerate() {
        assert!((x - y).norm() < 1e-7, "l = {l}: {x} vs {y}");
    }
}

#[test]
fn stage_invariants() {
    let p = profile();
    let st = build_measure(&p, &config(2, Route::Auto)).unwrap();
    assert!(st.complete);
    assert_eq!(st.stage, 2);
    assert!(st.scales.windows(2).all(|w| 2 * w[0] < w[1]));
    let c_stab = st.c_stab.unwrap();
    assert_eq!(c_stab, 2.0 * st.gaps[0]);
    for log in &st.logs {
        assert!((log.factor_coeff0 - 1.0).abs() < 1e-9);
        if let Some(t) = log.threshold {
            assert_eq!(t, c_stab * 0.5f64.powi(log.stage as i32));
            assert!(log.gap <= t);
        }
        // Candidates tried before the selected one were all rejected.
        let (last, rejected) = log.candidates.split_last().unwrap();
        assert_eq!(last.m, log.m);
        assert!(rejected.iter().all(|c| c.gap > log.threshold.unwrap_or(f64::INFINITY)));
    }
    assert!((st.nu_hat(0.0).re - 1.0).abs() < 1e-12);
    assert_eq!(st.coeffs.len(), st.lattice_max() + 1);
}

#[test]
fn zero_stages_is_h0() {
    let st = build_measure(&profile(), &config(0, Route::Auto)).unwrap();
    assert!(st.scales.is_empty());
    for xi in [0.0, 0.5, 3.25, 17.0] {
        assert!((st.nu_hat(xi) - st.bump.h0_hat(xi)).norm() < 1e-12);
    }
}

#[test]
fn failures_keep_the_partial_stage() {
    let p = profile();
    let mut cfg = config(2, Route::Series);
    cfg.bandwidth_budget = 4000;
    let e = build_measure(&p, &cfg).unwrap_err();
    assert!(matches!(e.error, Error::BandwidthExceeded { .. }), "{e}");
    assert!(!e.partial.complete);

    let mut cfg = config(1, Route::Auto);
    cfg.eta = 1.5;
    assert!(matches!(build_measure(&p, &cfg).unwrap_err().error, Error::InvalidArgument(_)));
}
