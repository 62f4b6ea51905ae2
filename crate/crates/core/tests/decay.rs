use std::sync::OnceLock;

use fdim_core::builder::{build_measure, stage_factors, BuildConfig, MeasureStage};
use fdim_core::cells::Support;
use fdim_core::decay::*;
use fdim_core::density::GFactor;
use fdim_core::profile::*;

fn small_profile() -> ApproximationProfile {
    power_law_profile(2.0, 2, 20_000, 0.3, CoprimeRule::Homogeneous).unwrap()
}

fn small_config(stages: usize) -> BuildConfig {
    let mut c = BuildConfig::new(0.3, 0.05, stages);
    c.xi_max = 4096.0;
    c
}

struct Built {
    profile: ApproximationProfile,
    stage: MeasureStage,
    factors: Vec<GFactor>,
    support: Support,
}

fn built(stages: usize) -> &'static Built {
    static ONE: OnceLock<Built> = OnceLock::new();
    static TWO: OnceLock<Built> = OnceLock::new();
    let cell = if stages == 1 { &ONE } else { &TWO };
    cell.get_or_init(|| {
        let profile = small_profile();
        let stage = build_measure(&profile, &small_config(stages)).unwrap();
        let (factors, support) = stage_factors(&profile, &stage).unwrap();
        Built {
            profile,
            stage,
            factors,
            support,
        }
    })
}

#[test]
fn h0_alone_decays_at_bump_order() {
    let p = small_profile();
    let stage = build_measure(&p, &small_config(0)).unwrap();
    assert_eq!(stage.stage, 0);
    let r = decay_report(&stage, 4096.0, 32, 2.0 / 3.0);
    assert!((r.nu_hat_zero - 1.0).abs() < 1e-12);
    let k = stage.bump.k as f64;
    assert!(r.fitted_slope <= -k + 1.0, "slope {}", r.fitted_slope);
    assert!(r.bands.iter().all(|b| b.sup_abs >= 0.0 && b.certified));
}

#[test]
fn normalized_and_bounded() {
    let b = built(2);
    let st = &b.stage;
    assert!((st.nu_hat(0.0).re - 1.0).abs() < 1e-9);
    let tail = st.window_error();
    for i in 0..2000 {
        let xi = i as f64 * 2.049;
        let v = st.nu_hat(xi);
        assert!(v.norm() <= 1.0 + tail + 1e-9, "xi {xi}: {v}");
        let w = st.nu_hat(-xi);
        assert!((v.conj() - w).norm() < 1e-12);
    }
}

#[test]
fn decay_bands_cover_and_flag_uncertified() {
    let b = built(2);
    let r = decay_report(&b.stage, 16384.0, 8, 2.0 / 3.0);
    assert_eq!(r.bands.len(), 14);
    assert_eq!(r.bands[0].lo, 1.0);
    assert_eq!(r.bands.last().unwrap().hi, 16384.0);
    for band in &r.bands {
        assert_eq!(band.certified, band.hi <= 4096.0, "band {}", band.j);
    }
    assert!((r.target_exponent - 0.25).abs() < 1e-12);
}

#[test]
fn witnesses_at_centers_and_refusals_off_support() {
    let b = built(2);
    // Midpoint of the widest support piece.
    let (lo, hi) = b.support.intervals().max_by(|x, y| (x.1 - x.0).total_cmp(&(y.1 - y.0))).unwrap();
    let x = 0.5 * (lo + hi);
    let w = support_witnesses(&b.factors, &b.support, x, 0.0);
    assert_eq!(w.len(), 2);
    for (wi, g) in w.iter().zip(&b.factors) {
        match *wi {
            Witness::Found { m, q, p } => {
                assert_eq!(m, g.m);
                assert!(g.terms.iter().any(|t| t.q == q));
                let (a, bb) = b.profile.pair(q);
                assert!(fdim_core::arith::is_admissible(p as i64, q, a, bb));
                let c = (p as f64 + b.profile.theta(q)) / q as f64;
                let d = (x - c).rem_euclid(1.0).min((c - x).rem_euclid(1.0));
                assert!(d < b.profile.psi(q) / q as f64);
            }
            Witness::BelowTruncation => panic!("no witness at {x}"),
        }
    }
    // A point of zero density.
    let off = (1u32..1000)
        .map(|i| i as f64 / 1000.0)
        .find(|&x| b.support.density(x) == 0.0)
        .unwrap();
    assert!(support_witnesses(&b.factors, &b.support, off, 0.0)
        .iter()
        .all(|w| *w == Witness::BelowTruncation));
}

#[test]
fn witnesses_on_every_sampled_support_point() {
    let b = built(2);
    let mut checked = 0;
    for (lo, hi) in b.support.intervals() {
        for t in [0.1, 0.5, 0.9] {
            let x = lo + t * (hi - lo);
            if b.support.density(x) > 0.0 {
                checked += 1;
                for g in &b.factors {
                    assert!(factor_witness(g, x).is_some(), "x = {x}, M = {}", g.m);
                }
            }
        }
    }
    assert!(checked > 100);
}

#[test]
fn aq_measure_limits() {
    // psi = 1/2 - 1e-9 with every residue admissible: the arcs tile the circle.
    let n = 30;
    let spec = ProfileSpec {
        psi: PsiSpec::Table {
            values: vec![0.5 - 1e-9; n],
        },
        theta: ThetaSpec::Constant { value: 0.3 },
        coprime: CoprimeRule::OneQ,
        q_set: QSet::All,
        window: [2, n as u64 + 1],
    };
    let p = ApproximationProfile::new(spec).unwrap();
    let b = built(1);
    let mass = b.support.mass();
    for q in [2u64, 7, 30] {
        let v = measure_of_aq(&b.support, mass, &p, q);
        assert!((v - 1.0).abs() < 1e-6, "q = {q}: {v}");
    }
    // psi = 0 gives the empty union.
    let zero = ApproximationProfile::new(ProfileSpec {
        psi: PsiSpec::Table { values: vec![0.0; n] },
        theta: ThetaSpec::Constant { value: 0.3 },
        coprime: CoprimeRule::Homogeneous,
        q_set: QSet::All,
        window: [2, n as u64 + 1],
    })
    .unwrap();
    assert_eq!(measure_of_aq(&b.support, mass, &zero, 5), 0.0);
    let r = borel_cantelli_report(&b.support, mass, &zero, 0.5, 0.05, 500);
    assert!(r.per_q.is_empty());
    assert_eq!(r.series_partial, 0.0);
    assert_eq!(predicted_dimension(&zero).unwrap(), 0.0);
}

#[test]
fn aq_measure_matches_monte_carlo() {
    let b = built(1);
    let mass = b.support.mass();
    for q in [2u64, 3, 11] {
        let exact = measure_of_aq(&b.support, mass, &b.profile, q);
        let mc = monte_carlo_measure_of_aq(&b.support, mass, &b.profile, q, 2_000_000, 7);
        assert!((exact - mc).abs() < 1e-4, "q = {q}: {exact} vs {mc}");
    }
}

#[test]
fn aq_measures_are_subprobabilities() {
    let b = built(2);
    let mass = b.support.mass();
    let tail = b.stage.window_error();
    for q in 2..=300 {
        let v = measure_of_aq(&b.support, mass, &b.profile, q);
        assert!((0.0..=1.0 + tail).contains(&v), "q = {q}: {v}");
    }
}

#[test]
fn upper_bound_report_shape() {
    let b = built(2);
    let mass = b.support.mass();
    let r = borel_cantelli_report(&b.support, mass, &b.profile, 1.0 / 3.0 + 0.1, 0.05, 200);
    assert_eq!(r.per_q.len(), 199);
    let mut partial = 0.0;
    for row in &r.per_q {
        partial += row.nu_aq;
        assert!((row.partial - partial).abs() < 1e-12);
        assert!(row.nu_aq <= r.constant * row.bound * (1.0 + 1e-12));
    }
    assert!((r.series_partial - partial).abs() < 1e-12);
}

#[test]
fn predicted_dimensions() {
    let p = |tau| power_law_profile(tau, 3, 1000, 0.0, CoprimeRule::Homogeneous).unwrap();
    assert_eq!(predicted_dimension(&p(2.0)).unwrap(), 2.0 / 3.0);
    assert_eq!(predicted_dimension(&p(1.0)).unwrap(), 1.0);
}
