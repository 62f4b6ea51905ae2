//! Analysis of constructed stages: dyadic-band suprema of `|nu^|`, support
//! witnesses, `nu(A_q)` and the Borel-Cantelli side.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{coprime_density, is_admissible};
use crate::builder::{band_count, MeasureStage};
use crate::cells::Support;
use crate::density::GFactor;
use crate::error::Result;
use crate::profile::{least_squares_slope, ApproximationProfile, SMode};

/// Bands used by the slope fit: `j` from this index to the last band.
pub const FIT_FIRST_BAND: u32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub j: u32,
    pub lo: f64,
    pub hi: f64,
    pub sup_abs: f64,
    pub samples: usize,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub stage: usize,
    pub bands: Vec<Band>,
    /// Least-squares slope of `ln sup` against `ln 2^j`.
    pub fitted_slope: f64,
    pub fit_bands: (u32, u32),
    pub target_exponent: f64,
    pub predicted_dimension: f64,
    pub nu_hat_zero: f64,
    pub window_error: f64,
}

/// Band suprema of `|nu^|` over `samples_per_band` log-uniform points and
/// every integer in each band `[2^j, 2^{j+1})`, `2^{j+1} <= xi_max`.
pub fn decay_report(
    stage: &MeasureStage,
    xi_max: f64,
    samples_per_band: usize,
    predicted_dimension: f64,
) -> DecayReport {
    let bands_n = band_count(xi_max);
    let bands: Vec<Band> = (0..bands_n)
        .into_par_iter()
        .map(|j| {
            let lo = 2f64.powi(j as i32);
            let hi = 2.0 * lo;
            let mut pts: Vec<f64> = (0..samples_per_band)
                .map(|i| 2f64.powf(j as f64 + i as f64 / samples_per_band as f64))
                .collect();
            pts.extend((lo as u64..hi as u64).map(|l| l as f64));
            let sup_abs = pts
                .iter()
                .map(|&xi| stage.nu_hat(xi).norm())
                .fold(0.0, f64::max);
            Band {
                j,
                lo,
                hi,
                sup_abs,
                samples: pts.len(),
                certified: hi <= stage.xi_max,
            }
        })
        .collect();
    let last = bands_n.saturating_sub(1);
    let pts: Vec<(f64, f64)> = bands
        .iter()
        .filter(|b| {
            b.j >= FIT_FIRST_BAND && b.certified && b.samples >= samples_per_band && b.sup_abs > 0.0
        })
        .map(|b| (b.j as f64 * std::f64::consts::LN_2, b.sup_abs.ln()))
        .collect();
    let fitted_slope = if pts.len() >= 2 {
        least_squares_slope(&pts)
    } else {
        f64::NAN
    };
    DecayReport {
        stage: stage.stage,
        bands,
        fitted_slope,
        fit_bands: (FIT_FIRST_BAND, last),
        target_exponent: stage.eta - stage.eps,
        predicted_dimension,
        nu_hat_zero: stage.nu_hat(0.0).re,
        window_error: stage.window_error(),
    }
}

/// `min(2 s(psi), 1)`, analytic where available.
pub fn predicted_dimension(profile: &ApproximationProfile) -> Result<f64> {
    let s = profile
        .s_exponent(SMode::Analytic)
        .or_else(|_| profile.s_exponent(SMode::Empirical))?;
    Ok((2.0 * s.value).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// `q` in the stage bucket and `p` in `I_q` with `|x - (p + theta)/q| < psi/q` mod 1.
    Found { m: u64, q: u64, p: u64 },
    /// The density at `x` does not exceed the truncation allowance.
    BelowTruncation,
}

fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// A witness for `x` in the approximation set of one factor, if any.
pub fn factor_witness(g: &GFactor, x: f64) -> Option<(u64, u64)> {
    g.terms.iter().find_map(|t| {
        let q = t.q as f64;
        let p0 = (q * x - t.theta).round() as i64;
        (p0 - 1..=p0 + 1).find_map(|p| {
            let c = (p as f64 + t.theta) / q;
            (is_admissible(p, t.q, t.a, t.b) && circle_distance(x, c) < t.psi / q)
                .then(|| (t.q, p.rem_euclid(t.q as i64) as u64))
        })
    })
}

/// Per-factor witnesses for `x`, or refusals where the stage density at `x`
/// is at most `allowance`.
pub fn support_witnesses(
    factors: &[GFactor],
    support: &Support,
    x: f64,
    allowance: f64,
) -> Vec<Witness> {
    if support.density(x.rem_euclid(1.0)) <= allowance {
        return vec![Witness::BelowTruncation; factors.len()];
    }
    factors
        .iter()
        .map(|g| match factor_witness(g, x) {
            Some((q, p)) => Witness::Found { m: g.m, q, p },
            None => Witness::BelowTruncation,
        })
        .collect()
}

/// Arcs `((p + theta)/q - psi/q, (p + theta)/q + psi/q)` for `p` in `I_q`
/// meeting `(lo, hi)`, unfolded onto the real line.
pub fn aq_arcs(profile: &ApproximationProfile, q: u64, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let psi = profile.psi(q);
    if psi <= 0.0 {
        return Vec::new();
    }
    let (a, b) = profile.pair(q);
    let theta = profile.theta(q);
    let qf = q as f64;
    let r = psi / qf;
    let p_lo = (qf * (lo - r) - theta).ceil() as i64;
    let p_hi = (qf * (hi + r) - theta).floor() as i64;
    (p_lo..=p_hi)
        .filter(|&p| is_admissible(p, q, a, b))
        .map(|p| {
            let c = (p as f64 + theta) / qf;
            (c - r, c + r)
        })
        .filter(|&(s, e)| e > lo && s < hi)
        .collect()
}

/// `nu(A_q)` for the normalized stage measure with support cells `support`.
pub fn measure_of_aq(support: &Support, mass: f64, profile: &ApproximationProfile, q: u64) -> f64 {
    if profile.psi(q) <= 0.0 {
        return 0.0;
    }
    support.mass_within(|lo, hi| aq_arcs(profile, q, lo, hi)) / mass + 0.0
}

/// Monte-Carlo estimate of `nu(A_q)`: one uniform point in each of `samples`
/// equal-length strata of the support.
pub fn monte_carlo_measure_of_aq(
    support: &Support,
    mass: f64,
    profile: &ApproximationProfile,
    q: u64,
    samples: usize,
    seed: u64,
) -> f64 {
    let lens: Vec<f64> = support.intervals().map(|(a, b)| b - a).collect();
    let total: f64 = lens.iter().sum();
    if total == 0.0 || samples == 0 {
        return 0.0;
    }
    let mut cum = Vec::with_capacity(lens.len());
    let mut acc = 0.0;
    for l in &lens {
        acc += l;
        cum.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    for n in 0..samples {
        let u = (n as f64 + rng.gen::<f64>()) * total / samples as f64;
        let i = cum.partition_point(|&c| c <= u).min(lens.len() - 1);
        let (a, b) = support.piece_bounds(i);
        let before = if i == 0 { 0.0 } else { cum[i - 1] };
        let x = (a + (u - before)).clamp(a, b);
        let inside = aq_arcs(profile, q, x, x).iter().any(|&(s, e)| x > s && x < e);
        if inside {
            sum += support.density(x);
        }
    }
    total * sum / samples as f64 / mass
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundRow {
    pub q: u64,
    pub nu_aq: f64,
    pub bound: f64,
    pub ratio: f64,
    pub partial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundReport {
    pub s: f64,
    pub eps: f64,
    pub per_q: Vec<UpperBoundRow>,
    /// `max nu(A_q) / bound`.
    pub constant: f64,
    pub series_partial: f64,
    pub bound_partial: f64,
}

impl UpperBoundReport {
    /// Largest single increment of the measured partial sums past `q0`.
    pub fn max_increment_after(&self, q0: u64) -> f64 {
        self.per_q
            .iter()
            .filter(|r| r.q > q0)
            .map(|r| r.nu_aq)
            .fold(0.0, f64::max)
    }

    pub fn max_bound_increment_after(&self, q0: u64) -> f64 {
        self.per_q
            .iter()
            .filter(|r| r.q > q0)
            .map(|r| r.bound)
            .fold(0.0, f64::max)
    }
}

/// `nu(A_q)` against `2 psi(q) prod(1 - 1/p) + (psi(q)/q)^{s - eps}` for
/// `q <= n_max`.
pub fn borel_cantelli_report(
    support: &Support,
    mass: f64,
    profile: &ApproximationProfile,
    s: f64,
    eps: f64,
    n_max: u64,
) -> UpperBoundReport {
    let qs: Vec<u64> = profile
        .members()
        .take_while(|&q| q <= n_max)
        .filter(|&q| profile.psi(q) > 0.0)
        .collect();
    let vals: Vec<(f64, f64)> = qs
        .par_iter()
        .map(|&q| {
            let psi = profile.psi(q);
            let d = coprime_density(q, profile.pair(q).1).expect("q >= 1");
            let dens = *d.numer() as f64 / *d.denom() as f64;
            let bound = 2.0 * psi * dens + (psi / q as f64).powf(s - eps);
            (measure_of_aq(support, mass, profile, q), bound)
        })
        .collect();
    let mut partial = 0.0;
    let mut bound_partial = 0.0;
    let mut constant: f64 = 0.0;
    let per_q = qs
        .iter()
        .zip(vals)
        .map(|(&q, (nu, bound))| {
            partial += nu;
            bound_partial += bound;
            let ratio = nu / bound;
            constant = constant.max(ratio);
            UpperBoundRow {
                q,
                nu_aq: nu,
                bound,
                ratio,
                partial,
            }
        })
        .collect();
    UpperBoundReport {
        s,
        eps,
        per_q,
        constant,
        series_partial: partial,
        bound_partial,
    }
}
