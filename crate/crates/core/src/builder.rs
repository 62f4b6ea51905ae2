//! Stability-driven selection of the scales `M_k` and assembly of the stage
//! measures `d nu_k = h0 g_{M_1} ... g_{M_k} dx`.
//!
//! A stage keeps the coefficients `c(l)`, `0 <= l <= Xi + W`, of the periodic
//! product `g_{M_1} ... g_{M_k}`. Since `h0` is a factor,
//! `nu^(xi) = sum_l c(l) h0^(xi - l)`, and for `|xi| <= Xi` only `|xi - l| <= W`
//! matters up to the `h0^` tail. Coefficients come from one of two routes:
//! a series convolution when the product of the earlier factors fits the
//! bandwidth budget as a complete series, or exact quadrature over the
//! support cells otherwise.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bump::BumpSpec;
use crate::cells::Support;
use crate::density::{FactorSummary, GFactor};
use crate::error::{Error, Result};
use crate::profile::{scale_set_from, ApproximationProfile, BucketTable, SMode, ScaleSet};
use crate::series::{convolve, series_multiply, TruncatedFourierSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    #[default]
    Auto,
    Series,
    Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub eta: f64,
    pub eps: f64,
    pub stages: usize,
    pub xi_max: f64,
    pub samples_per_band: usize,
    pub tail_tol: f64,
    pub bandwidth_budget: u64,
    /// Half-width `W` of the `h0^` convolution window.
    pub kernel_window: usize,
    pub route: Route,
    pub k_max: Option<u32>,
    pub bump: BumpSpec,
}

impl BuildConfig {
    pub fn new(eta: f64, eps: f64, stages: usize) -> Self {
        Self {
            eta,
            eps,
            stages,
            xi_max: 65536.0,
            samples_per_band: 32,
            tail_tol: 1e-8,
            bandwidth_budget: 1 << 20,
            kernel_window: 256,
            route: Route::Auto,
            k_max: None,
            bump: BumpSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::invalid("eta must lie in (0, 1]"));
        }
        if !(self.eps > 0.0 && self.eps < self.eta) {
            return Err(Error::invalid("eps must lie in (0, eta)"));
        }
        if !(self.xi_max >= 2.0 && self.xi_max.is_finite()) {
            return Err(Error::invalid("xi_max must be >= 2"));
        }
        if !(self.tail_tol > 0.0) {
            return Err(Error::invalid("tail_tol must be positive"));
        }
        if self.samples_per_band == 0 || self.kernel_window == 0 || self.bandwidth_budget == 0 {
            return Err(Error::invalid("samples, window and budget must be positive"));
        }
        Ok(())
    }

    /// Largest lattice index stored by a stage.
    pub fn lattice_max(&self) -> usize {
        self.xi_max.ceil() as usize + self.kernel_window
    }

    pub fn weight(&self, xi: f64) -> f64 {
        (1.0 + xi.abs()).powf(self.eta - self.eps)
    }
}

/// `0` followed by `samples` log-uniform points in each band
/// `[2^j, 2^{j+1})` with `2^{j+1} <= xi_max`.
pub fn xi_grid(xi_max: f64, samples: usize) -> Vec<f64> {
    let bands = band_count(xi_max);
    let mut g = vec![0.0];
    for j in 0..bands {
        for i in 0..samples {
            g.push(2f64.powf(j as f64 + i as f64 / samples as f64));
        }
    }
    g
}

pub fn band_count(xi_max: f64) -> u32 {
    xi_max.log2().floor().max(0.0) as u32
}

/// `sum_{|xi - l| <= W} c(l) h0^(xi - l)`, with `c(-l) = conj c(l)` and
/// `half[l] = c(l)` for `0 <= l < half.len()`.
pub fn window_transform(half: &[Complex64], xi: f64, w: usize, spec: &BumpSpec) -> Complex64 {
    let lo = (xi - w as f64).ceil() as i64;
    let hi = (xi + w as f64).floor() as i64;
    let n = half.len() as i64;
    let mut acc = Complex64::new(0.0, 0.0);
    for l in lo..=hi {
        let c = if l >= 0 {
            if l >= n {
                continue;
            }
            half[l as usize]
        } else {
            if -l >= n {
                continue;
            }
            half[(-l) as usize].conj()
        };
        acc += c * spec.h0_hat(xi - l as f64);
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapRoute {
    /// `sum_l g^_M(l) h^(xi - l)` through the series of the earlier factors.
    Fourier,
    /// `int h0 g_{M_1}...g_{M_{k-1}} (g_M - 1) e(-xi x) dx` by quadrature.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub m: u64,
    pub gap: f64,
    pub gap_route: GapRoute,
    /// `gap` is only the `xi = 0` term, which already exceeded the threshold.
    pub lower_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub stage: usize,
    pub m: u64,
    pub gap: f64,
    pub threshold: Option<f64>,
    pub rest_route: Route,
    pub candidates: Vec<Candidate>,
    pub factor_size: usize,
    pub factor_coeff0: f64,
    pub support_pieces: usize,
    pub support_length: f64,
    pub mass: f64,
}

/// State of the construction after `stage` factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureStage {
    pub stage: usize,
    pub scales: Vec<u64>,
    pub gaps: Vec<f64>,
    pub c_stab: Option<f64>,
    pub eta: f64,
    pub eps: f64,
    pub bump: BumpSpec,
    pub xi_max: f64,
    pub kernel_window: usize,
    /// `c(l)` for `0 <= l <= lattice_max`, of the product of the
    /// `g_{M_i}`, divided by `mass` so that `nu^(0) = 1`.
    #[serde(skip)]
    pub coeffs: Vec<Complex64>,
    /// Absolute error allowance per stored coefficient (before scaling).
    pub coeff_error: f64,
    /// `int h0 g_{M_1} ... g_{M_k}`.
    pub mass: f64,
    pub factors: Vec<FactorSummary>,
    pub logs: Vec<StageLog>,
    pub complete: bool,
}

impl MeasureStage {
    /// `nu^(xi)` from the stored window.
    pub fn nu_hat(&self, xi: f64) -> Complex64 {
        window_transform(&self.coeffs, xi, self.kernel_window, &self.bump)
    }

    /// Bound on `|nu^(xi) - window sum|` for `|xi| <= xi_max`.
    pub fn window_error(&self) -> f64 {
        let c0 = self.coeffs.first().map_or(1.0, |c| c.norm());
        let per = self.coeff_error / self.mass.max(f64::MIN_POSITIVE);
        c0 * self.bump.h0_window_tail(self.kernel_window as f64)
            + per * (2 * self.kernel_window + 1) as f64
    }

    pub fn lattice_max(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }
}

/// Failure of a build with the stages completed so far.
#[derive(Debug)]
pub struct BuildError {
    pub error: Error,
    pub partial: Box<MeasureStage>,
}

impl std::fmt::Display for BuildError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} stages)", self.error, self.partial.stage)
    }
}

impl std::error::Error for BuildError {}

/// Everything known about `h0 g_{M_1} ... g_{M_{k-1}}`.
pub struct Prefix {
    pub factors: Vec<GFactor>,
    /// Support cells of `h0` times the factors.
    pub support: Support,
    /// `c(l)`, `0 <= l <= lattice_max`, unnormalized.
    pub rest: Vec<Complex64>,
    pub rest_error: f64,
    /// The product of the factors as a complete series, while it fits.
    pub full: Option<TruncatedFourierSeries>,
}

impl Prefix {
    pub fn h0(spec: &BumpSpec, lattice_max: usize) -> Self {
        let mut rest = vec![Complex64::new(0.0, 0.0); lattice_max + 1];
        rest[0] = Complex64::new(1.0, 0.0);
        Self {
            factors: Vec::new(),
            support: Support::h0(spec),
            rest,
            rest_error: 0.0,
            full: Some(TruncatedFourierSeries::constant(1.0)),
        }
    }

    fn series_feasible(&self, cfg: &BuildConfig) -> bool {
        match &self.full {
            Some(s) => {
                let need = (cfg.lattice_max() + 2 * s.half_bandwidth() + 1) as u64;
                need <= cfg.bandwidth_budget
            }
            None => false,
        }
    }
}

/// Window of `P * g^_M` for a complete prefix series `P`.
fn series_window(p: &TruncatedFourierSeries, g: &GFactor, lattice_max: usize) -> Vec<Complex64> {
    let lp = p.half_bandwidth() as i64;
    let gw = g.coefficients(-lp, lattice_max as i64 + lp);
    let conv = convolve(p.coeffs(), &gw);
    let off = 2 * lp as usize;
    let mut out = conv[off..=off + lattice_max].to_vec();
    out[0].im = 0.0;
    out
}

fn quadrature_window(support: &Support, lattice_max: usize) -> Vec<Complex64> {
    let mut out = support.fourier_lattice(lattice_max);
    out[0].im = 0.0;
    out
}

fn gap_from_difference(
    new: &[Complex64],
    old: &[Complex64],
    grid: &[f64],
    cfg: &BuildConfig,
) -> f64 {
    let diff: Vec<Complex64> = new.iter().zip(old).map(|(a, b)| a - b).collect();
    grid.par_iter()
        .map(|&xi| window_transform(&diff, xi, cfg.kernel_window, &cfg.bump).norm() * cfg.weight(xi))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max)
}

/// Direct gap, or only its `xi = 0` term when that already exceeds
/// `reject_above`. The flag reports which.
fn gap_direct(
    prefix: &Prefix,
    g: &GFactor,
    grid: &[f64],
    cfg: &BuildConfig,
    reject_above: Option<f64>,
) -> (f64, bool) {
    let refined = prefix.support.refine(g);
    let old0 = window_transform(&prefix.rest, 0.0, cfg.kernel_window, &cfg.bump);
    let at_zero = (refined.mass() - old0.re).abs();
    if reject_above.is_some_and(|t| at_zero > t) {
        return (at_zero, true);
    }
    let with = refined.fourier(grid);
    let without: Vec<Complex64> = grid
        .par_iter()
        .map(|&xi| window_transform(&prefix.rest, xi, cfg.kernel_window, &cfg.bump))
        .collect();
    let gap = grid
        .iter()
        .zip(with.iter().zip(&without))
        .map(|(&xi, (a, b))| (a - b).norm() * cfg.weight(xi))
        .fold(0.0, f64::max);
    (gap, false)
}

/// Weighted stability gap `max_xi |(g_M h)^(xi) - h^(xi)| (1 + |xi|)^{eta - eps}`
/// for `h = h0 times the prefix`. Also returns the new coefficient window when
/// the series route computed it on the way.
pub fn stability_gap(
    prefix: &Prefix,
    g: &GFactor,
    grid: &[f64],
    cfg: &BuildConfig,
) -> Result<(f64, GapRoute, Option<Vec<Complex64>>)> {
    let (gap, route, window, _) = stability_gap_against(prefix, g, grid, cfg, None)?;
    Ok((gap, route, window))
}

/// As [`stability_gap`], but the direct route may stop at `xi = 0` once the
/// gap is known to exceed `reject_above`; the last field says it did.
pub fn stability_gap_against(
    prefix: &Prefix,
    g: &GFactor,
    grid: &[f64],
    cfg: &BuildConfig,
    reject_above: Option<f64>,
) -> Result<(f64, GapRoute, Option<Vec<Complex64>>, bool)> {
    let use_series = match cfg.route {
        Route::Series => {
            if !prefix.series_feasible(cfg) {
                return Err(prefix_budget_error(prefix, cfg));
            }
            true
        }
        Route::Quadrature => false,
        Route::Auto => prefix.series_feasible(cfg),
    };
    if use_series {
        let p = prefix.full.as_ref().expect("feasible");
        let win = series_window(p, g, cfg.lattice_max());
        let gap = gap_from_difference(&win, &prefix.rest, grid, cfg);
        Ok((gap, GapRoute::Fourier, Some(win), false))
    } else {
        let (gap, partial) = gap_direct(prefix, g, grid, cfg, reject_above);
        Ok((gap, GapRoute::Direct, None, partial))
    }
}

fn prefix_budget_error(prefix: &Prefix, cfg: &BuildConfig) -> Error {
    let requested = prefix
        .full
        .as_ref()
        .map_or(u64::MAX, |s| (cfg.lattice_max() + 2 * s.half_bandwidth() + 1) as u64);
    Error::BandwidthExceeded {
        requested,
        budget: cfg.bandwidth_budget,
    }
}

/// Outcome of one scale search.
#[derive(Debug, Clone)]
pub struct Selection {
    pub m: u64,
    pub gap: f64,
    pub candidates: Vec<Candidate>,
    pub window: Option<Vec<Complex64>>,
    pub factor: GFactor,
}

/// Smallest `M` in the scale set with `M > 2 M_{k-1}` and gap at most
/// `delta * c_stab` (`c_stab = None` accepts the first candidate).
pub fn select_next_scale(
    prefix: &Prefix,
    profile: &ApproximationProfile,
    table: &BucketTable,
    scales: &ScaleSet,
    threshold: Option<f64>,
    grid: &[f64],
    cfg: &BuildConfig,
) -> Result<Selection> {
    let last = prefix.factors.last().map_or(0, |g| g.m);
    let mut candidates = Vec::new();
    for m in scales.scales().filter(|&m| m > 2 * last) {
        let bucket = table.bucket(m)?;
        let g = GFactor::from_bucket(profile, &bucket, cfg.bump)?;
        let (gap, gap_route, window, lower_bound) =
            stability_gap_against(prefix, &g, grid, cfg, threshold)?;
        candidates.push(Candidate {
            m,
            gap,
            gap_route,
            lower_bound,
        });
        if threshold.map_or(true, |t| gap <= t) {
            return Ok(Selection {
                m,
                gap,
                candidates,
                window,
                factor: g,
            });
        }
    }
    Err(Error::WindowExhausted {
        largest_tried: candidates.last().map(|c| c.m),
        gap: candidates.last().map(|c| c.gap),
    })
}

fn stage_from(prefix: &Prefix, cfg: &BuildConfig, logs: &[StageLog], c_stab: Option<f64>, complete: bool) -> MeasureStage {
    let mass = window_transform(&prefix.rest, 0.0, cfg.kernel_window, &cfg.bump).re;
    let coeffs = prefix.rest.iter().map(|c| c / mass).collect();
    MeasureStage {
        stage: prefix.factors.len(),
        scales: prefix.factors.iter().map(|g| g.m).collect(),
        gaps: logs.iter().map(|l| l.gap).collect(),
        c_stab,
        eta: cfg.eta,
        eps: cfg.eps,
        bump: cfg.bump,
        xi_max: cfg.xi_max,
        kernel_window: cfg.kernel_window,
        coeffs,
        coeff_error: prefix.rest_error,
        mass,
        factors: prefix.factors.iter().map(FactorSummary::from).collect(),
        logs: logs.to_vec(),
        complete,
    }
}

/// Scale set used by a build.
pub fn build_scales(profile: &ApproximationProfile, cfg: &BuildConfig) -> Result<(BucketTable, ScaleSet)> {
    let table = BucketTable::new(profile, cfg.eta)?;
    let s = profile
        .s_exponent(SMode::Analytic)
        .or_else(|_| profile.s_exponent(SMode::Empirical))?;
    let k_max = cfg.k_max.unwrap_or(62);
    let set = scale_set_from(&table, k_max, cfg.eta >= s.value);
    Ok((table, set))
}

/// Run the recursive construction for `cfg.stages` stages.
pub fn build_measure(profile: &ApproximationProfile, cfg: &BuildConfig) -> std::result::Result<MeasureStage, BuildError> {
    let lm = cfg.lattice_max();
    let mut prefix = Prefix::h0(&cfg.bump, lm);
    let mut logs: Vec<StageLog> = Vec::new();
    let mut c_stab: Option<f64> = None;
    let fail = |e: Error, prefix: &Prefix, logs: &[StageLog], c_stab| BuildError {
        error: e,
        partial: Box::new(stage_from(prefix, cfg, logs, c_stab, false)),
    };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, &prefix, &logs, c_stab));
    }
    let s = profile
        .s_exponent(SMode::Analytic)
        .or_else(|_| profile.s_exponent(SMode::Empirical))
        .map(|s| s.value);
    match s {
        Ok(s) => {
            if let Err(e) = cfg.bump.check_order(s) {
                return Err(fail(e, &prefix, &logs, c_stab));
            }
        }
        Err(e) => return Err(fail(e, &prefix, &logs, c_stab)),
    }
    let (table, scales) = match build_scales(profile, cfg) {
        Ok(v) => v,
        Err(e) => return Err(fail(e, &prefix, &logs, c_stab)),
    };
    let grid = xi_grid(cfg.xi_max, cfg.samples_per_band);
    for k in 1..=cfg.stages {
        let threshold = c_stab.map(|c| c * 0.5f64.powi(k as i32));
        let sel = match select_next_scale(&prefix, profile, &table, &scales, threshold, &grid, cfg) {
            Ok(s) => s,
            Err(e) => return Err(fail(e, &prefix, &logs, c_stab)),
        };
        if k == 1 {
            c_stab = Some(2.0 * sel.gap);
        }
        let support = prefix.support.refine(&sel.factor);
        let (rest, rest_route, rest_error) = match sel.window {
            Some(w) => {
                let t = prefix.full.as_ref().and_then(|p| p.tail_bound()).unwrap_or(0.0);
                (w, Route::Series, prefix.rest_error + t)
            }
            None => {
                let mut unit = Support::unit(&cfg.bump);
                for g in prefix.factors.iter().chain(std::iter::once(&sel.factor)) {
                    unit = unit.refine(g);
                }
                (quadrature_window(&unit, lm), Route::Quadrature, 1e-13)
            }
        };
        let full = match (&prefix.full, cfg.route) {
            (Some(p), Route::Auto | Route::Series) => sel
                .factor
                .series(cfg.tail_tol, cfg.bandwidth_budget)
                .and_then(|gs| series_multiply(p, &gs, cfg.bandwidth_budget))
                .ok(),
            _ => None,
        };
        let summary = FactorSummary::from(&sel.factor);
        prefix.factors.push(sel.factor);
        prefix.support = support;
        prefix.rest = rest;
        prefix.rest_error = rest_error;
        prefix.full = full;
        let mass = window_transform(&prefix.rest, 0.0, cfg.kernel_window, &cfg.bump).re;
        logs.push(StageLog {
            stage: k,
            m: sel.m,
            gap: sel.gap,
            threshold,
            rest_route,
            candidates: sel.candidates,
            factor_size: summary.size,
            factor_coeff0: summary.coeff0,
            support_pieces: prefix.support.piece_count(),
            support_length: prefix.support.length(),
            mass,
        });
    }
    Ok(stage_from(&prefix, cfg, &logs, c_stab, true))
}

/// Rebuild the factors and support cells of a stage from its profile.
pub fn stage_factors(profile: &ApproximationProfile, stage: &MeasureStage) -> Result<(Vec<GFactor>, Support)> {
    let table = BucketTable::new(profile, stage.eta)?;
    let mut support = Support::h0(&stage.bump);
    let mut factors = Vec::new();
    for &m in &stage.scales {
        let g = GFactor::from_bucket(profile, &table.bucket(m)?, stage.bump)?;
        support = support.refine(&g);
        factors.push(g);
    }
    Ok((factors, support))
}
