//! Build and analysis pipelines writing their artifacts to a directory.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{read_stage, write_decay_csv, write_stage, write_upper_bound_csv};
use crate::builder::{build_measure, stage_factors, BuildConfig, BuildError, MeasureStage};
use crate::cells::Support;
use crate::config::{Format, RunConfig};
use crate::decay::{
    borel_cantelli_report, decay_report, factor_witness, measure_of_aq,
    monte_carlo_measure_of_aq, predicted_dimension, DecayReport, UpperBoundReport,
};
use crate::density::GFactor;
use crate::error::Result;
use crate::profile::ApproximationProfile;

pub const STAGE_FILE: &str = "stage.fdim";
pub const BUILD_LOG_FILE: &str = "build_log.json";
pub const SUMMARY_FILE: &str = "summary.json";

/// Points of `(i + 1/2) / n` where the final density is positive, and how
/// many of them lack a witness at some stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportCheck {
    pub points: usize,
    pub positive: usize,
    pub failures: usize,
    pub first_failure: Option<f64>,
}

pub fn support_check(factors: &[GFactor], support: &Support, n: usize) -> SupportCheck {
    let rows: Vec<(bool, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = (i as f64 + 0.5) / n as f64;
            let positive = support.density(x) > 0.0;
            let ok = !positive || factors.iter().all(|g| factor_witness(g, x).is_some());
            (positive, ok)
        })
        .collect();
    SupportCheck {
        points: n,
        positive: rows.iter().filter(|r| r.0).count(),
        failures: rows.iter().filter(|r| !r.1).count(),
        first_failure: rows
            .iter()
            .position(|r| !r.1)
            .map(|i| (i as f64 + 0.5) / n as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloCheck {
    pub q: u64,
    pub exact: f64,
    pub monte_carlo: f64,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub stage: usize,
    pub scales: Vec<u64>,
    pub fitted_slope: f64,
    pub target_exponent: f64,
    pub predicted_dimension: f64,
    pub nu_hat_zero: f64,
    pub window_error: f64,
    pub support: SupportCheck,
    pub upper_bound_constant: f64,
    pub upper_bound_s: f64,
    pub series_partial: f64,
    pub monte_carlo: Option<MonteCarloCheck>,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub decay: DecayReport,
    pub upper: UpperBoundReport,
    pub summary: Summary,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, v: &T) -> Result<PathBuf> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    w.flush()?;
    Ok(dir.join(name))
}

/// Persist a stage and its per-stage log.
pub fn save_stage(dir: &Path, stage: &MeasureStage) -> Result<PathBuf> {
    write_stage(stage, create(dir, STAGE_FILE)?)?;
    write_json(dir, BUILD_LOG_FILE, &stage.logs)?;
    Ok(dir.join(STAGE_FILE))
}

pub fn load_stage(path: &Path) -> Result<MeasureStage> {
    read_stage(BufReader::new(File::open(path)?))
}

/// Build and persist. On failure the partial stage is still written.
pub fn run_build(cfg: &RunConfig) -> std::result::Result<MeasureStage, BuildError> {
    let wrap = |e| BuildError {
        error: e,
        partial: Box::new(empty_stage(cfg)),
    };
    let profile = cfg.profile().map_err(wrap)?;
    let bc: BuildConfig = cfg.build_config(&profile).map_err(wrap)?;
    match build_measure(&profile, &bc) {
        Ok(stage) => {
            save_stage(&cfg.output_dir, &stage).map_err(wrap)?;
            Ok(stage)
        }
        Err(e) => {
            // Best effort: the build error is the one worth reporting.
            let _ = save_stage(&cfg.output_dir, &e.partial);
            Err(e)
        }
    }
}

fn empty_stage(cfg: &RunConfig) -> MeasureStage {
    MeasureStage {
        stage: 0,
        scales: Vec::new(),
        gaps: Vec::new(),
        c_stab: None,
        eta: cfg.eta.unwrap_or(f64::NAN),
        eps: cfg.eps,
        bump: cfg.bump,
        xi_max: cfg.xi_max,
        kernel_window: cfg.kernel_window,
        coeffs: Vec::new(),
        coeff_error: 0.0,
        mass: 0.0,
        factors: Vec::new(),
        logs: Vec::new(),
        complete: false,
    }
}

/// All reports for a stage, without touching the filesystem.
pub fn analyze(stage: &MeasureStage, profile: &ApproximationProfile, cfg: &RunConfig) -> Result<Analysis> {
    let dim = predicted_dimension(profile)?;
    let decay = decay_report(stage, cfg.xi_max, cfg.samples_per_band, dim);
    let (factors, support) = stage_factors(profile, stage)?;
    let mass = support.mass();
    let s = cfg.bc_s_for(profile)?;
    let upper = borel_cantelli_report(&support, mass, profile, s, cfg.eps, cfg.bc_n_max);
    let check = support_check(&factors, &support, 1usize << cfg.support_grid);
    let monte_carlo = upper.per_q.first().map(|row| MonteCarloCheck {
        q: row.q,
        exact: measure_of_aq(&support, mass, profile, row.q),
        monte_carlo: monte_carlo_measure_of_aq(
            &support,
            mass,
            profile,
            row.q,
            cfg.mc_samples,
            cfg.seed,
        ),
        samples: cfg.mc_samples,
        seed: cfg.seed,
    });
    let summary = Summary {
        stage: stage.stage,
        scales: stage.scales.clone(),
        fitted_slope: decay.fitted_slope,
        target_exponent: decay.target_exponent,
        predicted_dimension: dim,
        nu_hat_zero: decay.nu_hat_zero,
        window_error: decay.window_error,
        support: check,
        upper_bound_constant: upper.constant,
        upper_bound_s: s,
        series_partial: upper.series_partial,
        monte_carlo,
    };
    Ok(Analysis {
        decay,
        upper,
        summary,
    })
}

/// Analyze a stage file and write the reports next to the configured
/// output directory. Returns the written paths.
pub fn run_analyze(stage_file: &Path, cfg: &RunConfig) -> Result<(Analysis, Vec<PathBuf>)> {
    let stage = load_stage(stage_file)?;
    let profile = cfg.profile()?;
    let a = analyze(&stage, &profile, cfg)?;
    let dir = &cfg.output_dir;
    let mut paths = Vec::new();
    match cfg.format {
        Format::Json => {
            paths.push(write_json(dir, "decay.json", &a.decay)?);
            paths.push(write_json(dir, "upper_bound.json", &a.upper)?);
        }
        Format::Csv => {
            let mut w = create(dir, "decay.csv")?;
            write_decay_csv(&a.decay, &mut w)?;
            w.flush()?;
            paths.push(dir.join("decay.csv"));
            let mut w = create(dir, "upper_bound.csv")?;
            write_upper_bound_csv(&a.upper, &mut w)?;
            w.flush()?;
            paths.push(dir.join("upper_bound.csv"));
        }
    }
    paths.push(write_json(dir, SUMMARY_FILE, &a.summary)?);
    Ok((a, paths))
}
