//! Run configuration shared by the CLI subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::builder::{BuildConfig, Route};
use crate::bump::BumpSpec;
use crate::error::{Error, Result};
use crate::profile::{default_eta, ApproximationProfile, ProfileSpec, SMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(Error::invalid(format!("unknown format {s:?}"))),
        }
    }
}

fn d_eps() -> f64 {
    0.05
}
fn d_stages() -> usize {
    3
}
fn d_xi_max() -> f64 {
    65536.0
}
fn d_samples() -> usize {
    32
}
fn d_tail_tol() -> f64 {
    1e-8
}
fn d_budget() -> u64 {
    1 << 20
}
fn d_window() -> usize {
    256
}
fn d_output() -> PathBuf {
    PathBuf::from("out")
}
fn d_seed() -> u64 {
    20240601
}
fn d_bc_n_max() -> u64 {
    500
}
fn d_support_grid() -> u32 {
    14
}
fn d_mc_samples() -> usize {
    200_000
}

/// A complete experiment description. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: ProfileSpec,
    /// Defaults to `0.9 s(psi)`.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "d_eps")]
    pub eps: f64,
    #[serde(default = "d_stages")]
    pub stages: usize,
    #[serde(default = "d_xi_max")]
    pub xi_max: f64,
    #[serde(default = "d_samples")]
    pub samples_per_band: usize,
    #[serde(default = "d_tail_tol")]
    pub tail_tol: f64,
    #[serde(default = "d_budget")]
    pub bandwidth_budget: u64,
    #[serde(default = "d_window")]
    pub kernel_window: usize,
    #[serde(default)]
    pub route: Route,
    #[serde(default)]
    pub k_max: Option<u32>,
    #[serde(default)]
    pub bump: BumpSpec,
    #[serde(default = "d_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub format: Format,
    /// Worker threads; all cores when absent.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "d_seed")]
    pub seed: u64,
    /// Exponent `s` of the upper-bound comparison, `s(psi) + 2 eps` when absent.
    #[serde(default)]
    pub bc_s: Option<f64>,
    #[serde(default = "d_bc_n_max")]
    pub bc_n_max: u64,
    /// `log2` of the support-check grid size.
    #[serde(default = "d_support_grid")]
    pub support_grid: u32,
    #[serde(default = "d_mc_samples")]
    pub mc_samples: usize,
}

impl RunConfig {
    pub fn new(profile: ProfileSpec) -> Self {
        serde_json::from_value(serde_json::json!({ "profile": profile }))
            .expect("defaults deserialize")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.eps, self.xi_max, self.tail_tol];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if let Some(e) = self.eta {
            if !(e > 0.0) {
                return Err(Error::invalid("eta must be positive"));
            }
        }
        if self.support_grid > 24 {
            return Err(Error::invalid("support_grid is a log2 size, at most 24"));
        }
        Ok(())
    }

    pub fn profile(&self) -> Result<ApproximationProfile> {
        ApproximationProfile::new(self.profile.clone())
    }

    fn s_value(profile: &ApproximationProfile) -> Result<(f64, bool)> {
        match profile.s_exponent(SMode::Analytic) {
            Ok(s) => Ok((s.value, true)),
            Err(_) => Ok((profile.s_exponent(SMode::Empirical)?.value, false)),
        }
    }

    pub fn eta_for(&self, profile: &ApproximationProfile) -> Result<f64> {
        match self.eta {
            Some(e) => Ok(e),
            None => Ok(default_eta(Self::s_value(profile)?.0)),
        }
    }

    pub fn bc_s_for(&self, profile: &ApproximationProfile) -> Result<f64> {
        match self.bc_s {
            Some(s) => Ok(s),
            None => Ok(Self::s_value(profile)?.0 + 2.0 * self.eps),
        }
    }

    /// Warnings about parameter choices outside the intended regime.
    pub fn warnings(&self, profile: &ApproximationProfile) -> Result<Vec<String>> {
        let (s, analytic) = Self::s_value(profile)?;
        let eta = self.eta_for(profile)?;
        let mut out = Vec::new();
        if eta >= s {
            out.push(format!("eta = {eta} is not below s(psi) = {s}"));
        }
        if !analytic {
            out.push(format!("s(psi) = {s} is an empirical estimate"));
        }
        Ok(out)
    }

    pub fn build_config(&self, profile: &ApproximationProfile) -> Result<BuildConfig> {
        let mut b = BuildConfig::new(self.eta_for(profile)?, self.eps, self.stages);
        b.xi_max = self.xi_max;
        b.samples_per_band = self.samples_per_band;
        b.tail_tol = self.tail_tol;
        b.bandwidth_budget = self.bandwidth_budget;
        b.kernel_window = self.kernel_window;
        b.route = self.route;
        b.k_max = self.k_max;
        b.bump = self.bump;
        Ok(b)
    }
}
