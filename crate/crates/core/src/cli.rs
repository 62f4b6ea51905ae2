//! The `fdim` command line.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::arith::{ramanujan_sum_bruteforce, ramanujan_sum_divisor, residue_set};
use crate::builder::{build_scales, Route};
use crate::config::{Format, RunConfig};
use crate::error::Error;
use crate::run::{run_analyze, run_build, STAGE_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_WINDOW: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::NotCoprime { .. } | Error::NoAdmissibleScale { .. } => {
            EXIT_USAGE
        }
        Error::WindowExhausted { .. } => EXIT_WINDOW,
        Error::BandwidthExceeded { .. } => EXIT_BUDGET,
        Error::WindowedOperand | Error::Format(_) | Error::Io(_) | Error::Json(_) => EXIT_IO,
    }
}

#[derive(Debug, Parser)]
#[command(name = "fdim", version, about = "Fourier-decay measures on well-approximable sets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Brute,
    Divisor,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RouteArg {
    Auto,
    Series,
    Quadrature,
}

/// Flags overriding config keys of the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub stages: Option<usize>,
    #[arg(long)]
    pub xi_max: Option<f64>,
    #[arg(long)]
    pub samples_per_band: Option<usize>,
    #[arg(long)]
    pub tail_tol: Option<f64>,
    #[arg(long)]
    pub bandwidth_budget: Option<u64>,
    #[arg(long)]
    pub kernel_window: Option<usize>,
    #[arg(long, value_enum)]
    pub route: Option<RouteArg>,
    #[arg(long)]
    pub k_max: Option<u32>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, value_parser = ["json", "csv"])]
    pub format: Option<String>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub bc_s: Option<f64>,
    #[arg(long)]
    pub bc_n_max: Option<u64>,
    #[arg(long)]
    pub support_grid: Option<u32>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, c: &mut RunConfig) -> crate::Result<()> {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f.clone() { c.$f = v; })* };
        }
        set!(eps, stages, xi_max, samples_per_band, tail_tol, bandwidth_budget, kernel_window);
        set!(output_dir, seed, bc_n_max, support_grid, mc_samples);
        if self.eta.is_some() {
            c.eta = self.eta;
        }
        if self.k_max.is_some() {
            c.k_max = self.k_max;
        }
        if self.threads.is_some() {
            c.threads = self.threads;
        }
        if self.bc_s.is_some() {
            c.bc_s = self.bc_s;
        }
        if let Some(r) = self.route {
            c.route = match r {
                RouteArg::Auto => Route::Auto,
                RouteArg::Series => Route::Series,
                RouteArg::Quadrature => Route::Quadrature,
            };
        }
        if let Some(f) = &self.format {
            c.format = f.parse::<Format>()?;
        }
        c.validate()
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generalized Ramanujan sum S(q, k) for the residue set of (a, b).
    Ramanujan {
        q: u64,
        #[arg(allow_hyphen_values = true)]
        k: i64,
        #[arg(allow_hyphen_values = true)]
        a: i64,
        b: u64,
        #[arg(long, value_enum, default_value = "divisor")]
        method: Method,
    },
    /// Admissible numerators modulo q and both cardinality computations.
    Residues {
        q: u64,
        #[arg(allow_hyphen_values = true)]
        a: i64,
        b: u64,
    },
    /// Dyadic bucket table, nonempty buckets only.
    Buckets {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, default_value_t = 1)]
        k_min: u32,
        #[arg(long)]
        k_max: Option<u32>,
    },
    /// Run the construction and write the stage artifact.
    Build {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Decay and upper-bound reports for a stage artifact.
    Analyze {
        /// Defaults to the stage file in the output directory.
        #[arg(long)]
        stage: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn fmt_complex(re: f64, im: f64) -> String {
    let clean = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
    let (re, im) = (clean(re), clean(im));
    if im == 0.0 {
        format!("{re}")
    } else {
        format!("{re}{:+}i", im)
    }
}

fn load(path: &PathBuf, o: Option<&Overrides>) -> crate::Result<RunConfig> {
    let mut c = RunConfig::load(path)?;
    if let Some(o) = o {
        o.apply(&mut c)?;
    }
    if let Some(n) = c.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(c)
}

/// Run a parsed command, writing to `out` and `err`. Returns the exit code.
pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match dispatch(cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> crate::Result<()> {
    match cli.command {
        Command::Ramanujan { q, k, a, b, method } => {
            let brute = || ramanujan_sum_bruteforce(q, k, a, b);
            let div = || ramanujan_sum_divisor(q, k, a, b);
            match method {
                Method::Brute => {
                    let v = brute()?;
                    writeln!(out, "{}", fmt_complex(v.re, v.im))?;
                }
                Method::Divisor => {
                    let v = div()?;
                    writeln!(out, "{}", fmt_complex(v.re, v.im))?;
                }
                Method::Both => {
                    let (x, y) = (brute()?, div()?);
                    writeln!(out, "brute   {}", fmt_complex(x.re, x.im))?;
                    writeln!(out, "divisor {}", fmt_complex(y.re, y.im))?;
                    writeln!(out, "diff    {:e}", (x - y).norm())?;
                }
            }
        }
        Command::Residues { q, a, b } => {
            let set = residue_set(q, a, b)?;
            let members: Vec<String> = set.members.iter().map(u64::to_string).collect();
            let formula = set.cardinality_formula();
            writeln!(out, "{{{}}}", members.join(","))?;
            writeln!(out, "enum={}", set.len())?;
            writeln!(out, "formula={}", formula)?;
        }
        Command::Buckets {
            config,
            eta,
            k_min,
            k_max,
        } => {
            let mut c = load(&config, None)?;
            if eta.is_some() {
                c.eta = eta;
            }
            if k_max.is_some() {
                c.k_max = k_max;
            }
            let profile = c.profile()?;
            for w in c.warnings(&profile)? {
                writeln!(err, "warning: {w}")?;
            }
            let (_, set) = build_scales(&profile, &c.build_config(&profile)?)?;
            writeln!(out, "k,M,size,mass,qualifies,size_ratio")?;
            for r in set.rows.iter().filter(|r| r.k >= k_min && r.size > 0) {
                writeln!(
                    out,
                    "{},{},{},{:e},{},{:e}",
                    r.k, r.m, r.size, r.bucket_mass, r.qualifies, r.size_ratio
                )?;
            }
        }
        Command::Build { config, overrides } => {
            let c = load(&config, Some(&overrides))?;
            let profile = c.profile()?;
            for w in c.warnings(&profile)? {
                writeln!(err, "warning: {w}")?;
            }
            match run_build(&c) {
                Ok(stage) => {
                    for l in &stage.logs {
                        writeln!(
                            out,
                            "stage {} M={} gap={:e} pieces={}",
                            l.stage, l.m, l.gap, l.support_pieces
                        )?;
                    }
                    writeln!(out, "wrote {}", c.output_dir.join(STAGE_FILE).display())?;
                }
                Err(e) => {
                    writeln!(
                        err,
                        "partial artifact with {} stages in {}",
                        e.partial.stage,
                        c.output_dir.display()
                    )?;
                    return Err(e.error);
                }
            }
        }
        Command::Analyze {
            stage,
            config,
            overrides,
        } => {
            let c = load(&config, Some(&overrides))?;
            let path = stage.unwrap_or_else(|| c.output_dir.join(STAGE_FILE));
            let (a, paths) = run_analyze(&path, &c)?;
            let s = &a.summary;
            writeln!(out, "nu_hat(0)           {}", s.nu_hat_zero)?;
            writeln!(out, "fitted_slope        {}", s.fitted_slope)?;
            writeln!(out, "target_exponent     {}", s.target_exponent)?;
            writeln!(out, "predicted_dimension {}", s.predicted_dimension)?;
            for p in paths {
                writeln!(out, "wrote {}", p.display())?;
            }
        }
    }
    Ok(())
}
