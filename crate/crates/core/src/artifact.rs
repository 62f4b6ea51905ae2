//! On-disk formats.
//!
//! A stage artifact is a text file whose first line is
//! `#fdim-stage v1 <json header>` followed by one `l re im` line per stored
//! coefficient, `l = 0, 1, ..., lattice_max`. Coefficients with negative `l`
//! are the conjugates. Floats are written in shortest round-trip form, so
//! reading an artifact back reproduces the stage exactly.
//!
//! CSV tables have a header row; column orders are fixed by
//! [`DECAY_COLUMNS`] and [`UPPER_BOUND_COLUMNS`].

use std::io::{BufRead, Write};

use num_complex::Complex64;

use crate::builder::MeasureStage;
use crate::decay::{DecayReport, UpperBoundReport};
use crate::error::{Error, Result};

pub const STAGE_MAGIC: &str = "#fdim-stage v1 ";
pub const DECAY_COLUMNS: &str = "j,band_lo,band_hi,sup_abs,samples,certified";
pub const UPPER_BOUND_COLUMNS: &str = "q,nu_aq,bound,ratio,partial";

pub fn write_stage<W: Write>(stage: &MeasureStage, mut out: W) -> Result<()> {
    writeln!(out, "{STAGE_MAGIC}{}", serde_json::to_string(stage)?)?;
    for (l, c) in stage.coeffs.iter().enumerate() {
        writeln!(out, "{l} {:e} {:e}", c.re, c.im)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_stage<R: BufRead>(input: R) -> Result<MeasureStage> {
    let mut lines = input.lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::Format("empty file".into()))??;
    let json = head
        .strip_prefix(STAGE_MAGIC)
        .ok_or_else(|| Error::Format("missing stage header".into()))?;
    let mut stage: MeasureStage = serde_json::from_str(json)?;
    let bad = |n: usize| Error::Format(format!("bad coefficient line {n}"));
    for (n, line) in lines.enumerate() {
        let line = line?;
        let mut it = line.split_ascii_whitespace();
        let l: usize = it.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad(n + 2))?;
        let re: f64 = it.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad(n + 2))?;
        let im: f64 = it.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad(n + 2))?;
        if l != n || it.next().is_some() {
            return Err(bad(n + 2));
        }
        stage.coeffs.push(Complex64::new(re, im));
    }
    if stage.coeffs.is_empty() {
        return Err(Error::Format("no coefficients".into()));
    }
    Ok(stage)
}

pub fn write_decay_csv<W: Write>(r: &DecayReport, mut out: W) -> Result<()> {
    writeln!(out, "{DECAY_COLUMNS}")?;
    for b in &r.bands {
        writeln!(
            out,
            "{},{},{},{:e},{},{}",
            b.j, b.lo, b.hi, b.sup_abs, b.samples, b.certified
        )?;
    }
    Ok(())
}

pub fn write_upper_bound_csv<W: Write>(r: &UpperBoundReport, mut out: W) -> Result<()> {
    writeln!(out, "{UPPER_BOUND_COLUMNS}")?;
    for row in &r.per_q {
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e}",
            row.q, row.nu_aq, row.bound, row.ratio, row.partial
        )?;
    }
    Ok(())
}
