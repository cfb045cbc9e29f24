//! Diagnostics time series as CSV.
//!
//! Columns `t,N,E,rho_center,rho_max,sigma_x,sigma_y,diverged`, 17
//! significant digits, LF line endings. Non-finite values print as `nan`,
//! `inf`, `-inf`; a 1D run writes `nan` for `sigma_y`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};

pub const HEADER: &str = "t,N,E,rho_center,rho_max,sigma_x,sigma_y,diverged";

fn fmt(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

pub fn write_timeseries<W: Write>(records: &[DiagnosticsRecord], out: &mut W) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no diagnostics records to write".into()));
    }
    writeln!(out, "{HEADER}")?;
    for r in records {
        let sx = r.widths.first().copied().unwrap_or(f64::NAN);
        let sy = r.widths.get(1).copied().unwrap_or(f64::NAN);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt(r.t),
            fmt(r.n),
            fmt(r.e),
            fmt(r.rho_center),
            fmt(r.rho_max),
            fmt(sx),
            fmt(sy),
            u8::from(r.diverged)
        )?;
    }
    Ok(())
}

pub fn write_timeseries_file(records: &[DiagnosticsRecord], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_timeseries(records, &mut w)?;
    w.flush()?;
    Ok(())
}
