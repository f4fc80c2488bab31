//! CSV and JSON writers. Numbers use 17 significant digits in scientific
//! notation, which round-trips every `f64` and does not depend on locale.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

use super::sweep::SweepResult;
use crate::trainer::Row;

pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

pub const TRACE_HEADER: &str = "t,grad_norm_sq,f_gap,dist_to_ref,lyapunov,gamma,beta";

pub fn write_trace_csv<W: Write>(mut w: W, rows: &[Row]) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.t,
            fmt_num(r.grad_norm_sq),
            fmt_num(r.f_gap),
            fmt_opt(r.dist_to_ref),
            fmt_opt(r.lyapunov),
            fmt_num(r.gamma),
            fmt_num(r.beta)
        )?;
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(mut w: W, result: &SweepResult) -> io::Result<()> {
    writeln!(w, "index,kappa,b_squared,beta,stepsize,gamma0,iterations,status,metric")?;
    for r in &result.cells {
        let c = &r.cell;
        let status = match &r.error {
            None => "ok".to_string(),
            Some(e) => format!("failed: {}", e.replace([',', '\n'], ";")),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            c.index,
            fmt_opt(c.kappa),
            fmt_opt(c.b_squared),
            fmt_opt(c.beta),
            c.stepsize.clone().unwrap_or_default(),
            fmt_opt(c.gamma0),
            c.iterations,
            status,
            fmt_opt(r.metric)
        )?;
    }
    Ok(())
}

pub fn write_best_csv<W: Write>(mut w: W, result: &SweepResult) -> io::Result<()> {
    writeln!(w, "kappa,b_squared,beta,best_metric,cell_index")?;
    for b in &result.best {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_opt(b.kappa),
            fmt_opt(b.b_squared),
            fmt_opt(b.beta),
            fmt_num(b.metric),
            b.cell_index
        )?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    fs::write(path, text + "\n")
}

/// Creates `dir` and echoes the configuration text into it verbatim.
pub fn prepare_run_dir(dir: &Path, config_name: &str, config_text: &str) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(config_name), config_text)
}
