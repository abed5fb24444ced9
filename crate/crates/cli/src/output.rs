use std::io::{IsTerminal, Write};

use crate::error::Result;
use crate::sweep::{SweepNRow, SweepRcRow, SWEEP_N_HEADER, SWEEP_RC_HEADER};

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn cell(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn write_sweep_rc<W: Write>(w: W, rows: &[SweepRcRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SWEEP_RC_HEADER)?;
    for r in rows {
        out.write_record([
            fmt_f64(r.r_over_c),
            fmt_f64(r.p_signal),
            cell(r.prior_star),
            cell(r.ros_workload),
            cell(r.rss_workload),
            cell(r.scaled_rss),
            r.feasible_ros.to_string(),
            r.feasible_rss.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_sweep_n<W: Write>(w: W, rows: &[SweepNRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SWEEP_N_HEADER)?;
    for r in rows {
        out.write_record([
            r.n.to_string(),
            cell(r.ros_workload),
            cell(r.rss_workload),
            cell(r.rsus_workload),
            cell(r.scaled_rss),
            cell(r.scaled_rsus),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Colors only for a terminal, and never when `NO_COLOR` is set.
pub fn use_color() -> bool {
    let disabled = std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty());
    !disabled && std::io::stdout().is_terminal()
}

pub fn verdict(passed: bool, color: bool) -> String {
    match (passed, color) {
        (true, true) => "\x1b[32mPASS\x1b[0m".into(),
        (false, true) => "\x1b[31mFAIL\x1b[0m".into(),
        (true, false) => "PASS".into(),
        (false, false) => "FAIL".into(),
    }
}
