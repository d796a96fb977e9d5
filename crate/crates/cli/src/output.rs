//! Trajectory CSV and report JSON emission.
//!
//! CSV layout: header `t,x1..xn,u1..um,u_proposed1..m,h_min,lg_norm,active,fallback`,
//! floats printed with 9 significant digits, booleans as 0/1, LF line endings.
//! The format is byte-deterministic: identical runs serialize identically.

use std::fmt::Write as _;
use std::path::Path;

use cbf_core::sim::Trajectory;

use crate::CliError;

/// 9 significant digits; fields re-read to within half an ULP of the printed
/// precision (5e-9 relative) while keeping diffs stable.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.8e}")
}

/// Renders a trajectory as CSV text.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::new();
    let first = traj.records.first().expect("trajectory is nonempty");
    let n = first.x.len();
    let m = first.u_applied.len();
    out.push('t');
    for i in 1..=n {
        let _ = write!(out, ",x{i}");
    }
    for i in 1..=m {
        let _ = write!(out, ",u{i}");
    }
    for i in 1..=m {
        let _ = write!(out, ",u_proposed{i}");
    }
    out.push_str(",h_min,lg_norm,active,fallback\n");
    for r in &traj.records {
        let _ = write!(out, "{}", fmt_float(r.t));
        for v in r.x.iter() {
            let _ = write!(out, ",{}", fmt_float(*v));
        }
        for v in r.u_applied.iter() {
            let _ = write!(out, ",{}", fmt_float(*v));
        }
        for v in r.u_proposed.iter() {
            let _ = write!(out, ",{}", fmt_float(*v));
        }
        let h_min = r.h.iter().copied().fold(f64::INFINITY, f64::min);
        let _ = writeln!(
            out,
            ",{},{},{},{}",
            fmt_float(h_min),
            fmt_float(r.lg_norm),
            u8::from(r.active),
            u8::from(r.fallback_engaged)
        );
    }
    out
}

pub fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, trajectory_csv(traj))?;
    Ok(())
}

/// Minimal CSV reader for round-trip checks: header row plus float cells
/// (the `active`/`fallback` flags parse as 0/1).
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Other("empty csv".into()))?
        .split(',')
        .map(str::to_string)
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| {
                cell.parse::<f64>()
                    .map_err(|e| CliError::Other(format!("row {}: bad cell `{cell}`: {e}", i + 2)))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if row.len() != header.len() {
            return Err(CliError::Other(format!(
                "row {}: {} cells, expected {}",
                i + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Other(format!("json serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
