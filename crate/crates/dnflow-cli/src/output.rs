//! File formats: ledger CSV, snapshot CSVs, decay CSV, nodal-field input.
//! All CSVs are comma-separated with '.' decimals, mandatory headers, and
//! LF line endings; floats print in shortest round-trip form, so identical
//! runs produce identical bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use dnflow_core::spatial::{Field, Grid};
use dnflow_core::stepper::Trajectory;

use crate::CliError;

pub fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(format!("mkdir {path:?}: {e}")))
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v}")
    }
}

/// Ledger schema: one row per accepted step, i = 1..N (the initial state
/// is step 0 of the trajectory and appears in snapshots and the manifest).
pub fn write_ledger(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str("i,t,energy,phi,w_int,dissipation,newton_iters,residual,min_u,max_u,sup_|du/dt|\n");
    for e in traj.ledger.iter().filter(|e| e.step > 0) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            e.step,
            fmt(e.t),
            fmt(e.energy),
            fmt(e.phi),
            fmt(e.w_int),
            fmt(e.dissipation),
            e.newton_iters,
            fmt(e.residual),
            fmt(e.min_u),
            fmt(e.max_u),
            fmt(e.du_max),
        ));
    }
    fs::write(path, out).map_err(|e| CliError::io(format!("write {path:?}: {e}")))
}

/// Snapshot schema: one row per node in axis-major order (x fastest),
/// coordinates then the value.
pub fn write_snapshot(path: &Path, grid: &Grid, field: &Field) -> Result<(), CliError> {
    let mut out = String::new();
    if grid.dim == 1 {
        out.push_str("x,u\n");
        for i in 0..grid.nodes() {
            let p = grid.position(i);
            out.push_str(&format!("{},{}\n", fmt(p[0]), fmt(field.values[i])));
        }
    } else {
        out.push_str("x,y,u\n");
        for i in 0..grid.nodes() {
            let p = grid.position(i);
            out.push_str(&format!(
                "{},{},{}\n",
                fmt(p[0]),
                fmt(p[1]),
                fmt(field.values[i])
            ));
        }
    }
    fs::write(path, out).map_err(|e| CliError::io(format!("write {path:?}: {e}")))
}

pub fn write_snapshots(
    dir: &Path,
    grid: &Grid,
    traj: &Trajectory,
    every: usize,
) -> Result<Vec<String>, CliError> {
    let snap_dir = dir.join("snapshots");
    ensure_dir(&snap_dir)?;
    let mut files = Vec::new();
    for (k, state) in traj.states.iter().enumerate() {
        if k % every == 0 || k == traj.states.len() - 1 {
            let name = format!("u_{k:06}.csv");
            write_snapshot(&snap_dir.join(&name), grid, state)?;
            files.push(format!("snapshots/{name}"));
        }
    }
    Ok(files)
}

/// Plot-ready decay series: time, measured distance, fitted model value.
pub fn write_decay_csv(
    path: &Path,
    series: &[(f64, f64)],
    fit: Option<&dnflow_core::stationary::DecayFit>,
) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str("t,distance,fit\n");
    for &(t, d) in series {
        let f = match fit {
            Some(f) => {
                let model = match f.mode {
                    dnflow_core::stationary::DecayMode::Algebraic => {
                        if t > 0.0 {
                            f.c * t.powf(-f.rate)
                        } else {
                            f64::NAN
                        }
                    }
                    dnflow_core::stationary::DecayMode::Exponential => f.c * (-f.rate * t).exp(),
                };
                fmt(model)
            }
            None => "nan".to_string(),
        };
        out.push_str(&format!("{},{},{f}\n", fmt(t), fmt(d)));
    }
    fs::write(path, out).map_err(|e| CliError::io(format!("write {path:?}: {e}")))
}

/// Read a nodal CSV: one row per node (axis-major), numeric columns; a
/// header row is skipped if present. Rows keep all numeric fields so
/// callers can pick coordinates or matrix entries.
pub fn read_nodal_csv(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::io(format!("read {path:?}: {e}")))?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Result<Vec<f64>, _> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect();
        match fields {
            Ok(v) if !v.is_empty() => rows.push(v),
            _ if ln == 0 => continue, // header
            _ => {
                return Err(CliError::validation(
                    "parse",
                    format!("{path:?}: line {} is not numeric CSV", ln + 1),
                    vec![],
                ))
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::validation(
            "parse",
            format!("{path:?}: no data rows"),
            vec![],
        ))
    }
    Ok(rows)
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::io(format!("serialize {path:?}: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(format!("write {path:?}: {e}")))
}

/// Emit to stdout as a single JSON document.
pub fn print_json(value: &serde_json::Value) {
    let mut text = serde_json::to_string_pretty(value).unwrap_or_else(|_| "{}".to_string());
    text.push('\n');
    let _ = std::io::stdout().write_all(text.as_bytes());
}
