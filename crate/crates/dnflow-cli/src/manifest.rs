//! The run manifest: fingerprint, summaries, embedded report sections, and
//! the file inventory. Serialization is canonical (sorted JSON object
//! keys), so parsing a manifest and re-emitting it is byte-identical.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use dnflow_core::stepper::Trajectory;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LedgerSummary {
    pub steps: usize,
    pub final_t: f64,
    pub final_energy: f64,
    pub max_residual: f64,
    pub max_newton_iters: usize,
    pub min_u: f64,
    pub max_u: f64,
}

impl LedgerSummary {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let mut max_residual = 0.0_f64;
        let mut max_newton = 0usize;
        let mut min_u = f64::INFINITY;
        let mut max_u = f64::NEG_INFINITY;
        for e in &traj.ledger {
            max_residual = max_residual.max(e.residual);
            max_newton = max_newton.max(e.newton_iters);
            min_u = min_u.min(e.min_u);
            max_u = max_u.max(e.max_u);
        }
        let last = traj.ledger.last();
        Self {
            steps: traj.n_steps(),
            final_t: last.map(|e| e.t).unwrap_or(0.0),
            final_energy: last.map(|e| e.energy).unwrap_or(f64::NAN),
            max_residual,
            max_newton_iters: max_newton,
            min_u,
            max_u,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// sha256 of the configuration text
    pub fingerprint: String,
    /// node ordering convention of every nodal CSV
    pub node_order: String,
    pub wall_time_seconds: f64,
    pub ledger: Option<LedgerSummary>,
    /// report sections keyed by name (validation, bounds, separation, ...)
    pub reports: Value,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, fingerprint: &str) -> Self {
        Self {
            tool: "dnflow".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            fingerprint: fingerprint.to_string(),
            node_order: "axis-major, x fastest".to_string(),
            wall_time_seconds: 0.0,
            ledger: None,
            reports: Value::Object(serde_json::Map::new()),
            files: Vec::new(),
        }
    }

    pub fn insert_report(&mut self, name: &str, report: Value) {
        if let Value::Object(map) = &mut self.reports {
            map.insert(name.to_string(), report);
        }
    }

    pub fn to_canonical_string(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }
}
