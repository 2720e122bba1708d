//! Serializable summary of a single run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::StabilityCertificate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorVerdict {
    pub pass: bool,
    /// Worst `bound − observed`; negative on failure.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub problem_id: String,
    pub method: String,
    pub lambda: f64,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub tol: f64,
    pub final_residual: f64,
    pub iterations_or_steps: usize,
    pub stop_reason: String,
    pub final_state: Vec<f64>,
    pub monitor_verdicts: BTreeMap<String, MonitorVerdict>,
    pub certificate: Option<StabilityCertificate>,
    pub wall_time_ms: f64,
}

impl RunReport {
    /// JSON without the timing field, for comparing runs.
    pub fn deterministic_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("wall_time_ms");
        }
        v
    }
}
