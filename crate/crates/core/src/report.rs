use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Outcome and diagnostics of one solver run. Serialized as JSON next to
/// the experiment CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Bob's trace-FIM at the returned response.
    pub objective: f64,
    /// Upper bound on Bob's trace-FIM: the Von Neumann bound for unitary
    /// designs, `r·λ_max(C_b)` for diagonal ones.
    pub bound: f64,
    pub iterations: usize,
    /// Objective after every accepted step (AO, coordinate ascent) or
    /// every outer round (PDD).
    pub cost_trace: Vec<f64>,
    pub converged: bool,
    pub constraint_values: BTreeMap<String, f64>,
    /// `‖Ω − Ψ‖_F` after every PDD outer round.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violation_trace: Vec<f64>,
    /// Eve's trace-FIM after every PDD outer round.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eve_trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl SolveReport {
    pub fn constraint(&self, name: &str) -> Option<f64> {
        self.constraint_values.get(name).copied()
    }

    pub(crate) fn set(&mut self, name: &str, value: f64) {
        self.constraint_values.insert(name.to_string(), value);
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}
