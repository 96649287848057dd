use serde::{Deserialize, Deserializer, Serialize};

use crate::error::Result;
use crate::net_model::BeamformerSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    MaxIterations,
    Infeasible,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIterations => "max-iterations",
            Status::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Admm,
    Swmmse,
}

/// JSON has no infinity; it is written as `null` and read back here.
fn null_as_infinity<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// The four normalized terms of the ADMM stopping rule. A term that is
/// undefined at the current iterate is infinite.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualTerms {
    /// `max |K - H v|` over `max(1, ||K||_F)`.
    #[serde(deserialize_with = "null_as_infinity")]
    pub interference_consensus: f64,
    /// `max |v - w|` over `max(1, ||v||, ||w||)`.
    #[serde(deserialize_with = "null_as_infinity")]
    pub copy_consensus: f64,
    /// `max |kappa^2 - sigma^2|`.
    #[serde(deserialize_with = "null_as_infinity")]
    pub noise_consensus: f64,
    /// Relative change of the objective evaluated at `w`.
    #[serde(deserialize_with = "null_as_infinity")]
    pub objective_change: f64,
}

impl ResidualTerms {
    pub fn max(&self) -> f64 {
        self.interference_consensus
            .max(self.copy_consensus)
            .max(self.noise_consensus)
            .max(self.objective_change)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub objective: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub residuals: Option<ResidualTerms>,
}

/// Outcome of one solver run, shared by both solvers. The sum-rate fields
/// are filled by the S-WMMSE solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solver: SolverKind,
    pub status: Status,
    pub iterations: usize,
    pub trace: Vec<IterRecord>,
    pub total_power: f64,
    pub active_set: Vec<usize>,
    pub beamformers: BeamformerSet,
    pub sum_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub user_rates: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cluster_sizes: Option<Vec<usize>>,
    /// Penalized objective after every block update (S-WMMSE only).
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub block_objectives: Vec<f64>,
    /// Diagnostics such as degenerate blocks met during the run.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub flags: Vec<String>,
}

impl SolveReport {
    pub fn final_residual(&self) -> Option<f64> {
        self.trace.last().and_then(|r| r.residuals).map(|r| r.max())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
