//! Summary schema and file emission.

use std::path::Path;

use anyhow::{Context, Result};
use riskalloc::allocation::AllocationMethod;
use riskalloc::impact::ImpactKind;
use riskalloc::risk::RiskMeasure;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub scenario: String,
    pub model: String,
    pub seed: u64,
    pub samples: usize,
    pub test_samples: usize,
    pub alpha: f64,
    pub eps_r: f64,
    pub eps_a: f64,
    pub n_w: usize,
    pub impact: ImpactKind,
    pub solver_tol: f64,
    pub assumptions: AssumptionSummary,
    pub unprotected: Evaluation,
    pub methods: Vec<MethodReport>,
    pub simulations: Vec<SimulationSummary>,
    /// SHA-256 of this summary with every wall time zeroed and this field empty.
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionSummary {
    pub checked: usize,
    pub stable: usize,
    pub controllable: usize,
    pub observable: usize,
    /// Sample ids whose closed loop is not Hurwitz.
    pub unstable_ids: Vec<usize>,
}

/// Risk figures of one protected set on the training and held-out ensembles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub protected: Vec<usize>,
    pub train: SplitRisk,
    pub test: Option<SplitRisk>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRisk {
    pub samples: usize,
    pub relaxed: RiskStats,
    pub exact: Option<RiskStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskStats {
    pub cvar: f64,
    pub var: f64,
    pub mean: f64,
    pub median: f64,
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: AllocationMethod,
    pub status: MethodStatus,
    pub error: Option<String>,
    /// Zero-based indices.
    pub protected: Vec<usize>,
    /// One-based actuator names.
    pub labels: Vec<String>,
    pub z_relaxed: Option<Vec<f64>>,
    /// Relaxation value, a bound rather than an outcome.
    pub sdp_objective: Option<f64>,
    /// Achieved risk of the chosen set under the method's own measure.
    pub achieved_risk: Option<f64>,
    pub risk_measure: Option<RiskMeasure>,
    pub impact: Option<ImpactKind>,
    pub evaluation: Option<Evaluation>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub name: String,
    pub protected: Vec<usize>,
    pub samples: usize,
    pub dt: f64,
    pub horizon: f64,
    pub threshold: f64,
    pub max_final_perf_energy: f64,
    pub min_final_perf_energy: f64,
    pub max_final_det_energy: f64,
    pub min_final_det_energy: f64,
    /// Runs whose detection energy crossed the threshold.
    pub alarms: usize,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: AllocationMethod,
    pub samples: usize,
    pub wall_seconds: f64,
    pub protected: String,
    pub achieved_risk: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImpactRow {
    pub sample_id: usize,
    pub delta: String,
    pub q_exact: Option<f64>,
    pub q_relaxed: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoxplotRow {
    pub set: String,
    pub protected: String,
    pub split: &'static str,
    pub sample_id: usize,
    pub q_exact: Option<f64>,
    pub q_relaxed: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyRow {
    pub sample_id: usize,
    pub t: f64,
    pub perf_energy: f64,
    pub det_energy: f64,
}

impl Summary {
    pub fn compute_fingerprint(&self) -> String {
        let mut bare = self.clone();
        bare.fingerprint.clear();
        for m in &mut bare.methods {
            m.wall_time = 0.0;
        }
        let bytes = serde_json::to_vec(&bare).expect("summary serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn seal(mut self) -> Self {
        self.fingerprint = self.compute_fingerprint();
        self
    }

    pub fn method(&self, m: AllocationMethod) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }
}

pub fn labels(protected: &[usize]) -> Vec<String> {
    protected.iter().map(|i| format!("A{}", i + 1)).collect()
}

pub fn join_set(protected: &[usize]) -> String {
    labels(protected).join(" ")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
