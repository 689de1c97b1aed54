//! Versioned scenario files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use riskalloc::allocation::AllocationMethod;
use riskalloc::impact::{ImpactBudget, ImpactKind};
use riskalloc::model::PlantEnsemble;
use riskalloc::presets;
use riskalloc::risk::RiskConfig;
use riskalloc::sdp::DEFAULT_TOL;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    Preset(String),
    Inline(Box<PlantEnsemble>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "defaults::dt")]
    pub dt: f64,
    #[serde(default = "defaults::horizon")]
    pub horizon: f64,
    /// Alarm threshold; `eps_r` when absent.
    #[serde(default)]
    pub threshold: Option<f64>,
    /// Realizations per mask; the training sample count when absent.
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default = "defaults::stride")]
    pub stride: usize,
    /// Masks to replay; every method of the scenario when empty.
    #[serde(default)]
    pub methods: Vec<AllocationMethod>,
    /// Extra masks given as zero-based protected sets.
    #[serde(default)]
    pub masks: Vec<NamedMask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedMask {
    pub name: String,
    pub protected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    /// Ensemble sizes to time; the training sample count when empty.
    #[serde(default)]
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelSource,
    pub samples: usize,
    #[serde(default)]
    pub test_samples: usize,
    #[serde(default)]
    pub seed: u64,
    pub alpha: f64,
    pub eps_r: f64,
    pub eps_a: f64,
    pub n_w: usize,
    pub methods: Vec<AllocationMethod>,
    /// Impact functional for exhaustive and greedy search.
    #[serde(default)]
    pub impact: ImpactKind,
    #[serde(default = "defaults::tol")]
    pub solver_tol: f64,
    #[serde(default)]
    pub search_cap: Option<u64>,
    /// Also certify exact impacts for the per-sample reports.
    #[serde(default = "defaults::yes")]
    pub report_exact: bool,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub bench: Option<BenchConfig>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

mod defaults {
    pub fn dt() -> f64 {
        riskalloc::simulate::DEFAULT_DT
    }
    pub fn horizon() -> f64 {
        riskalloc::simulate::DEFAULT_HORIZON
    }
    pub fn stride() -> usize {
        10
    }
    pub fn tol() -> f64 {
        super::DEFAULT_TOL
    }
    pub fn yes() -> bool {
        true
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text).context("invalid scenario")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            bail!("unsupported scenario version {} (expected {SCHEMA_VERSION})", self.version);
        }
        let ensemble = self.ensemble()?;
        ensemble.validate()?;
        if self.samples == 0 {
            bail!("samples must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("alpha must lie in (0, 1), got {}", self.alpha);
        }
        ImpactBudget::new(self.eps_r, self.eps_a)?;
        if self.n_w > ensemble.n_u() {
            bail!("n_w = {} exceeds the {} actuators of the model", self.n_w, ensemble.n_u());
        }
        if self.methods.is_empty() {
            bail!("at least one allocation method is required");
        }
        let mut seen = self.methods.clone();
        seen.sort_by_key(|m| m.as_str());
        seen.dedup();
        if seen.len() != self.methods.len() {
            bail!("methods must not repeat");
        }
        if !(self.solver_tol > 0.0 && self.solver_tol < 1.0) {
            bail!("solver_tol must lie in (0, 1), got {}", self.solver_tol);
        }
        if let Some(sim) = &self.simulation {
            let s = riskalloc::simulate::SimulationSettings {
                dt: sim.dt,
                horizon: sim.horizon,
                threshold: sim.threshold.unwrap_or(self.eps_r),
                stride: sim.stride,
                keep_states: false,
            };
            s.validate()?;
            if sim.samples == Some(0) {
                bail!("simulation.samples must be positive");
            }
            for m in &sim.methods {
                if !self.methods.contains(m) {
                    bail!("simulation method {} is not among the scenario methods", m.as_str());
                }
            }
            for m in &sim.masks {
                if m.protected.iter().any(|&i| i >= ensemble.n_u()) {
                    bail!("mask {:?} protects an actuator outside 0..{}", m.name, ensemble.n_u());
                }
            }
        }
        if let Some(b) = &self.bench {
            if b.sizes.contains(&0) {
                bail!("bench sizes must be positive");
            }
        }
        Ok(())
    }

    pub fn ensemble(&self) -> Result<PlantEnsemble> {
        match &self.model {
            ModelSource::Preset(name) => presets::by_name(name)
                .with_context(|| format!("unknown preset {name:?}; available: {}", presets::names().join(", "))),
            ModelSource::Inline(e) => Ok((**e).clone()),
        }
    }

    pub fn model_name(&self) -> String {
        match &self.model {
            ModelSource::Preset(name) => name.clone(),
            ModelSource::Inline(e) => e.name.clone(),
        }
    }

    pub fn budget(&self) -> ImpactBudget {
        ImpactBudget { eps_r: self.eps_r, eps_a: self.eps_a }
    }

    pub fn risk(&self) -> RiskConfig {
        RiskConfig::cvar(self.alpha)
    }

    /// Seed of the held-out ensemble, a fixed function of the scenario seed.
    pub fn test_seed(&self) -> u64 {
        self.seed ^ 0x9e37_79b9_7f4a_7c15
    }

    /// Seed of the simulation ensemble.
    pub fn simulation_seed(&self) -> u64 {
        self.seed ^ 0xc2b2_ae3d_27d4_eb4f
    }
}
