//! Choosing which `n_w` actuators to protect.
//!
//! Three SDP allocators relax the binary mask `z` through
//! `[Z z; zᵀ 1] ⪰ 0`, `diag(Z) = z`, `Σz ≥ n_u − n_w` and embed the relaxed
//! impact LMI of every sample with `B_cl = B·diag(z)`; the relaxed `z*` is then
//! rounded by protecting its `n_w` smallest entries. Exhaustive and greedy
//! search score binary masks directly.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::impact::{self, relaxed_lmi, ImpactBudget, ImpactKind};
use crate::model::{ClosedLoopSystem, ProtectionMask};
use crate::risk::{RiskConfig, RiskMeasure};
use crate::sdp::{self, AffMatrix, Affine, ConicProgram, SolverSettings, Var, STRICT_MARGIN};

/// Default refusal threshold for exhaustive enumeration.
pub const DEFAULT_SEARCH_CAP: u128 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationMethod {
    CvarSdp,
    WorstCaseSdp,
    NominalSdp,
    Exhaustive,
    Greedy,
}

impl AllocationMethod {
    pub const ALL: [AllocationMethod; 5] = [
        AllocationMethod::CvarSdp,
        AllocationMethod::WorstCaseSdp,
        AllocationMethod::NominalSdp,
        AllocationMethod::Exhaustive,
        AllocationMethod::Greedy,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AllocationMethod::CvarSdp => "cvar_sdp",
            AllocationMethod::WorstCaseSdp => "worst_case_sdp",
            AllocationMethod::NominalSdp => "nominal_sdp",
            AllocationMethod::Exhaustive => "exhaustive",
            AllocationMethod::Greedy => "greedy",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AllocationProblem {
    /// Sampled closed loops; their masks are ignored.
    pub systems: Vec<ClosedLoopSystem>,
    /// Closed loop at the nominal parameter, used by the nominal measure.
    pub nominal: Option<ClosedLoopSystem>,
    pub n_w: usize,
    pub budget: ImpactBudget,
    pub risk: RiskConfig,
    /// Impact functional used by exhaustive and greedy search.
    pub impact: ImpactKind,
    pub settings: SolverSettings,
    pub search_cap: u128,
}

impl AllocationProblem {
    pub fn new(systems: Vec<ClosedLoopSystem>, n_w: usize, budget: ImpactBudget, risk: RiskConfig) -> Self {
        AllocationProblem {
            systems,
            nominal: None,
            n_w,
            budget,
            risk,
            impact: ImpactKind::Relaxed,
            settings: SolverSettings::default(),
            search_cap: DEFAULT_SEARCH_CAP,
        }
    }

    pub fn with_nominal(mut self, nominal: ClosedLoopSystem) -> Self {
        self.nominal = Some(nominal);
        self
    }

    pub fn with_impact(mut self, kind: ImpactKind) -> Self {
        self.impact = kind;
        self
    }

    pub fn n_u(&self) -> usize {
        self.systems.first().or(self.nominal.as_ref()).map_or(0, |s| s.n_u())
    }

    pub fn validate(&self) -> Result<()> {
        if self.systems.is_empty() {
            return Err(Error::EmptySamples);
        }
        self.budget.validate()?;
        self.risk.validate()?;
        let n_u = self.n_u();
        if self.systems.iter().chain(&self.nominal).any(|s| s.n_u() != n_u) {
            return Err(Error::Model("systems disagree on the number of actuators".into()));
        }
        if self.n_w > n_u {
            return Err(Error::Config(format!("budget n_w = {} exceeds n_u = {n_u}", self.n_w)));
        }
        Ok(())
    }

    fn nominal_system(&self) -> Result<&ClosedLoopSystem> {
        self.nominal.as_ref().ok_or_else(|| Error::Config("this method needs the nominal closed loop".into()))
    }

    /// Impacts and risk of protecting `protected`, under `kind` and `measure`.
    pub fn evaluate(&self, protected: &[usize], kind: ImpactKind, measure: &RiskConfig) -> Result<MaskEvaluation> {
        let n_u = self.n_u();
        if protected.iter().any(|&i| i >= n_u) {
            return Err(Error::Config(format!("protected index out of range for {n_u} actuators")));
        }
        let z = ProtectionMask::protecting(n_u, protected).z;
        let (values, nominal) = if measure.measure == RiskMeasure::Nominal {
            let s = self.nominal_system()?.with_mask(&z);
            let v = impact::impact_with(&s, &self.budget, kind, &self.settings)?.value;
            (vec![v], Some(v))
        } else {
            let masked: Vec<ClosedLoopSystem> = self.systems.iter().map(|s| s.with_mask(&z)).collect();
            let certs = impact::impacts(&masked, &self.budget, kind, &self.settings)?;
            (certs.iter().map(|c| c.value.max(0.0)).collect(), None)
        };
        let mut protected = protected.to_vec();
        protected.sort_unstable();
        Ok(MaskEvaluation { risk: measure.evaluate(&values, nominal)?, protected, values })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskEvaluation {
    pub protected: Vec<usize>,
    pub risk: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSubset {
    pub protected: Vec<usize>,
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub method: AllocationMethod,
    /// Zero-based actuator indices, ascending.
    pub protected: Vec<usize>,
    pub z_relaxed: Option<Vec<f64>>,
    #[serde(with = "crate::matrix_serde::option", default)]
    pub z_matrix: Option<DMatrix<f64>>,
    /// Optimal value of the relaxed program (a bound, not an achieved risk).
    pub sdp_objective: Option<f64>,
    /// Risk of the rounded mask, re-evaluated.
    pub risk: f64,
    pub risk_measure: RiskMeasure,
    pub impact: ImpactKind,
    /// Per-sample impacts of the rounded mask.
    pub per_sample: Vec<f64>,
    /// Every subset scored by exhaustive search.
    pub scored: Vec<ScoredSubset>,
    pub wall_time: f64,
}

/// Protects the `n_w` smallest entries of `z`, ties to the lowest index.
pub fn round_allocation(z: &[f64], n_w: usize) -> ProtectionMask {
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)));
    let k = n_w.min(z.len());
    ProtectionMask::protecting(z.len(), &order[..k])
}

/// True when `[Z z; zᵀ 1]` is numerically rank one, which forces `z` binary.
pub fn lifted_rank_one(z: &[f64], z_matrix: &DMatrix<f64>, rel_tol: f64) -> bool {
    let n = z.len();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(z_matrix);
    for i in 0..n {
        m[(i, n)] = z[i];
        m[(n, i)] = z[i];
    }
    m[(n, n)] = 1.0;
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev.len() < 2 || ev[1] <= rel_tol * ev[0]
}

enum Coupling {
    Cvar(f64),
    Max,
}

struct Relaxation {
    z: Vec<f64>,
    z_matrix: DMatrix<f64>,
    objective: f64,
}

/// One coupled program over all `systems`; see the module docs.
fn solve_relaxation(
    systems: &[&ClosedLoopSystem],
    n_w: usize,
    budget: &ImpactBudget,
    coupling: Coupling,
    settings: &SolverSettings,
) -> Result<Relaxation> {
    let n_u = systems[0].n_u();
    let mut prog = ConicProgram::new();
    let z: Vec<Var> = (0..n_u).map(|i| prog.scalar(format!("z[{i}]"))).collect();
    let zm = prog.sym_matrix("Z", n_u);
    let z_aff: Vec<Affine> = z.iter().map(|&v| Affine::var(v)).collect();

    let mut lifted = AffMatrix::zeros(n_u + 1, n_u + 1);
    for (i, zi) in z_aff.iter().enumerate() {
        for j in 0..n_u {
            lifted.set(i, j, Affine::var(zm.at(i, j)));
        }
        lifted.set(i, n_u, zi.clone());
        lifted.set(n_u, i, zi.clone());
        prog.add_eq(Affine::var(zm.at(i, i)) - zi.clone());
    }
    lifted.set(n_u, n_u, Affine::constant(1.0));
    prog.add_psd(&lifted);
    let total = z_aff.iter().fold(Affine::zero(), |acc, a| acc + a.clone());
    prog.add_ge(total - Affine::constant((n_u - n_w) as f64));

    let mut impacts = Vec::with_capacity(systems.len());
    for (k, s) in systems.iter().enumerate() {
        let x = prog.sym_matrix(&format!("X{k}"), s.n());
        let g1 = prog.scalar(format!("gamma_r{k}"));
        let g2 = prog.scalar(format!("gamma_a{k}"));
        let b = AffMatrix::scale_columns_affine(&s.b_attack, &z_aff);
        let u = impact::factor_cr(&s.c_r);
        prog.add_nsd(&relaxed_lmi(&s.a, &b, &s.c_p, &u, &x, g1, g2));
        prog.add_psd(&sdp::strictify(&x.expr(), STRICT_MARGIN));
        prog.add_ge(sdp::strictify_scalar(&Affine::var(g1), STRICT_MARGIN));
        prog.add_ge(Affine::var(g2));
        impacts.push(Affine::term(g1, budget.eps_r) + Affine::term(g2, budget.eps_a));
    }

    match coupling {
        Coupling::Cvar(alpha) => {
            let v = prog.scalar("v");
            let scale = 1.0 / ((1.0 - alpha) * systems.len() as f64);
            let mut obj = Affine::var(v);
            for (k, q) in impacts.into_iter().enumerate() {
                let t = prog.scalar(format!("t{k}"));
                prog.add_ge(Affine::var(t));
                prog.add_ge(Affine::var(t) - q + Affine::var(v));
                obj = obj + Affine::term(t, scale);
            }
            prog.minimize(obj);
        }
        Coupling::Max => {
            let t = prog.scalar("t");
            for q in impacts {
                prog.add_ge(Affine::var(t) - q);
            }
            prog.minimize(Affine::var(t));
        }
    }

    let out = prog.solve(settings);
    if !out.is_optimal() {
        return Err(Error::Allocation(format!(
            "relaxed allocation program ended with status {:?} after {} iterations (primal residual {:.2e}, dual residual {:.2e})",
            out.status, out.stats.iterations, out.stats.primal_residual, out.stats.dual_residual
        )));
    }
    let x = out.x.as_ref().unwrap();
    Ok(Relaxation { z: z.iter().map(|v| x[v.0]).collect(), z_matrix: zm.value(x), objective: out.objective })
}

fn all_protected(
    problem: &AllocationProblem,
    method: AllocationMethod,
    measure: RiskMeasure,
    kind: ImpactKind,
) -> AllocationResult {
    let n = if measure == RiskMeasure::Nominal { 1 } else { problem.systems.len() };
    AllocationResult {
        method,
        protected: (0..problem.n_u()).collect(),
        z_relaxed: Some(vec![0.0; problem.n_u()]),
        z_matrix: Some(DMatrix::zeros(problem.n_u(), problem.n_u())),
        sdp_objective: None,
        risk: 0.0,
        risk_measure: measure,
        impact: kind,
        per_sample: vec![0.0; n],
        scored: Vec::new(),
        wall_time: 0.0,
    }
}

fn sdp_allocation(problem: &AllocationProblem, method: AllocationMethod) -> Result<AllocationResult> {
    problem.validate()?;
    let start = Instant::now();
    let (measure, systems, coupling): (RiskConfig, Vec<&ClosedLoopSystem>, Coupling) = match method {
        AllocationMethod::CvarSdp => {
            let alpha = problem.risk.alpha;
            (RiskConfig::cvar(alpha), problem.systems.iter().collect(), Coupling::Cvar(alpha))
        }
        AllocationMethod::WorstCaseSdp => (
            RiskConfig { measure: RiskMeasure::WorstCase, alpha: problem.risk.alpha },
            problem.systems.iter().collect(),
            Coupling::Max,
        ),
        AllocationMethod::NominalSdp => (
            RiskConfig { measure: RiskMeasure::Nominal, alpha: problem.risk.alpha },
            vec![problem.nominal_system()?],
            Coupling::Max,
        ),
        _ => unreachable!("not an SDP method"),
    };
    measure.validate()?;
    if problem.n_w == problem.n_u() {
        return Ok(all_protected(problem, method, measure.measure, ImpactKind::Relaxed));
    }
    let relax = solve_relaxation(&systems, problem.n_w, &problem.budget, coupling, &problem.settings)?;
    let mask = round_allocation(&relax.z, problem.n_w);
    let eval = problem.evaluate(&mask.protected(), ImpactKind::Relaxed, &measure)?;
    Ok(AllocationResult {
        method,
        protected: eval.protected,
        z_relaxed: Some(relax.z),
        z_matrix: Some(relax.z_matrix),
        sdp_objective: Some(relax.objective),
        risk: eval.risk,
        risk_measure: measure.measure,
        impact: ImpactKind::Relaxed,
        per_sample: eval.values,
        scored: Vec::new(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Coupled CVaR program over all samples; rounded mask re-scored by CVaR of `q̃`.
pub fn allocate_cvar_sdp(problem: &AllocationProblem) -> Result<AllocationResult> {
    sdp_allocation(problem, AllocationMethod::CvarSdp)
}

/// Min-max program over all samples; rounded mask re-scored by the largest `q̃`.
pub fn allocate_worst_case(problem: &AllocationProblem) -> Result<AllocationResult> {
    sdp_allocation(problem, AllocationMethod::WorstCaseSdp)
}

/// Program on the nominal closed loop only; re-scored by the nominal `q̃`.
pub fn allocate_nominal(problem: &AllocationProblem) -> Result<AllocationResult> {
    sdp_allocation(problem, AllocationMethod::NominalSdp)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn best_of(scored: &[MaskEvaluation]) -> &MaskEvaluation {
    // First minimum in enumeration order.
    scored.iter().fold(&scored[0], |best, e| if e.risk < best.risk { e } else { best })
}

/// Scores every `n_w`-subset under the problem's impact functional and risk.
pub fn exhaustive_search(problem: &AllocationProblem) -> Result<AllocationResult> {
    problem.validate()?;
    let start = Instant::now();
    let n_u = problem.n_u();
    let count = binomial(n_u, problem.n_w);
    if count > problem.search_cap {
        return Err(Error::SearchTooLarge { subsets: count, cap: problem.search_cap });
    }
    let subsets = combinations(n_u, problem.n_w);
    let scored: Vec<MaskEvaluation> =
        subsets.par_iter().map(|s| problem.evaluate(s, problem.impact, &problem.risk)).collect::<Result<_>>()?;
    let best = best_of(&scored).clone();
    Ok(AllocationResult {
        method: AllocationMethod::Exhaustive,
        protected: best.protected,
        z_relaxed: None,
        z_matrix: None,
        sdp_objective: None,
        risk: best.risk,
        risk_measure: problem.risk.measure,
        impact: problem.impact,
        per_sample: best.values,
        scored: scored.into_iter().map(|e| ScoredSubset { protected: e.protected, risk: e.risk }).collect(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Adds, `n_w` times, the single actuator whose protection lowers the risk most.
pub fn greedy_search(problem: &AllocationProblem) -> Result<AllocationResult> {
    problem.validate()?;
    let start = Instant::now();
    let n_u = problem.n_u();
    let mut chosen: Vec<usize> = Vec::new();
    let mut current = problem.evaluate(&[], problem.impact, &problem.risk)?;
    for _ in 0..problem.n_w {
        let candidates: Vec<Vec<usize>> = (0..n_u)
            .filter(|i| !chosen.contains(i))
            .map(|i| {
                let mut s = chosen.clone();
                s.push(i);
                s
            })
            .collect();
        let scored: Vec<MaskEvaluation> =
            candidates.par_iter().map(|s| problem.evaluate(s, problem.impact, &problem.risk)).collect::<Result<_>>()?;
        let k = scored.iter().enumerate().fold(0, |b, (k, e)| if e.risk < scored[b].risk { k } else { b });
        chosen = candidates[k].clone();
        current = scored[k].clone();
    }
    Ok(AllocationResult {
        method: AllocationMethod::Greedy,
        protected: current.protected,
        z_relaxed: None,
        z_matrix: None,
        sdp_objective: None,
        risk: current.risk,
        risk_measure: problem.risk.measure,
        impact: problem.impact,
        per_sample: current.values,
        scored: Vec::new(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

pub fn allocate(problem: &AllocationProblem, method: AllocationMethod) -> Result<AllocationResult> {
    match method {
        AllocationMethod::CvarSdp => allocate_cvar_sdp(problem),
        AllocationMethod::WorstCaseSdp => allocate_worst_case(problem),
        AllocationMethod::NominalSdp => allocate_nominal(problem),
        AllocationMethod::Exhaustive => exhaustive_search(problem),
        AllocationMethod::Greedy => greedy_search(problem),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_breaks_ties_by_index() {
        assert_eq!(round_allocation(&[0.2, 0.9, 0.2, 0.7], 2).protected(), vec![0, 2]);
        assert_eq!(round_allocation(&[1.0, 0.0, 1.0, 0.0], 2).protected(), vec![1, 3]);
        assert_eq!(round_allocation(&[0.3, 0.1], 5).protected(), vec![0, 1]);
    }

    #[test]
    fn combinations_enumerate_every_subset_once() {
        let c = combinations(6, 3);
        assert_eq!(c.len() as u128, binomial(6, 3));
        assert_eq!(c[0], vec![0, 1, 2]);
        assert_eq!(c.last().unwrap(), &vec![3, 4, 5]);
        assert_eq!(combinations(4, 0), vec![Vec::<usize>::new()]);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(binomial(40, 20), 137_846_528_820);
    }

    #[test]
    fn lifted_rank_one_detects_binary_points() {
        let z = [1.0, 0.0];
        let zz = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(lifted_rank_one(&z, &zz, 1e-9));
        // Z itself rank one but z fractional.
        let z = [0.5, 0.5];
        let zz = DMatrix::from_element(2, 2, 0.5);
        assert!(!lifted_rank_one(&z, &zz, 1e-9));
    }
}
