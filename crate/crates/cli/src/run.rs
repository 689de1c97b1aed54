//! Scenario orchestration.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use riskalloc::allocation::{allocate, AllocationMethod, AllocationProblem};
use riskalloc::impact::{impacts, ImpactKind};
use riskalloc::model::{check_assumptions, ClosedLoopSystem, ProtectionMask};
use riskalloc::risk::{cvar, mean, var, worst_case};
use riskalloc::sdp::SolverSettings;
use riskalloc::simulate::{simulate_ensemble, AttackSignal, SimulationSettings};

use crate::config::{ScenarioConfig, SCHEMA_VERSION};
use crate::report::{
    self, AssumptionSummary, BoxplotRow, EnergyRow, Evaluation, ImpactRow, MethodReport, MethodStatus, RiskStats,
    SimulationSummary, SplitRisk, Summary, TimingRow,
};

pub const DEFAULT_OUT_DIR: &str = "riskalloc-out";

/// Everything a run produced; `write` emits it.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: Summary,
    pub impacts: Vec<ImpactRow>,
    pub boxplot: Vec<BoxplotRow>,
    pub timings: Vec<TimingRow>,
    pub energies: Vec<(String, Vec<EnergyRow>)>,
}

struct Ensembles {
    train: Vec<ClosedLoopSystem>,
    test: Vec<ClosedLoopSystem>,
    nominal: ClosedLoopSystem,
}

fn settings(cfg: &ScenarioConfig) -> SolverSettings {
    SolverSettings::with_tol(cfg.solver_tol)
}

fn ensembles(cfg: &ScenarioConfig, n: usize) -> Result<Ensembles> {
    let e = cfg.ensemble()?;
    Ok(Ensembles {
        train: e.sample_systems(n, cfg.seed)?,
        test: if cfg.test_samples > 0 { e.sample_systems(cfg.test_samples, cfg.test_seed())? } else { Vec::new() },
        nominal: e.nominal_system(&ProtectionMask::unprotected(e.n_u()))?,
    })
}

fn problem(cfg: &ScenarioConfig, ens: &Ensembles) -> AllocationProblem {
    let mut p = AllocationProblem::new(ens.train.clone(), cfg.n_w, cfg.budget(), cfg.risk())
        .with_nominal(ens.nominal.clone())
        .with_impact(cfg.impact);
    p.settings = settings(cfg);
    if let Some(cap) = cfg.search_cap {
        p.search_cap = cap as u128;
    }
    p
}

fn stats(values: &[f64], alpha: f64) -> Result<RiskStats> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    Ok(RiskStats {
        cvar: cvar(values, alpha)?.value,
        var: var(values, alpha)?,
        mean: mean(values)?,
        median,
        worst: worst_case(values)?,
    })
}

/// Per-sample impacts of `protected` under both functionals.
fn masked_impacts(
    cfg: &ScenarioConfig,
    systems: &[ClosedLoopSystem],
    protected: &[usize],
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let n_u = systems[0].n_u();
    let z = ProtectionMask::protecting(n_u, protected).z;
    let masked: Vec<ClosedLoopSystem> = systems.iter().map(|s| s.with_mask(&z)).collect();
    let values = |kind| -> Result<Vec<f64>> {
        Ok(impacts(&masked, &cfg.budget(), kind, &settings(cfg))?.iter().map(|c| c.value.max(0.0)).collect())
    };
    let relaxed = values(ImpactKind::Relaxed)?;
    let exact = if cfg.report_exact { Some(values(ImpactKind::Exact)?) } else { None };
    Ok((relaxed, exact))
}

fn split(cfg: &ScenarioConfig, relaxed: &[f64], exact: Option<&[f64]>) -> Result<SplitRisk> {
    Ok(SplitRisk {
        samples: relaxed.len(),
        relaxed: stats(relaxed, cfg.alpha)?,
        exact: exact.map(|e| stats(e, cfg.alpha)).transpose()?,
    })
}

/// Scores `protected` on both ensembles and appends its box-plot rows.
fn evaluate(
    cfg: &ScenarioConfig,
    ens: &Ensembles,
    name: &str,
    protected: &[usize],
    rows: &mut Vec<BoxplotRow>,
) -> Result<(Evaluation, Vec<f64>, Option<Vec<f64>>)> {
    let mut push = |split: &'static str, systems: &[ClosedLoopSystem], rel: &[f64], ex: Option<&Vec<f64>>| {
        for (k, s) in systems.iter().enumerate() {
            rows.push(BoxplotRow {
                set: name.to_string(),
                protected: report::join_set(protected),
                split,
                sample_id: s.sample_id.unwrap_or(k),
                q_exact: ex.map(|e| e[k]),
                q_relaxed: rel[k],
            });
        }
    };
    let (rel, ex) = masked_impacts(cfg, &ens.train, protected)?;
    push("train", &ens.train, &rel, ex.as_ref());
    let train = split(cfg, &rel, ex.as_deref())?;
    let test = if ens.test.is_empty() {
        None
    } else {
        let (trel, tex) = masked_impacts(cfg, &ens.test, protected)?;
        push("test", &ens.test, &trel, tex.as_ref());
        Some(split(cfg, &trel, tex.as_deref())?)
    };
    Ok((Evaluation { protected: protected.to_vec(), train, test }, rel, ex))
}

fn run_method(problem: &AllocationProblem, method: AllocationMethod) -> MethodReport {
    let start = Instant::now();
    let outcome = allocate(problem, method);
    let wall_time = start.elapsed().as_secs_f64();
    match outcome {
        Ok(r) => MethodReport {
            method,
            status: MethodStatus::Ok,
            error: None,
            labels: report::labels(&r.protected),
            protected: r.protected,
            z_relaxed: r.z_relaxed,
            sdp_objective: r.sdp_objective,
            achieved_risk: Some(r.risk),
            risk_measure: Some(r.risk_measure),
            impact: Some(r.impact),
            evaluation: None,
            wall_time,
        },
        Err(e) => MethodReport {
            method,
            status: MethodStatus::Failed,
            error: Some(format!("{e}")),
            protected: Vec::new(),
            labels: Vec::new(),
            z_relaxed: None,
            sdp_objective: None,
            achieved_risk: None,
            risk_measure: None,
            impact: None,
            evaluation: None,
            wall_time,
        },
    }
}

fn assumptions(systems: &[ClosedLoopSystem]) -> AssumptionSummary {
    let r = check_assumptions(systems);
    AssumptionSummary {
        checked: r.samples.len(),
        stable: r.samples.iter().filter(|s| s.stable).count(),
        controllable: r.samples.iter().filter(|s| s.controllable).count(),
        observable: r.samples.iter().filter(|s| s.observable_perf && s.observable_resid).count(),
        unstable_ids: r
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.stable)
            .map(|(k, s)| s.sample_id.unwrap_or(k))
            .collect(),
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let ens = ensembles(cfg, cfg.samples)?;
    let assumptions = assumptions(&ens.train);
    let mut boxplot = Vec::new();

    let (unprotected, q_rel, q_ex) = evaluate(cfg, &ens, "unprotected", &[], &mut boxplot)?;
    let impacts = ens
        .train
        .iter()
        .enumerate()
        .map(|(k, s)| ImpactRow {
            sample_id: s.sample_id.unwrap_or(k),
            delta: s.delta.iter().map(|d| format!("{d}")).collect::<Vec<_>>().join(";"),
            q_exact: q_ex.as_ref().map(|e| e[k]),
            q_relaxed: q_rel[k],
        })
        .collect();

    let problem = problem(cfg, &ens);
    let mut methods = Vec::new();
    let mut timings = Vec::new();
    for &m in &cfg.methods {
        let mut r = run_method(&problem, m);
        if r.status == MethodStatus::Ok {
            match evaluate(cfg, &ens, m.as_str(), &r.protected, &mut boxplot) {
                Ok((e, _, _)) => r.evaluation = Some(e),
                Err(e) => r.error = Some(format!("evaluation failed: {e}")),
            }
        }
        timings.push(TimingRow {
            method: m,
            samples: cfg.samples,
            wall_seconds: r.wall_time,
            protected: report::join_set(&r.protected),
            achieved_risk: r.achieved_risk,
        });
        methods.push(r);
    }

    let (simulations, energies) = simulations(cfg, &methods)?;
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        scenario: cfg.name.clone().unwrap_or_else(|| cfg.model_name()),
        model: cfg.model_name(),
        seed: cfg.seed,
        samples: cfg.samples,
        test_samples: cfg.test_samples,
        alpha: cfg.alpha,
        eps_r: cfg.eps_r,
        eps_a: cfg.eps_a,
        n_w: cfg.n_w,
        impact: cfg.impact,
        solver_tol: cfg.solver_tol,
        assumptions,
        unprotected,
        methods,
        simulations,
        fingerprint: String::new(),
    }
    .seal();
    Ok(RunOutput { summary, impacts, boxplot, timings, energies })
}

type Simulations = (Vec<SimulationSummary>, Vec<(String, Vec<EnergyRow>)>);

fn simulations(cfg: &ScenarioConfig, methods: &[MethodReport]) -> Result<Simulations> {
    let Some(sim) = &cfg.simulation else {
        return Ok((Vec::new(), Vec::new()));
    };
    let e = cfg.ensemble()?;
    let n = sim.samples.unwrap_or(cfg.samples);
    let systems = e.sample_systems(n, cfg.simulation_seed())?;
    let settings = SimulationSettings {
        dt: sim.dt,
        horizon: sim.horizon,
        threshold: sim.threshold.unwrap_or(cfg.eps_r),
        stride: sim.stride,
        keep_states: false,
    };
    let mut masks: Vec<(String, Vec<usize>)> = methods
        .iter()
        .filter(|m| m.status == MethodStatus::Ok && (sim.methods.is_empty() || sim.methods.contains(&m.method)))
        .map(|m| (m.method.as_str().to_string(), m.protected.clone()))
        .collect();
    masks.extend(sim.masks.iter().map(|m| (m.name.clone(), m.protected.clone())));

    let mut summaries = Vec::new();
    let mut energies = Vec::new();
    for (name, protected) in masks {
        let z = ProtectionMask::protecting(e.n_u(), &protected).z;
        let masked: Vec<ClosedLoopSystem> = systems.iter().map(|s| s.with_mask(&z)).collect();
        let runs = simulate_ensemble(&masked, &AttackSignal::step(e.n_u()), &settings)
            .with_context(|| format!("simulating mask {name}"))?;
        let fp: Vec<f64> = runs.iter().map(|r| r.final_perf_energy()).collect();
        let fd: Vec<f64> = runs.iter().map(|r| r.final_det_energy()).collect();
        let file = format!("simulation_{name}.csv");
        summaries.push(SimulationSummary {
            name: name.clone(),
            protected,
            samples: runs.len(),
            dt: runs[0].dt,
            horizon: settings.horizon,
            threshold: settings.threshold,
            max_final_perf_energy: fp.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min_final_perf_energy: fp.iter().copied().fold(f64::INFINITY, f64::min),
            max_final_det_energy: fd.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min_final_det_energy: fd.iter().copied().fold(f64::INFINITY, f64::min),
            alarms: runs.iter().filter(|r| r.alarm_time.is_some()).count(),
            file,
        });
        let rows = runs
            .iter()
            .enumerate()
            .flat_map(|(k, r)| {
                let id = r.sample_id.unwrap_or(k);
                (0..r.t.len()).map(move |i| EnergyRow {
                    sample_id: id,
                    t: r.t[i],
                    perf_energy: r.perf_energy[i],
                    det_energy: r.det_energy[i],
                })
            })
            .collect();
        energies.push((name, rows));
    }
    Ok((summaries, energies))
}

/// Times every method on identical ensembles for each configured size.
pub fn compare_timings(cfg: &ScenarioConfig) -> Result<Vec<TimingRow>> {
    cfg.validate()?;
    let sizes = match &cfg.bench {
        Some(b) if !b.sizes.is_empty() => b.sizes.clone(),
        _ => vec![cfg.samples],
    };
    let mut rows = Vec::new();
    for n in sizes {
        let ens = ensembles(cfg, n)?;
        let problem = problem(cfg, &ens);
        for &m in &cfg.methods {
            let r = run_method(&problem, m);
            if let Some(err) = &r.error {
                eprintln!("{} (N = {n}) failed: {err}", m.as_str());
            }
            rows.push(TimingRow {
                method: m,
                samples: n,
                wall_seconds: r.wall_time,
                protected: report::join_set(&r.protected),
                achieved_risk: r.achieved_risk,
            });
        }
    }
    Ok(rows)
}

impl RunOutput {
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut written = vec![dir.join("summary.json")];
        report::write_json(&written[0], &self.summary)?;
        let impacts = dir.join("impacts.csv");
        report::write_csv(&impacts, &self.impacts)?;
        let boxplot = dir.join("boxplot.csv");
        report::write_csv(&boxplot, &self.boxplot)?;
        let timings = dir.join("timings.csv");
        report::write_csv(&timings, &self.timings)?;
        written.extend([impacts, boxplot, timings]);
        for (name, rows) in &self.energies {
            let p = dir.join(format!("simulation_{name}.csv"));
            report::write_csv(&p, rows)?;
            written.push(p);
        }
        Ok(written)
    }
}
