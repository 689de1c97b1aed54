use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use riskalloc::presets;
use riskalloc_cli::config::ScenarioConfig;
use riskalloc_cli::report::{self, MethodStatus};
use riskalloc_cli::run::{compare_timings, run_scenario, DEFAULT_OUT_DIR};

#[derive(Parser)]
#[command(name = "riskalloc", version, about = "Risk-based actuator protection allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for reports; overrides the scenario's out_dir.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for per-sample and per-subset work.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Interior-point tolerance; overrides the scenario's solver_tol.
    #[arg(long, global = true)]
    solver_tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write summary.json plus CSV reports.
    Run { config: PathBuf },
    /// List the built-in models.
    Presets,
    /// Time every scenario method on identical ensembles.
    Bench { config: PathBuf },
}

fn load(cli: &Cli, path: &Path) -> Result<(ScenarioConfig, PathBuf)> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(tol) = cli.solver_tol {
        cfg.solver_tol = tol;
    }
    cfg.validate()?;
    let out = cli.out_dir.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    Ok((cfg, out))
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the worker pool")?;
    }
    match &cli.command {
        Command::Presets => {
            for name in presets::names() {
                println!("{name}\t{}", presets::description(name).unwrap_or(""));
            }
        }
        Command::Run { config } => {
            let (cfg, out) = load(&cli, config)?;
            let output = run_scenario(&cfg)?;
            let written = output.write(&out)?;
            let s = &output.summary;
            println!("{} (N = {}, seed {})", s.scenario, s.samples, s.seed);
            println!(
                "  unprotected: CVaR {:.4} of relaxed impact{}",
                s.unprotected.train.relaxed.cvar,
                s.unprotected.train.exact.as_ref().map_or(String::new(), |e| format!(", {:.4} of exact", e.cvar))
            );
            for m in &s.methods {
                match m.status {
                    MethodStatus::Ok => println!(
                        "  {:<15} {{{}}}  risk {:.4}  {:.2}s",
                        m.method.as_str(),
                        m.labels.join(", "),
                        m.achieved_risk.unwrap_or(f64::NAN),
                        m.wall_time
                    ),
                    MethodStatus::Failed => {
                        println!("  {:<15} failed: {}", m.method.as_str(), m.error.as_deref().unwrap_or("?"))
                    }
                }
            }
            for sim in &s.simulations {
                println!(
                    "  simulation {:<15} alarms {}/{}  max detection energy {:.4}",
                    sim.name, sim.alarms, sim.samples, sim.max_final_det_energy
                );
            }
            println!("wrote {} files to {}", written.len(), out.display());
        }
        Command::Bench { config } => {
            let (cfg, out) = load(&cli, config)?;
            let rows = compare_timings(&cfg)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("timings.csv");
            report::write_csv(&path, &rows)?;
            println!("{:<15} {:>6} {:>12}  protected", "method", "N", "seconds");
            for r in &rows {
                println!("{:<15} {:>6} {:>12.3}  {}", r.method.as_str(), r.samples, r.wall_seconds, r.protected);
            }
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
