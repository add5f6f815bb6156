//! Command-line front end: run scenarios, solve reference equilibria,
//! validate configs, and sweep seeds in parallel.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use cluster_play::config::{builtin, parse_scenario, parse_scenario_str, ScenarioBundle};
use cluster_play::report::{
    emit_convergence_plot, summarize_run, summarize_sweep, write_summary_json, write_sweep_json,
    write_trajectory_csv,
};
use cluster_play::solver::{solve_vi, verify_ne_kkt, BoundPosition};
use cluster_play::RunRecord;

/// Environment variable naming the default output directory.
const OUT_ENV: &str = "CLUSTER_PLAY_OUT";
const SOLVE_TOL: f64 = 1e-10;
const SOLVE_MAX_ITER: u64 = 200_000;
const KKT_TOL: f64 = 1e-6;

#[derive(Parser)]
#[command(
    name = "cluster-play",
    version,
    about = "Distributed equilibrium seeking for cluster games with one-point bandit feedback"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trajectories, summaries, and a plot.
    Run {
        /// Scenario file path, or a bundled scenario name (cournot, quadratic).
        scenario: String,
        /// Run only this seed instead of the scenario's seed list.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: $CLUSTER_PLAY_OUT, then ./out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the scenario's reference equilibrium and print it as JSON.
    Solve {
        /// Scenario file path, or a bundled scenario name (cournot, quadratic).
        scenario: String,
    },
    /// Parse and validate a scenario without running it.
    Validate {
        /// Scenario file path, or a bundled scenario name (cournot, quadratic).
        scenario: String,
    },
    /// Run many seeds in parallel and aggregate their final errors.
    Sweep {
        /// Scenario file path, or a bundled scenario name (cournot, quadratic).
        scenario: String,
        /// Seed range `a..b` (inclusive) or a comma-separated list.
        #[arg(long)]
        seeds: String,
        /// Output directory (default: $CLUSTER_PLAY_OUT, then ./out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A failure plus the exit code it maps to: 1 for validation, 2 for runtime.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn validation(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: error.into(),
    }
}

fn runtime(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
        } => {
            let bundle = load_scenario(&scenario)?;
            let seeds = match seed {
                Some(s) => vec![s],
                None => bundle.config.run.seeds.clone(),
            };
            run_seeds(&bundle, &seeds, &resolve_out(out))
        }
        Command::Solve { scenario } => solve(&load_scenario(&scenario)?),
        Command::Validate { scenario } => {
            let bundle = load_scenario(&scenario)?;
            println!("ok: {scenario} (scenario {})", bundle.hash);
            Ok(())
        }
        Command::Sweep {
            scenario,
            seeds,
            out,
        } => {
            let bundle = load_scenario(&scenario)?;
            let seeds = parse_seeds(&seeds).map_err(|m| validation(anyhow::anyhow!(m)))?;
            run_seeds(&bundle, &seeds, &resolve_out(out))
        }
    }
}

fn load_scenario(arg: &str) -> Result<ScenarioBundle, Failure> {
    let path = Path::new(arg);
    let parsed = if path.exists() {
        parse_scenario(path)
    } else if let Some(text) = builtin::by_name(arg) {
        parse_scenario_str(text)
    } else {
        parse_scenario(path)
    };
    parsed.map_err(validation)
}

fn resolve_out(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let text = text.trim();
    let bad = |part: &str| format!("cannot parse seed {part:?} in {text:?}");
    if let Some((a, b)) = text.split_once("..") {
        let lo: u64 = a.trim().parse().map_err(|_| bad(a))?;
        let hi_text = b.trim().strip_prefix('=').unwrap_or(b).trim();
        let hi: u64 = hi_text.parse().map_err(|_| bad(b))?;
        if lo > hi {
            return Err(format!("seed range {text:?} is empty"));
        }
        Ok((lo..=hi).collect())
    } else {
        let seeds: Vec<u64> = text
            .split(',')
            .map(|part| part.trim().parse().map_err(|_| bad(part)))
            .collect::<Result<_, _>>()?;
        let unique: std::collections::BTreeSet<u64> = seeds.iter().copied().collect();
        if unique.len() != seeds.len() {
            return Err(format!("seed list {text:?} contains duplicates"));
        }
        Ok(seeds)
    }
}

/// Reference equilibrium of the scenario's game, cached under the output
/// directory keyed by the scenario hash so a sweep solves it once.
#[derive(Serialize, Deserialize)]
struct CachedEquilibrium {
    scenario_hash: String,
    x_star: Vec<f64>,
    residual: f64,
    iterations: u64,
}

fn reference_equilibrium(bundle: &ScenarioBundle, out: &Path) -> Result<Vec<f64>, Failure> {
    let prefix = bundle.hash.get(..16).unwrap_or(&bundle.hash);
    let cache = out.join(format!("ne-{prefix}.json"));
    if let Ok(text) = std::fs::read_to_string(&cache) {
        if let Ok(cached) = serde_json::from_str::<CachedEquilibrium>(&text) {
            if cached.scenario_hash == bundle.hash {
                return Ok(cached.x_star);
            }
        }
    }

    let solution = solve_vi(&bundle.game, SOLVE_TOL, SOLVE_MAX_ITER).map_err(runtime)?;
    if !solution.converged() {
        return Err(runtime(anyhow::anyhow!(
            "equilibrium solve stalled at residual {:.3e} after {} iterations",
            solution.residual(),
            solution.iterations()
        )));
    }
    let cached = CachedEquilibrium {
        scenario_hash: bundle.hash.clone(),
        x_star: solution.point().as_slice().to_vec(),
        residual: solution.residual(),
        iterations: solution.iterations(),
    };
    let text = serde_json::to_string_pretty(&cached).map_err(runtime)? + "\n";
    std::fs::write(&cache, text).map_err(runtime)?;
    Ok(cached.x_star)
}

fn run_seeds(bundle: &ScenarioBundle, seeds: &[u64], out: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(out).map_err(runtime)?;
    let ne = reference_equilibrium(bundle, out)?;

    let mut results: Vec<Option<Result<RunRecord, Failure>>> =
        seeds.iter().map(|_| None).collect();
    std::thread::scope(|scope| {
        for (slot, &seed) in results.iter_mut().zip(seeds) {
            let ne = &ne;
            scope.spawn(move || {
                *slot = Some(run_one_seed(bundle, seed, ne, out));
            });
        }
    });

    let mut records = Vec::with_capacity(seeds.len());
    for slot in results {
        records.push(slot.expect("every seed thread reports")?);
    }

    emit_convergence_plot(&records, Some(&ne), &out.join("convergence.svg")).map_err(runtime)?;
    if records.len() > 1 {
        let sweep = summarize_sweep(&records).map_err(runtime)?;
        write_sweep_json(&sweep, &out.join("sweep.json")).map_err(runtime)?;
        println!(
            "final error over {} seeds: median {:.6e}, min {:.6e}, max {:.6e}",
            sweep.seeds.len(),
            sweep.median_final_error,
            sweep.min_final_error,
            sweep.max_final_error
        );
    }
    println!("artifacts written to {}", out.display());
    Ok(())
}

fn run_one_seed(
    bundle: &ScenarioBundle,
    seed: u64,
    ne: &[f64],
    out: &Path,
) -> Result<RunRecord, Failure> {
    let seed_dir = out.join(format!("seed-{seed}"));
    std::fs::create_dir_all(&seed_dir).map_err(runtime)?;

    let started = Instant::now();
    let engine = bundle.engine(seed).map_err(runtime)?;
    let mut record = engine
        .run(
            bundle.config.run.iterations,
            bundle.config.run.record_every,
            Some(ne),
        )
        .map_err(runtime)?;
    record.scenario_hash = bundle.hash.clone();
    let wall = started.elapsed().as_secs_f64();

    write_trajectory_csv(&record, &seed_dir.join("trajectory.csv")).map_err(runtime)?;
    let summary = summarize_run(&record, &bundle.config.schedule, wall);
    write_summary_json(&summary, &seed_dir.join("summary.json")).map_err(runtime)?;

    eprintln!(
        "seed {seed}: final error {:.6e} ({wall:.1}s)",
        record.final_error().unwrap_or(f64::NAN)
    );
    Ok(record)
}

fn solve(bundle: &ScenarioBundle) -> Result<(), Failure> {
    let solution = solve_vi(&bundle.game, SOLVE_TOL, SOLVE_MAX_ITER).map_err(runtime)?;
    if !solution.converged() {
        return Err(runtime(anyhow::anyhow!(
            "equilibrium solve stalled at residual {:.3e} after {} iterations",
            solution.residual(),
            solution.iterations()
        )));
    }
    let kkt = verify_ne_kkt(&bundle.game, solution.point(), KKT_TOL).map_err(runtime)?;
    let components: Vec<serde_json::Value> = kkt
        .components()
        .iter()
        .map(|c| {
            serde_json::json!({
                "component": c.component,
                "value": c.value,
                "gradient": c.gradient,
                "position": match c.position {
                    BoundPosition::Interior => "interior",
                    BoundPosition::AtLower => "at_lower",
                    BoundPosition::AtUpper => "at_upper",
                },
                "violation": c.violation,
            })
        })
        .collect();
    let output = serde_json::json!({
        "scenario_hash": bundle.hash,
        "converged": solution.converged(),
        "iterations": solution.iterations(),
        "residual": solution.residual(),
        "x_star": solution.point().as_slice(),
        "kkt": {
            "tol": kkt.tol(),
            "satisfied": kkt.is_satisfied(),
            "max_violation": kkt.max_violation(),
            "components": components,
        },
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&output).map_err(runtime)?
    );
    Ok(())
}
