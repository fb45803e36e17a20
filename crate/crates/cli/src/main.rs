use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use grouptrack::config::{
    config_help, load_config, parse_algorithms, parse_intervals, parse_scenario,
};
use grouptrack::harness::{
    error_cdf, run_scenario_on, write_results_csv, write_results_svg, RunResult, ScenarioConfig,
    ScenarioId,
};
use grouptrack::movement::{generate_tracks, write_tracks_csv};
use grouptrack::oracles::{run_oracles, OracleOptions};

#[derive(Parser, Debug)]
#[command(
    name = "grouptrack",
    version,
    about = "Energy-aware group tracking simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run tracking scenarios and write results, logs and plots.
    Simulate(SimulateArgs),
    /// Write the ground-truth trajectories as CSV.
    GenerateTracks(TracksArgs),
    /// Check closed-form noise moments against Monte-Carlo.
    ValidateOracles(OracleArgs),
}

#[derive(clap::Args, Debug)]
struct SimulateArgs {
    /// Noise scenario: a, b, c, d or all [default: from config, else a]
    #[arg(long)]
    scenario: Option<String>,
    /// wlsr, wlsrp, cbt, individual or all [default: from config, else all]
    #[arg(long)]
    algorithm: Option<String>,
    /// Sampling intervals as start:end:step, seconds [default: from config, else 5:50:5]
    #[arg(long)]
    intervals: Option<String>,
    /// Master seed [default: from config, else 1]
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Also write trade-off plots as SVG
    #[arg(long)]
    emit_svg: bool,
    /// Skip per-run estimate, energy and event logs
    #[arg(long)]
    no_logs: bool,
    /// Check protocol invariants at every instant and fail on violations
    #[arg(long)]
    audit: bool,
    /// Config file (flat key = value lines, keys listed below)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct TracksArgs {
    /// Output CSV file
    #[arg(long)]
    out: PathBuf,
    /// Master seed [default: from config, else 1]
    #[arg(long)]
    seed: Option<u64>,
    /// Config file; only world and flocking keys matter here
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct OracleArgs {
    /// Monte-Carlo samples per variance check
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    /// Trials of the bias comparison
    #[arg(long, default_value_t = 100_000)]
    bias_trials: usize,
    /// RSSI shadowing levels to check, dB
    #[arg(long, value_delimiter = ',', default_value = "1,3")]
    sigma_p: Vec<f64>,
    /// GPS noise levels to check, m
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    sigma_a: Vec<f64>,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Scales the solver's u constant (negative control)
    #[arg(long, default_value_t = 1.0, hide = true)]
    corrupt_u: f64,
}

fn base_config(path: Option<&Path>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => Ok(load_config(p)?),
        None => Ok(ScenarioConfig::default()),
    }
}

/// Creates `dir` and proves it is writable before any work starts.
fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let probe = dir.join(".write-test");
    File::create(&probe)
        .with_context(|| format!("output directory {} is not writable", dir.display()))?;
    fs::remove_file(probe)?;
    Ok(())
}

fn write_cdf_csv(path: &Path, results: &[RunResult]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "scenario,algorithm,interval_s,error_m,fraction")?;
    for r in results {
        for (e, f) in error_cdf(&r.per_node_errors) {
            writeln!(
                out,
                "{},{},{},{:.6},{:.6}",
                r.scenario,
                r.algorithm.as_str(),
                r.sampling_interval,
                e,
                f
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = base_config(args.config.as_deref())?;
    let scenarios: Vec<ScenarioId> = match args.scenario.as_deref() {
        None => vec![cfg.scenario],
        Some("all") => ScenarioId::ALL.to_vec(),
        Some(s) => vec![parse_scenario(s).map_err(|e| anyhow::anyhow!("--scenario: {e}"))?],
    };
    if let Some(a) = &args.algorithm {
        cfg.algorithms = parse_algorithms(a).map_err(|e| anyhow::anyhow!("--algorithm: {e}"))?;
    }
    if let Some(i) = &args.intervals {
        cfg.intervals = parse_intervals(i).map_err(|e| anyhow::anyhow!("--intervals: {e}"))?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.audit |= args.audit;
    let configs: Vec<ScenarioConfig> = scenarios
        .iter()
        .map(|&id| {
            if id == cfg.scenario {
                cfg.clone()
            } else {
                cfg.with_scenario(id)
            }
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }
    prepare_out_dir(&args.out)?;

    let tracks = generate_tracks(&cfg.world, &cfg.flock, cfg.seed)?;
    let log_dir = args.out.join("runs");
    let mut results = Vec::new();
    for c in &configs {
        let r = run_scenario_on(c, &tracks, (!args.no_logs).then_some(log_dir.as_path()))?;
        eprintln!("scenario {}: {} runs", c.scenario, r.len());
        results.extend(r);
    }

    let mut csv = BufWriter::new(File::create(args.out.join("results.csv"))?);
    write_results_csv(&mut csv, &results)?;
    csv.flush()?;
    write_cdf_csv(&args.out.join("error_cdf.csv"), &results)?;
    if args.emit_svg {
        for id in &scenarios {
            let subset: Vec<RunResult> = results
                .iter()
                .filter(|r| r.scenario == *id)
                .cloned()
                .collect();
            let mut svg =
                BufWriter::new(File::create(args.out.join(format!("tradeoff_{id}.svg")))?);
            write_results_svg(&mut svg, &subset)?;
            svg.flush()?;
        }
    }
    let mut violations = 0;
    for r in &results {
        for v in r.violations.iter().take(5) {
            eprintln!(
                "{} {} {}s: {v}",
                r.scenario,
                r.algorithm.as_str(),
                r.sampling_interval
            );
        }
        violations += r.violations.len();
    }
    if violations > 0 {
        bail!("{violations} protocol invariant violations");
    }
    println!("wrote {} results to {}", results.len(), args.out.display());
    Ok(())
}

fn generate(args: TracksArgs) -> Result<()> {
    let mut cfg = base_config(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        prepare_out_dir(parent)?;
    }
    let tracks = generate_tracks(&cfg.world, &cfg.flock, cfg.seed)?;
    let mut out = BufWriter::new(
        File::create(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?,
    );
    write_tracks_csv(&mut out, &tracks)?;
    out.flush()?;
    Ok(())
}

fn validate_oracles(args: OracleArgs) -> Result<()> {
    let opts = OracleOptions {
        samples: args.samples,
        bias_trials: args.bias_trials,
        sigma_p_levels: args.sigma_p,
        sigma_a_levels: args.sigma_a,
        solver_u_scale: args.corrupt_u,
        seed: args.seed,
        ..OracleOptions::default()
    };
    let checks = run_oracles(&opts, &grouptrack::channel::PathLossParams::default());
    let mut failed = 0;
    for c in &checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!(
            "{tag} {}: measured {:.6e}, reference {:.6e}",
            c.name, c.measured, c.expected
        );
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        bail!("{failed} of {} oracle checks failed", checks.len());
    }
    println!("all {} oracle checks passed", checks.len());
    Ok(())
}

fn main() -> ExitCode {
    let matches = Cli::command()
        .mut_subcommand("simulate", |c| c.after_long_help(config_help()))
        .get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::GenerateTracks(a) => generate(a),
        Command::ValidateOracles(a) => validate_oracles(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
