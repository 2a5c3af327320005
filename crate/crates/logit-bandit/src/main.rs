//! Thin command-line front end: `run` drives the experiment harness,
//! `verify` drives the numerical inequality checks.

use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use logit_bandit::checks::{run_named, CheckReport, CHECK_NAMES};
use logit_bandit::harness::{run_experiment, snapshot_sets, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "logit-bandit",
    version,
    about = "Bandit simulation batches and numerical inequality checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded batch of bandit simulations and write CSV output.
    Run(Box<RunArgs>),
    /// Run randomized inequality checks and write a JSON report.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat key=value config file; explicit flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Outcome model: logistic | mnl.
    #[arg(long)]
    model: Option<String>,
    /// Policy: ofulogplus | mnl_ucb_plus | eps_greedy | radius_scaled.
    #[arg(long)]
    algo: Option<String>,
    /// Ambient dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Paying outcome categories (multinomial model only).
    #[arg(long = "K")]
    k: Option<usize>,
    /// Parameter norm bound.
    #[arg(long = "S")]
    s: Option<f64>,
    /// Reward vector norm bound (multinomial model only).
    #[arg(long = "R")]
    r: Option<f64>,
    /// Horizon: rounds per run.
    #[arg(long = "T")]
    horizon: Option<usize>,
    /// Confidence level.
    #[arg(long)]
    delta: Option<f64>,
    /// Arms drawn per round.
    #[arg(long)]
    arms: Option<usize>,
    /// Number of seeds (independent runs).
    #[arg(long)]
    seeds: Option<usize>,
    /// First seed; runs use base_seed..base_seed+seeds.
    #[arg(long)]
    base_seed: Option<u64>,
    /// Scale on the bonus width constant (multinomial policy).
    #[arg(long)]
    c_gamma: Option<f64>,
    /// Squared-radius inflation for the radius_scaled baseline.
    #[arg(long)]
    radius_scale: Option<f64>,
    /// Exploration rate for the eps_greedy baseline.
    #[arg(long)]
    eps: Option<f64>,
    /// Curvature constant override; omitted means estimate it per run.
    #[arg(long)]
    kappa: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated rounds at which to dump planar confidence sets.
    #[arg(long)]
    snapshot_rounds: Option<String>,
    /// Parallel worker threads.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Check name, or "all".
    #[arg(long, default_value = "all")]
    check: String,
    /// Trial count per randomized check.
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    /// Base RNG seed; each check derives its own stream from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the JSON report.
    #[arg(long, default_value = "verify_report.json")]
    report: PathBuf,
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig, Box<dyn std::error::Error>> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &args.model {
        config.apply_kv("model", v)?;
    }
    if let Some(v) = &args.algo {
        config.apply_kv("algo", v)?;
    }
    if let Some(v) = args.d {
        config.apply_kv("d", &v.to_string())?;
    }
    if let Some(v) = args.k {
        config.apply_kv("K", &v.to_string())?;
    }
    if let Some(v) = args.s {
        config.apply_kv("S", &v.to_string())?;
    }
    if let Some(v) = args.r {
        config.apply_kv("R", &v.to_string())?;
    }
    if let Some(v) = args.horizon {
        config.apply_kv("T", &v.to_string())?;
    }
    if let Some(v) = args.delta {
        config.apply_kv("delta", &v.to_string())?;
    }
    if let Some(v) = args.arms {
        config.apply_kv("arms", &v.to_string())?;
    }
    if let Some(v) = args.seeds {
        config.apply_kv("seeds", &v.to_string())?;
    }
    if let Some(v) = args.base_seed {
        config.apply_kv("base-seed", &v.to_string())?;
    }
    if let Some(v) = args.c_gamma {
        config.apply_kv("c-gamma", &v.to_string())?;
    }
    if let Some(v) = args.radius_scale {
        config.apply_kv("radius-scale", &v.to_string())?;
    }
    if let Some(v) = args.eps {
        config.apply_kv("eps", &v.to_string())?;
    }
    if let Some(v) = args.kappa {
        config.apply_kv("kappa", &v.to_string())?;
    }
    if let Some(v) = &args.out {
        config.out_dir = v.clone();
    }
    if let Some(v) = &args.snapshot_rounds {
        config.apply_kv("snapshot-rounds", v)?;
    }
    if let Some(v) = args.workers {
        config.apply_kv("workers", &v.to_string())?;
    }
    Ok(config)
}

fn run(args: &RunArgs) -> Result<bool, Box<dyn std::error::Error>> {
    let config = build_config(args)?;
    let outcome = run_experiment(&config)?;
    for record in &outcome.records {
        match &record.failure {
            None => {
                let final_regret = record.rows.last().map_or(0.0, |r| r.cum_regret);
                println!("seed {:>4}: final cumulative regret {final_regret:.3}", record.seed);
            }
            Some(e) => println!("seed {:>4}: FAILED ({e})", record.seed),
        }
    }
    if !config.snapshot_rounds.is_empty() {
        for path in snapshot_sets(&config, &config.snapshot_rounds)? {
            println!("wrote {}", path.display());
        }
    }
    let n_ok = outcome.records.iter().filter(|r| r.failure.is_none()).count();
    println!(
        "wrote {} ({n_ok}/{} runs completed, {:.1}s)",
        config.out_dir.display(),
        config.n_seeds,
        outcome.elapsed_seconds
    );
    if outcome.elapsed_seconds > 1800.0 {
        println!("note: batch ran past the 30-minute soft budget");
    }
    Ok(!outcome.any_failed())
}

fn verify(args: &VerifyArgs) -> Result<bool, Box<dyn std::error::Error>> {
    let names: Vec<&str> = if args.check == "all" {
        CHECK_NAMES.to_vec()
    } else if let Some(name) = CHECK_NAMES.iter().find(|n| **n == args.check) {
        vec![name]
    } else {
        return Err(format!(
            "unknown check '{}'; available: all, {}",
            args.check,
            CHECK_NAMES.join(", ")
        )
        .into());
    };
    let results: Vec<(String, Result<CheckReport, String>)> = names
        .par_iter()
        .map(|name| {
            let outcome = run_named(name, args.seed, args.trials)
                .expect("name was validated against the listing");
            (name.to_string(), outcome.map_err(|e| e.to_string()))
        })
        .collect();
    let mut all_pass = true;
    for (name, result) in &results {
        match result {
            Ok(report) => {
                if !report.pass {
                    all_pass = false;
                }
                println!(
                    "{} {name}: max violation {:.3e} (tolerance {:.3e}, {} trials)",
                    if report.pass { "PASS" } else { "FAIL" },
                    report.max_violation,
                    report.tolerance,
                    report.trials
                );
                if !report.pass {
                    println!("     worst case: {}", report.worst);
                }
            }
            Err(msg) => {
                all_pass = false;
                println!("ERROR {name}: {msg}");
            }
        }
    }
    let reports: Vec<&CheckReport> = results.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    serde_json::to_writer_pretty(File::create(&args.report)?, &reports)?;
    println!("report written to {}", args.report.display());
    if args.check == "all" {
        println!(
            "note: the cumulative regret decomposition is the per-round identity summed over \
             rounds; the decomposition checks cover its algebra"
        );
    }
    Ok(all_pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Verify(args) => verify(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
