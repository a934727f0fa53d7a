//! `rrl`: run simulation studies, fit β, infer rewards, or serve the
//! feedback-collection API.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rrl_core::belief::Belief;
use rrl_core::beta_fit::{fit_beta_mle, CalibrationSet};
use rrl_core::math::ScalarSearch;
use rrl_core::mdp::GridWorld;
use rrl_core::reward::RewardGrid;
use rrl_core::{BetaByKind, FeedbackResponse};
use rrl_harness::ablation::run_active_ablation;
use rrl_harness::config::{
    load_config, ActiveAblationConfig, BiasSweepConfig, BoltzmannSweepConfig, DiagnosticsConfig, ExperimentConfig,
    ToyConfig,
};
use rrl_harness::diagnostics::run_diagnostics;
use rrl_harness::output::{write_csv, CsvSink, Manifest};
use rrl_harness::sweeps::{run_bias_sweep, run_boltzmann_sweep, SweepResult};
use rrl_harness::toy::run_toy;
use rrl_harness::{HarnessError, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "rrl", version, about = "Reward learning from Boltzmann-rational feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; defaults are used when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory for CSVs and the manifest.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Start from the full parameter grid instead of the desk-scale one.
    #[arg(long)]
    full: bool,
    /// Config overrides such as `sim.n_rewards=3` or `betas=[0.1,1]`.
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Fitted / Default / Oracle inference across true β.
    SweepBoltzmann(RunArgs),
    /// Fitted / Default / Oracle inference across biased humans.
    SweepBias(RunArgs),
    /// Correct vs default β for query selection and inference.
    AblateActive(RunArgs),
    /// Per-bias M-projection β̂ spread and KL scatter.
    Diagnostics(RunArgs),
    /// Demonstration vs comparison posterior entropy in the toy model.
    ToyCrossover(RunArgs),
    /// Maximum-likelihood β from a calibration file `{world, set}`.
    FitBeta {
        input: PathBuf,
    },
    /// Posterior from a response file `{world, grid_seed, grid_size, betas, responses}`.
    Infer {
        input: PathBuf,
        #[arg(short, default_value_t = 5)]
        k: usize,
    },
    /// Serve the feedback-collection HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, default_value = "sessions")]
        data_dir: PathBuf,
    },
}

fn read_config<T: Serialize + DeserializeOwned + Default>(args: &RunArgs, full: impl FnOnce() -> T) -> Result<T> {
    let doc = match (&args.config, args.full) {
        (Some(p), _) => Some(fs::read_to_string(p)?),
        (None, true) => Some(serde_json::to_string(&full())?),
        (None, false) => None,
    };
    load_config(doc.as_deref(), &args.overrides)
}

/// Where an experiment writes; `out/<experiment>`.
fn out_dir(args: &RunArgs, name: &str) -> Result<PathBuf> {
    let dir = args.out.join(name);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn finish<S: Serialize>(
    dir: &Path,
    config: ExperimentConfig,
    summary: S,
    outputs: &[&str],
    cells: usize,
    failures: Vec<String>,
    started: Instant,
) -> Result<bool> {
    let mut m = Manifest::new(config, summary);
    m.outputs = outputs.iter().map(|s| s.to_string()).collect();
    m.cells = cells;
    m.elapsed_secs = started.elapsed().as_secs_f64();
    let ok = failures.is_empty();
    for f in &failures {
        eprintln!("failed: {f}");
    }
    m.failures = failures;
    m.write(&dir.join("manifest.json"))?;
    eprintln!("wrote {}", dir.display());
    Ok(ok)
}

fn sweep<C: Serialize + Clone>(
    args: &RunArgs,
    cfg: C,
    wrap: fn(C) -> ExperimentConfig,
    run: fn(&C, &mut dyn FnMut(&[rrl_harness::sweeps::SweepRow]) -> Result<()>) -> Result<SweepResult>,
) -> Result<bool> {
    let started = Instant::now();
    let exp = wrap(cfg.clone());
    let dir = out_dir(args, exp.name())?;
    let mut sink = CsvSink::create(&dir.join("runs.csv"), "runs")?;
    let r = run(&cfg, &mut |rows| sink.write(rows))?;
    let summary = r.summary();
    write_csv(&dir.join("summary.csv"), "summary", &summary)?;
    finish(&dir, exp, summary, &["runs.csv", "summary.csv"], r.cells, r.failures, started)
}

#[derive(Deserialize)]
struct FitInput {
    world: GridWorld,
    set: CalibrationSet,
}

#[derive(Deserialize)]
struct InferInput {
    world: GridWorld,
    #[serde(default)]
    grid_seed: u64,
    #[serde(default = "default_grid_size")]
    grid_size: usize,
    betas: BetaByKind,
    responses: Vec<FeedbackResponse>,
}

fn default_grid_size() -> usize {
    1000
}

#[derive(Serialize)]
struct InferOutput {
    entropy: f64,
    posterior_mean: [f64; 4],
    top_k: Vec<(usize, [f64; 4], f64)>,
}

fn read_json<T: DeserializeOwned>(p: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(p)?)?)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::SweepBoltzmann(a) => {
            let cfg: BoltzmannSweepConfig = read_config(&a, BoltzmannSweepConfig::full)?;
            sweep(&a, cfg, ExperimentConfig::BoltzmannSweep, run_boltzmann_sweep)
        }
        Command::SweepBias(a) => {
            let cfg: BiasSweepConfig = read_config(&a, BiasSweepConfig::full)?;
            sweep(&a, cfg, ExperimentConfig::BiasSweep, run_bias_sweep)
        }
        Command::AblateActive(a) => {
            let started = Instant::now();
            let cfg: ActiveAblationConfig = read_config(&a, ActiveAblationConfig::default)?;
            let dir = out_dir(&a, "active-ablation")?;
            let mut sink = CsvSink::create(&dir.join("rounds.csv"), "rounds")?;
            let r = run_active_ablation(&cfg, &mut |rows| sink.write(rows))?;
            let summary = r.summary();
            write_csv(&dir.join("summary.csv"), "summary", &summary)?;
            let exp = ExperimentConfig::ActiveAblation(cfg);
            finish(&dir, exp, summary, &["rounds.csv", "summary.csv"], r.cells, r.failures, started)
        }
        Command::Diagnostics(a) => {
            let started = Instant::now();
            let cfg: DiagnosticsConfig = read_config(&a, DiagnosticsConfig::default)?;
            let dir = out_dir(&a, "diagnostics")?;
            let r = run_diagnostics(&cfg)?;
            write_csv(&dir.join("beta_fits.csv"), "beta_fits", &r.fits)?;
            write_csv(&dir.join("kl.csv"), "kl", &r.kl)?;
            write_csv(&dir.join("summary.csv"), "summary", &r.summary)?;
            let cells = cfg.biases.len();
            let exp = ExperimentConfig::Diagnostics(cfg);
            finish(&dir, exp, r.summary, &["beta_fits.csv", "kl.csv", "summary.csv"], cells, r.failures, started)
        }
        Command::ToyCrossover(a) => {
            let started = Instant::now();
            let cfg: ToyConfig = read_config(&a, ToyConfig::default)?;
            let dir = out_dir(&a, "toy-crossover")?;
            let (rows, summary) = run_toy(&cfg)?;
            write_csv(&dir.join("entropy.csv"), "entropy", &rows)?;
            match summary.crossover_beta {
                Some(b) => println!("crossover beta = {b}"),
                None => println!("no crossover in range"),
            }
            let exp = ExperimentConfig::ToyCrossover(cfg);
            finish(&dir, exp, summary, &["entropy.csv"], 1, Vec::new(), started)
        }
        Command::FitBeta { input } => {
            let f: FitInput = read_json(&input)?;
            let est = fit_beta_mle(&f.world, &f.set, &ScalarSearch::default())?;
            println!("{}", serde_json::to_string_pretty(&est)?);
            Ok(true)
        }
        Command::Infer { input, k } => {
            let f: InferInput = read_json(&input)?;
            let grid = RewardGrid::with_size(f.grid_seed, f.grid_size);
            let post = Belief::uniform(&grid).update(&f.world, &grid, &f.responses, &f.betas)?;
            let out = InferOutput {
                entropy: post.entropy(),
                posterior_mean: post.posterior_mean(&grid)?,
                top_k: post.top_k(k).into_iter().map(|(i, w)| (i, *grid.point(i), w)).collect(),
            };
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(true)
        }
        Command::Serve { addr, data_dir } => {
            let store = rrl_service::Store::open(&data_dir)?;
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("listening on http://{addr} (sessions in {})", data_dir.display());
            rt.block_on(rrl_service::serve(addr, store))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                HarnessError::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
