use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use mrrl_core::env::PlantKind;
use mrrl_core::{ControlMode, Scenario, TrainConfig, Vec6, VesselState};
use mrrl_core::experiment::{
    compute_metrics, read_trajectory_csv, run_evaluation, write_json, write_learning_curve_csv, write_trajectory_csv,
    Checkpoint, Manifest,
};
use mrrl_core::gradcheck::run_gradcheck;
use mrrl_core::sac::tabular::run_oracle;
use mrrl_core::train::train;

#[derive(Parser)]
#[command(name = "mrrl", version, about = "Model-reference RL tracking control for a surface vessel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write the learning curve and checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mode: Option<ControlMode>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Roll out a checkpoint (or the baseline alone) on one scenario.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to evaluate; without it the baseline controller runs.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "eval1")]
        scenario: Scenario,
        #[arg(long, value_enum, default_value = "true")]
        plant: PlantArg,
    },
    /// Summarize a trajectory CSV.
    Metrics {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Tabular soft policy iteration on random MDPs.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        mdps: usize,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
    },
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum PlantArg {
    True,
    Nominal,
}

impl From<PlantArg> for PlantKind {
    fn from(p: PlantArg) -> Self {
        match p {
            PlantArg::True => PlantKind::True,
            PlantArg::Nominal => PlantKind::Nominal,
        }
    }
}

fn load_config(common: &Common) -> anyhow::Result<TrainConfig> {
    let mut cfg = match &common.config {
        Some(p) => TrainConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn prepare_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_train(common: &Common, mode: Option<ControlMode>, episodes: Option<usize>) -> anyhow::Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if let Some(e) = episodes {
        cfg.episodes = e;
    }
    cfg.validate()?;
    prepare_out(&common.out)?;
    write_json(&common.out.join("config.json"), &cfg)?;
    write_json(&common.out.join("manifest.json"), &Manifest::new("train", &cfg))?;
    if !cfg.mode.learns() {
        Checkpoint::new(&cfg, None).save(&common.out.join("checkpoint.json"))?;
        log::info!("baseline-only: nothing to train");
        return Ok(());
    }
    let total = cfg.episodes;
    let result = train(&cfg, |e| {
        log::info!(
            "episode {}/{}: steps {} return {:.4} J_Q {:.3e} J_pi {:.3e} alpha {:.3e}",
            e.episode + 1,
            total,
            e.steps,
            e.ret,
            e.j_q,
            e.j_pi,
            e.alpha
        );
    });
    match result {
        Ok(out) => {
            write_learning_curve_csv(&common.out.join("learning_curve.csv"), &out.log)?;
            Checkpoint::new(&cfg, Some(out.agent)).save(&common.out.join("checkpoint.json"))?;
            Ok(())
        }
        Err(abort) => {
            write_learning_curve_csv(&common.out.join("learning_curve.csv"), &abort.log)?;
            if let Some(agent) = abort.last_good {
                Checkpoint::new(&cfg, Some(*agent)).save(&common.out.join("checkpoint.json"))?;
            }
            Err(abort.error.into())
        }
    }
}

fn cmd_eval(common: &Common, checkpoint: Option<&Path>, scenario: Scenario, plant: PlantKind) -> anyhow::Result<()> {
    let (cfg, agent, ck_digest) = match checkpoint {
        Some(p) => {
            let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            let ck = Checkpoint::load(p)?;
            let digest = mrrl_core::experiment::sha256_hex(&bytes);
            (ck.config, ck.agent, Some(digest))
        }
        None => {
            let mut cfg = load_config(common)?;
            cfg.mode = ControlMode::BaselineOnly;
            (cfg, None, None)
        }
    };
    let init = VesselState::from_vector(&Vec6::from(cfg.eval.init));
    let report = run_evaluation(
        agent.as_ref(),
        cfg.mode,
        &cfg.env,
        scenario,
        plant,
        cfg.eval_steps(),
        &init,
        cfg.eval.bound,
    )?;
    prepare_out(&common.out)?;
    let mut manifest = Manifest::new("eval", &cfg).with_input("scenario", scenario.as_str()).with_input(
        "plant",
        match plant {
            PlantKind::True => "true",
            PlantKind::Nominal => "nominal",
        },
    );
    if let Some(d) = ck_digest {
        manifest = manifest.with_input("checkpoint_sha256", d);
    }
    write_json(&common.out.join("manifest.json"), &manifest)?;
    write_trajectory_csv(&common.out.join("trajectory.csv"), &report.log)?;
    write_json(&common.out.join("metrics.json"), &report.metrics)?;
    println!("{}", serde_json::to_string(&report.metrics)?);
    Ok(())
}

fn cmd_metrics(common: &Common, input: &Path) -> anyhow::Result<()> {
    let cfg = load_config(common)?;
    let log = read_trajectory_csv(input).with_context(|| format!("reading {}", input.display()))?;
    let finished = log.len() == cfg.eval_steps();
    let metrics = compute_metrics(&log, finished, cfg.eval.bound)?;
    prepare_out(&common.out)?;
    write_json(&common.out.join("metrics.json"), &metrics)?;
    println!("{}", serde_json::to_string(&metrics)?);
    Ok(())
}

fn cmd_gradcheck(common: &Common, seeds: u64, tolerance: f64) -> anyhow::Result<()> {
    let start = common.seed.unwrap_or(0);
    let report = run_gradcheck(start..start + seeds, &[8, 8], 8, 1e-5);
    prepare_out(&common.out)?;
    write_json(&common.out.join("gradcheck.json"), &report)?;
    println!("{}", serde_json::to_string(&report)?);
    if report.max_rel() >= tolerance {
        bail!("max relative error {:.3e} exceeds {tolerance:.1e}", report.max_rel());
    }
    Ok(())
}

fn cmd_oracle(common: &Common, mdps: usize, alpha: f64, gamma: f64) -> anyhow::Result<()> {
    if !(alpha > 0.0 && gamma > 0.0 && gamma < 1.0) {
        bail!("need alpha > 0 and 0 < gamma < 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed.unwrap_or(0));
    let report = run_oracle(&mut rng, mdps, alpha, gamma);
    prepare_out(&common.out)?;
    write_json(&common.out.join("oracle.json"), &report)?;
    println!("{}", serde_json::to_string(&report)?);
    if !(report.all_converged && report.min_improvement >= -1e-12 && report.max_limit_gap < 1e-8) {
        bail!("soft policy iteration check failed");
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { common, mode, episodes } => cmd_train(&common, mode, episodes),
        Command::Eval { common, checkpoint, scenario, plant } => cmd_eval(&common, checkpoint.as_deref(), scenario, plant.into()),
        Command::Metrics { common, input } => cmd_metrics(&common, &input),
        Command::Gradcheck { common, seeds, tolerance } => cmd_gradcheck(&common, seeds, tolerance),
        Command::Oracle { common, mdps, alpha, gamma } => cmd_oracle(&common, mdps, alpha, gamma),
    }
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| e.downcast_ref::<mrrl_core::Error>())
        .map(|e| e.kind())
        .unwrap_or("failed")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let line = json!({ "error": error_kind(&err), "message": format!("{err:#}") });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
