//! Pipeline driver: data generation, feedback labeling, representation and
//! reward training, RL transfer, reward evaluation, and the composite
//! reproduction pipelines.
//!
//! Every run writes under `<out>/run-<confighash>-s<seed>/` so reruns with
//! the same configuration land in the same place and are byte-identical.
//! `MQME_THREADS` caps worker parallelism.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use mqme_core::pipeline::{self, ExperimentConfig, PipelineMethod, RunDir};
use mqme_core::sim::EmbodimentKind;

#[derive(Parser)]
#[command(name = "mqme", about = "Cross-embodiment reward learning from mixed-quality data")]
struct Cli {
    /// Configuration file (TOML); defaults apply for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory holding run directories.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Held-out embodiment override (shortstick, mediumstick, longstick,
    /// gripper).
    #[arg(long, global = true)]
    held_out: Option<String>,

    /// Switch desk-scale defaults to the published hyperparameters.
    #[arg(long, global = true)]
    paper_scale: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the MQME dataset, the success-only dataset, and the goal set.
    GenData,
    /// Sample preference, triplet, and bucket labels.
    GenFeedback,
    /// Train the representation encoder for one method.
    TrainRep {
        #[arg(long)]
        method: String,
    },
    /// Build (training if needed) the reward model for one method.
    TrainReward {
        #[arg(long)]
        method: String,
    },
    /// Train tabular Q-learning on the held-out embodiment for one method.
    TrainRl {
        #[arg(long)]
        method: String,
    },
    /// Score one method's reward model on every embodiment's test split.
    EvalReward {
        #[arg(long)]
        method: String,
    },
    /// Merge per-method evaluation tables into a comparison report.
    Report,
    /// Reward-accuracy table across all reward methods and embodiments.
    ReproTable1,
    /// Learning curves for the full method legend on the held-out embodiment.
    ReproFig1,
    /// Static-vs-dynamic goal-embedding study and the RL comparison.
    ReproAppendixA,
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if cli.paper_scale {
        cfg = cfg.paper_scale();
    }
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(held_out) = &cli.held_out {
        cfg.roles.held_out = EmbodimentKind::from_name(held_out)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("MQME_THREADS") {
        let n: usize = v.parse().context("MQME_THREADS must be an integer")?;
        if n == 0 {
            bail!("MQME_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("initializing worker pool")?;
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    init_threads()?;
    let cfg = load_config(&cli)?;
    let run = RunDir::create(&cli.out, &cfg)?;
    println!("run directory: {}", run.root.display());

    match &cli.command {
        Command::GenData => {
            pipeline::gen_data(&cfg, &run)?;
            println!("dataset: {}", run.dataset_path().display());
            println!("success dataset: {}", run.success_dataset_path().display());
        }
        Command::GenFeedback => {
            let fb = pipeline::gen_feedback(&cfg, &run)?;
            println!(
                "feedback: {} ({} preferences, {} triplets, {} buckets)",
                run.feedback_path().display(),
                fb.preferences.len(),
                fb.triplets.len(),
                fb.buckets.map(|b| b.buckets.len()).unwrap_or(0)
            );
        }
        Command::TrainRep { method } => {
            let method = PipelineMethod::from_name(method)?;
            let (_, report) = pipeline::train_rep(&cfg, &run, method)?;
            println!(
                "trained {} in {:.1}s; final loss {:.6}",
                method.name(),
                report.wall_secs,
                report.losses.last().copied().unwrap_or(f64::NAN)
            );
            println!("checkpoint: {}", run.encoder_path(method).display());
        }
        Command::TrainReward { method } => {
            let method = PipelineMethod::from_name(method)?;
            let model = pipeline::train_reward(&cfg, &run, method)?;
            println!(
                "reward model ({}) -> {}",
                model.variant_name(),
                run.reward_path(method).display()
            );
        }
        Command::TrainRl { method } => {
            let method = PipelineMethod::from_name(method)?;
            let summary = pipeline::train_rl(&cfg, &run, method)?;
            println!(
                "{}: final return {:.3} +- {:.3} over {} seeds",
                method.name(),
                summary.mean.last().unwrap(),
                summary.stderr.last().unwrap(),
                summary.per_seed.len()
            );
            println!("curves: {}", run.rl_curve_path(method).display());
        }
        Command::EvalReward { method } => {
            let method = PipelineMethod::from_name(method)?;
            let rows = pipeline::eval_reward(&run, method)?;
            for r in rows {
                println!(
                    "{:12} tau {:+.3} accuracy {:.3}",
                    r.embodiment.name(),
                    r.tau,
                    r.accuracy
                );
            }
            println!("table: {}", run.eval_path(method).display());
        }
        Command::Report => {
            let text = pipeline::report(&run)?;
            print!("{text}");
        }
        Command::ReproTable1 => {
            let rows = pipeline::repro_table1(&cfg, &run)?;
            let held = cfg.roles.held_out;
            println!("held-out {}:", held.name());
            for r in rows.iter().filter(|r| r.embodiment == held) {
                println!(
                    "  {:16} tau {:+.3} accuracy {:.3}",
                    r.method.name(),
                    r.tau,
                    r.accuracy
                );
            }
            println!("table: {}", run.root.join("reports/table1.tsv").display());
        }
        Command::ReproFig1 => {
            let results = pipeline::repro_fig1(&cfg, &run)?;
            for (method, summary) in &results {
                println!(
                    "  {:16} final return {:.3} +- {:.3}",
                    method.name(),
                    summary.mean.last().unwrap(),
                    summary.stderr.last().unwrap()
                );
            }
            println!("table: {}", run.root.join("reports/fig1.tsv").display());
        }
        Command::ReproAppendixA => {
            let report = pipeline::repro_appendix_a(&cfg, &run)?;
            println!(
                "dynamic refresh events: {} (spike fraction {:.2})",
                report.dynamic_report.refresh_steps.len(),
                pipeline::refresh_spike_fraction(&report.dynamic_report)
            );
            println!(
                "static non-increasing window fraction: {:.2}",
                pipeline::non_increasing_window_fraction(&report.static_report.losses, 500)
            );
            println!(
                "xprefs-static {:.3} +- {:.3} vs xrlhf {:.3} +- {:.3}",
                report.xprefs_static_rl.mean.last().unwrap(),
                report.xprefs_static_rl.stderr.last().unwrap(),
                report.xrlhf_rl.mean.last().unwrap(),
                report.xrlhf_rl.stderr.last().unwrap()
            );
            println!(
                "table: {}",
                run.root.join("reports/appendix_a.tsv").display()
            );
        }
    }
    Ok(())
}
