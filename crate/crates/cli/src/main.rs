use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use cigan_core::pipeline::{self, parse_vector, PipelineError, RunConfig};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

/// Causal InfoGAN on 2D particle domains.
#[derive(Debug, Parser)]
#[command(name = "cigan", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat JSON config file; keys not given keep their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set iterations=5000`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (config key `out_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Base seed (config key `seed`).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the random-walk dataset for the configured domain and seed.
    GenData,
    /// Train a model on the configured domain and seed.
    Train {
        /// Continue a partial run from its last evaluation point.
        #[arg(long)]
        resume: bool,
    },
    /// Plan one start/goal query with a checkpoint.
    Plan {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Comma-separated observation, e.g. `-0.5,0.5`.
        #[arg(long, allow_hyphen_values = true)]
        start: String,
        #[arg(long, allow_hyphen_values = true)]
        goal: String,
    },
    /// Score the model and the baselines on the test tasks.
    Eval,
    /// Run every domain and seed and write the method-by-domain table.
    Table2,
    /// Write cluster, key-pickup and walkthrough figures.
    Plots,
}

fn load_config(c: &Common) -> Result<RunConfig, PipelineError> {
    let text = match &c.config {
        Some(p) => Some(
            std::fs::read_to_string(p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    let mut cfg = RunConfig::layered(text.as_deref(), &c.sets)?;
    if let Some(o) = &c.out {
        cfg.out_dir = o.to_string_lossy().into_owned();
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let name = cfg.domain_name();
    match cli.command {
        Command::GenData => {
            let r = pipeline::gen_data(&cfg, name, cfg.seed)?;
            println!("{} pairs in {}", r.manifest.info["n_pairs"], r.dir.display());
        }
        Command::Train { resume } => {
            let r = pipeline::train(&cfg, name, cfg.seed, resume)?;
            println!(
                "best iteration {} (validation feasibility {}) in {}",
                r.manifest.info["best_iteration"],
                r.manifest.info["best_val_feas"],
                r.dir.display()
            );
        }
        Command::Plan { checkpoint, start, goal } => {
            let (start, goal) = (parse_vector(&start)?, parse_vector(&goal)?);
            let out = PathBuf::from(&cfg.out_dir).join("plan");
            let w = pipeline::plan_once(&cfg, &checkpoint, &start, &goal, &out)?;
            match w.plan() {
                None => println!("no path"),
                Some(obs) => {
                    println!("score {}", w.score);
                    for o in obs {
                        let xs: Vec<String> = o.iter().map(|v| format!("{v}")).collect();
                        println!("{}", xs.join(","));
                    }
                }
            }
        }
        Command::Eval => {
            let (st, report) = pipeline::eval_stage(&cfg, name, cfg.seed)?;
            for row in report.rows.iter().filter(|r| !r.method.contains('[')) {
                println!("{:<16} {:>6.1}%", row.method, 100.0 * row.rate);
            }
            println!("report in {}", st.dir.display());
        }
        Command::Table2 => {
            let (report, stages) = pipeline::table2(&cfg)?;
            let cached = stages.iter().filter(|s| s.cached).count();
            println!("{}", report.table.to_markdown());
            println!("{} of {} stages served from cache", cached, stages.len());
        }
        Command::Plots => {
            for p in pipeline::plots(&cfg, name, cfg.seed)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            let usage = e.chain().any(|c| c.downcast_ref::<PipelineError>().is_some_and(PipelineError::is_usage));
            ExitCode::from(if usage { 1 } else { 2 })
        }
    }
}
