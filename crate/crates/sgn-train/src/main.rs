use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use scene_data::{load_dataset, preprocess, PreprocessConfig, SceneSample};
use sgn_train::{train_schedule, TrainConfig};

#[derive(Parser)]
#[command(name = "sgn", about = "Train the scene generation network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run (or resume) the three-phase schedule.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default configuration as JSON.
    DefaultConfig {
        #[arg(long)]
        desk: bool,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train { config, data, out } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let cfg: TrainConfig = serde_json::from_str(&text).context("parsing training config")?;
            let split = load_dataset(&data).with_context(|| format!("loading dataset {}", data.display()))?;
            let side = cfg.net.fine_resolution;
            let prep = PreprocessConfig { target: side, pad_narrow: true };
            let mut pool = Vec::new();
            for s in split.load_train()? {
                if s.layout.dim() == (side, side) {
                    pool.push(s);
                } else {
                    let (image, layout) = preprocess(&s.image, &s.layout, &prep)?;
                    pool.push(SceneSample::new(s.id.clone(), image, layout, s.attributes.clone())?.into());
                }
            }
            if pool.is_empty() {
                bail!("dataset has no training samples");
            }
            let outcome = train_schedule(pool, &split.manifest, &cfg, Some(&out), None)?;
            if let Some(last) = outcome.reports.last() {
                log::info!("finished at iteration {}: {last:?}", last.iteration);
            }
            println!("{}", out.join(sgn_train::train::MODEL_FILE).display());
        }
        Command::DefaultConfig { desk } => {
            let cfg = if desk { TrainConfig::desk() } else { TrainConfig::default() };
            println!("{}", serde_json::to_string_pretty(&cfg)?);
        }
    }
    Ok(())
}
