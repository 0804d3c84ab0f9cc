use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use scene_data::{build_synthetic_corpus, load_als18k, write_dataset, CorpusConfig, OracleRecipe};

#[derive(Parser)]
#[command(name = "scene-data", about = "Synthetic scene corpora and ALS18K-format checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic corpus with the procedural oracle.
    Synth {
        #[arg(long, default_value_t = 1000)]
        n_train: usize,
        #[arg(long, default_value_t = 100)]
        n_test: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate an ALS18K-format tree and print split sizes.
    Check {
        #[arg(long)]
        root: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Synth { n_train, n_test, seed, resolution, out } => {
            let recipe = OracleRecipe::desk(seed);
            let cfg = CorpusConfig { resolution, n_train, n_test, seed };
            let split = build_synthetic_corpus(&recipe, &cfg).context("building corpus")?;
            write_dataset(&out, &split).with_context(|| format!("writing {}", out.display()))?;
            log::info!("wrote {} train / {} test samples to {}", n_train, n_test, out.display());
        }
        Command::Check { root } => {
            let split = load_als18k(&root)?;
            println!("train {} test {}", split.manifest.counts.train, split.manifest.counts.test);
        }
    }
    Ok(())
}
