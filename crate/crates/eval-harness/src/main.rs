use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;
use eval_harness::{evaluate_checkpoint, evaluate_real, format_table, SurrogateConfig, Surrogates};
use scene_data::{load_dataset, SceneSample};

#[derive(Parser)]
#[command(name = "evaluate", about = "Score checkpoints against a dataset's test split")]
struct Cli {
    /// Model checkpoints; one report row each.
    #[arg(long)]
    checkpoint: Vec<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// JSON report output.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value = "surrogates")]
    surrogates: PathBuf,
    /// Fit the surrogates on the training split and save them first.
    #[arg(long)]
    train_surrogates: bool,
    /// Also score the real test images.
    #[arg(long)]
    real: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let split = load_dataset(&cli.data).with_context(|| format!("loading dataset {}", cli.data.display()))?;
    let surrogates = if cli.train_surrogates {
        let train = split.load_train()?;
        let refs: Vec<&SceneSample> = train.iter().map(|s| s.as_ref()).collect();
        let s = Surrogates::train(&refs, split.manifest.num_classes as usize, &SurrogateConfig::default())?;
        s.save(&cli.surrogates)?;
        s
    } else {
        Surrogates::load(&cli.surrogates)?
    };
    let test_owned = split.load_test()?;
    let test: Vec<&SceneSample> = test_owned.iter().map(|s| s.as_ref()).collect();
    if test.is_empty() {
        bail!("dataset has no test samples");
    }
    let mut rows = Vec::new();
    if cli.real {
        rows.push(evaluate_real(&test, &surrogates)?);
    }
    for path in &cli.checkpoint {
        rows.push(evaluate_checkpoint(path, &test, &surrogates, cli.seed).with_context(|| format!("evaluating {}", path.display()))?);
    }
    print!("{}", format_table(&rows));
    if let Some(out) = &cli.report {
        std::fs::write(out, serde_json::to_string_pretty(&rows)?)?;
    }
    Ok(())
}
