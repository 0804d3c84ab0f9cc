use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use phototransfer::{transfer_pipeline, TimingRow, TransferConfig};
use scene_data::dataset::{read_label_png, read_rgb_png};
use scene_data::scene::{from_rgb8, to_rgb8};

/// Move the look of a style image onto an input image, region by region.
#[derive(Parser, Debug)]
#[command(name = "transfer", version)]
struct Cli {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    input_layout: PathBuf,
    #[arg(long)]
    style: PathBuf,
    #[arg(long)]
    style_layout: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    sigma_s: Option<f64>,
    #[arg(long)]
    sigma_r: Option<f64>,
    #[arg(long)]
    lambda_f: Option<f64>,
    /// Apply the cross bilateral filter before enhancement.
    #[arg(long)]
    bilateral: bool,
    #[arg(long, default_value_t = scene_data::DESK_NUM_CLASSES)]
    num_classes: u32,
    #[arg(long)]
    out: PathBuf,
    /// Write every intermediate stage as a PNG into this directory.
    #[arg(long)]
    dump_stages: Option<PathBuf>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut cfg = TransferConfig::default();
    cfg.alpha = cli.alpha.unwrap_or(cfg.alpha);
    cfg.sigma_spatial = cli.sigma_s.unwrap_or(cfg.sigma_spatial);
    cfg.sigma_range = cli.sigma_r.unwrap_or(cfg.sigma_range);
    cfg.lambda_f = cli.lambda_f.unwrap_or(cfg.lambda_f);
    cfg.use_bilateral = cli.bilateral;

    let input = from_rgb8(&read_rgb_png(&cli.input)?);
    let style = from_rgb8(&read_rgb_png(&cli.style)?);
    let input_layout = read_label_png(&cli.input_layout, cli.num_classes)?;
    let style_layout = read_label_png(&cli.style_layout, cli.num_classes)?;
    let result = transfer_pipeline(&input, &input_layout, &style, &style_layout, &cfg)?;

    to_rgb8(&result.output).save(&cli.out).with_context(|| format!("writing {}", cli.out.display()))?;
    if let Some(dir) = &cli.dump_stages {
        std::fs::create_dir_all(dir)?;
        for (i, s) in result.stages.iter().enumerate() {
            let path = dir.join(format!("{i}_{}.png", s.stage.name()));
            to_rgb8(&s.image.mapv(|v| v.clamp(-1.0, 1.0))).save(&path).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    println!("{}", TimingRow::HEADER);
    println!("{}", result.timing_row(0.0));
    Ok(())
}
