use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use phototransfer::{TimingRow, TransferConfig};
use scene_data::scene::{from_rgb8, to_rgb8};
use scene_data::{AttributeVector, SemanticLayout};
use studio_service::{manipulate, router, AppState, LoadedModel, ManipulateInput, Registry, CHECKPOINT_ENV};

#[derive(Parser)]
#[command(name = "studio", about = "Attribute-driven scene manipulation")]
struct Cli {
    /// Checkpoint file or directory; falls back to the environment variable.
    #[arg(long, env = CHECKPOINT_ENV, global = true)]
    checkpoint: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Edit one photo to new attribute values.
    Manipulate {
        #[arg(long)]
        input: PathBuf,
        /// Single-channel label PNG aligned with the input.
        #[arg(long)]
        layout: PathBuf,
        /// `name=value` overrides on top of all-zero attributes, e.g. `night=0.8,clouds=0.3`.
        #[arg(long, default_value = "")]
        attr: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the hallucination and every stage next to `--out`.
        #[arg(long)]
        dump_stages: bool,
        /// Transfer settings as JSON; missing fields keep their defaults.
        #[arg(long)]
        transfer: Option<String>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Serve { addr } => {
            let registry = Registry::new();
            match &cli.checkpoint {
                Some(p) => {
                    let m = registry.load(p).with_context(|| format!("loading {}", p.display()))?;
                    log::info!("checkpoint {} ({})", m.path.display(), m.hash);
                }
                None => log::warn!("no checkpoint configured; model endpoints answer 409 until one is loaded"),
            }
            let app = router(AppState::new(registry));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                log::info!("listening on {addr}");
                axum::serve(listener, app).await
            })?;
        }
        Command::Manipulate { input, layout, attr, seed, out, dump_stages, transfer } => {
            let Some(ck) = &cli.checkpoint else {
                bail!("no checkpoint: pass --checkpoint or set {CHECKPOINT_ENV}");
            };
            let model = LoadedModel::load(ck).with_context(|| format!("loading {}", ck.display()))?;
            let image = from_rgb8(&image::open(&input).with_context(|| format!("reading {}", input.display()))?.to_rgb8());
            let gray = image::open(&layout).with_context(|| format!("reading {}", layout.display()))?.to_luma8();
            let labels = ndarray::Array2::from_shape_fn((gray.height() as usize, gray.width() as usize), |(y, x)| gray.get_pixel(x as u32, y as u32)[0]);
            let layout = SemanticLayout::new(labels, model.num_classes())?;
            let attributes = AttributeVector::parse_overrides(&AttributeVector::zeros(model.attribute_names().to_vec()), &attr)?;
            let transfer: TransferConfig = match transfer {
                Some(json) => serde_json::from_str(&json).context("parsing --transfer")?,
                None => TransferConfig::default(),
            };
            let result = manipulate(&model, &ManipulateInput { image, layout, attributes: attributes.values().to_vec(), seed, transfer })?;
            to_rgb8(&result.output).save(&out).with_context(|| format!("writing {}", out.display()))?;
            if dump_stages {
                let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let dir = out.parent().map(PathBuf::from).unwrap_or_default();
                to_rgb8(&result.hallucination).save(dir.join(format!("{stem}_hallucination.png")))?;
                for s in &result.stages {
                    to_rgb8(&s.image).save(dir.join(format!("{stem}_{}.png", s.stage.name())))?;
                }
            }
            println!("{}", TimingRow::HEADER);
            println!("{}", result.timing);
            println!("checkpoint {} seed {seed}", model.hash);
        }
    }
    Ok(())
}
