//! One adversarial update per batch and the three-phase schedule around it.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scene_data::{AttributeVector, Manifest, SceneSample, SemanticLayout, SharedSample};
use serde::{Deserialize, Serialize};
use sgn_nets::nets::{build_pyramid_levels, layout_batch_at, pyramid_vars};
use sgn_nets::{
    attribute_batch, forward_discriminator, forward_generator, image_batch, noise_batch, Adam, AdamConfig, Checkpoint,
    GeneratorInputs, Graph, NoiseMap, ParamStore, SgnModel, Surrogate, Tensor, Var, D_COARSE, D_FINE,
};

use crate::config::TrainConfig;
use crate::error::{Result, TrainError};
use crate::losses::{discriminator_loss_graph, generator_adversarial_graph, perceptual_graph};
use crate::perceptual::{train_perceptual_encoder, PerceptualEncoder};
use crate::rnm::RnmIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// G1 alone against the coarse discriminators.
    Coarse,
    /// G2 with G1 frozen.
    Fine,
    /// G1 and G2 together.
    Joint,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Coarse => "coarse",
            Phase::Fine => "fine",
            Phase::Joint => "joint",
        }
    }

    pub fn discriminator_prefix(self) -> &'static str {
        match self {
            Phase::Coarse => D_COARSE,
            _ => D_FINE,
        }
    }
}

/// Uniform draw over `[0, 1]^A`, independent of any anchor.
pub fn sample_negative_attributes<R: Rng + ?Sized>(names: &[String], rng: &mut R) -> AttributeVector {
    AttributeVector::uniform(names.to_vec(), rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub iteration: u64,
    pub phase: Phase,
    /// One entry per discriminator scale.
    pub d_losses: Vec<f64>,
    pub g_adversarial: f64,
    pub perceptual: f64,
    pub g_total: f64,
}

/// Real images, conditions, negatives and noise for one update.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub images: Tensor,
    pub layouts: Vec<SemanticLayout>,
    pub attributes: Tensor,
    pub neg_layouts: Vec<SemanticLayout>,
    pub neg_attributes: Tensor,
    pub noise: Tensor,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.layouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layouts.is_empty()
    }
}

pub struct Trainer {
    pub model: SgnModel,
    pub config: TrainConfig,
    pub opt_g: Adam,
    pub opt_d: Adam,
    pub encoder: Option<PerceptualEncoder>,
    pub iteration: u64,
    pool: Vec<SharedSample>,
    rnm: Option<RnmIndex>,
}

fn divergence(iteration: u64, what: impl Into<String>, value: f64) -> TrainError {
    TrainError::Divergence { iteration, what: what.into(), value, dump: None }
}

impl Trainer {
    pub fn new(model: SgnModel, config: TrainConfig, pool: Vec<SharedSample>, encoder: Option<PerceptualEncoder>) -> Result<Self> {
        config.validate()?;
        if pool.len() < 2 {
            return Err(TrainError::NoNegative(pool.len()));
        }
        let side = model.fine_resolution();
        if let Some(s) = pool.iter().find(|s| s.layout.dim() != (side, side)) {
            return Err(TrainError::Shape(format!("sample {} is {:?}, model expects {side}²", s.id, s.layout.dim())));
        }
        if config.use_perceptual && encoder.is_none() {
            return Err(TrainError::Config("perceptual loss enabled without an encoder".into()));
        }
        let rnm = if config.use_rnm {
            let refs: Vec<&SceneSample> = pool.iter().map(|s| s.as_ref()).collect();
            Some(RnmIndex::build(&refs)?)
        } else {
            None
        };
        let adam = AdamConfig { lr: config.learning_rate, beta1: config.beta1, ..AdamConfig::default() };
        Ok(Self { model, config, opt_g: Adam::new(adam), opt_d: Adam::new(adam), encoder, iteration: 0, pool, rnm })
    }

    pub fn pool(&self) -> &[SharedSample] {
        &self.pool
    }

    /// Assembles a batch from pool indices, drawing flips, negatives and noise from `rng`.
    pub fn make_batch(&self, indices: &[usize], rng: &mut impl Rng) -> Result<TrainBatch> {
        let gs = &self.model.spec.generator;
        let names = &self.model.spec.attribute_names;
        let mut images = Vec::with_capacity(indices.len());
        let (mut layouts, mut neg_layouts) = (Vec::new(), Vec::new());
        let (mut attrs, mut neg_attrs, mut noise) = (Vec::new(), Vec::new(), Vec::new());
        for &i in indices {
            let s = &self.pool[i];
            let flip = rng.random::<f64>() < self.config.flip_probability;
            let neighbor = match &self.rnm {
                Some(index) => index.neighbors[i],
                None => {
                    let j = rng.random_range(0..self.pool.len() - 1);
                    if j >= i {
                        j + 1
                    } else {
                        j
                    }
                }
            };
            let neg_layout = &self.pool[neighbor].layout;
            if flip {
                let f = s.flip_horizontal();
                images.push(f.image);
                layouts.push(f.layout);
                neg_layouts.push(neg_layout.flip_horizontal());
            } else {
                images.push(s.image.clone());
                layouts.push(s.layout.clone());
                neg_layouts.push(neg_layout.clone());
            }
            attrs.push(s.attributes.clone());
            neg_attrs.push(sample_negative_attributes(names, rng));
            noise.push(NoiseMap::sample(gs.noise_channels, gs.fine_resolution, gs.fine_resolution, rng));
        }
        let image_refs: Vec<_> = images.iter().collect();
        Ok(TrainBatch {
            images: image_batch(&image_refs)?,
            layouts,
            attributes: attribute_batch(&attrs.iter().collect::<Vec<_>>())?,
            neg_layouts,
            neg_attributes: attribute_batch(&neg_attrs.iter().collect::<Vec<_>>())?,
            noise: noise_batch(&noise)?,
        })
    }

    fn output_side(&self, phase: Phase) -> usize {
        match phase {
            Phase::Coarse => self.model.spec.generator.base_resolution,
            _ => self.model.spec.generator.fine_resolution,
        }
    }

    fn real_images(&self, batch: &TrainBatch, phase: Phase) -> Result<Tensor> {
        Ok(match phase {
            Phase::Coarse => build_pyramid_levels(&batch.images, 2)?.levels.pop().expect("two levels"),
            _ => batch.images.clone(),
        })
    }

    fn layout_planes(&self, layouts: &[SemanticLayout], side: usize) -> Result<Tensor> {
        let refs: Vec<&SemanticLayout> = layouts.iter().collect();
        Ok(layout_batch_at(&refs, self.model.spec.generator.layout_bits, side)?)
    }

    /// Generator pass; returns the graph and the image node trained in `phase`.
    fn generator_forward(&self, batch: &TrainBatch, phase: Phase) -> Result<(Graph, Var)> {
        let spec = &self.model.spec.generator;
        let mut g = Graph::new();
        g.freeze(D_COARSE);
        g.freeze(D_FINE);
        if phase == Phase::Fine {
            g.freeze("g1.");
        }
        let refs: Vec<&SemanticLayout> = batch.layouts.iter().collect();
        let inputs = GeneratorInputs {
            noise: g.constant(batch.noise.clone()),
            layout: g.constant(sgn_nets::layout_batch(&refs, spec.layout_bits)?),
            attributes: g.constant(batch.attributes.clone()),
        };
        let out = forward_generator(&mut g, &self.model.params, spec, inputs, phase != Phase::Coarse)?;
        let x_g = match phase {
            Phase::Coarse => out.coarse,
            _ => out.fine.expect("fine output requested"),
        };
        Ok((g, x_g))
    }

    /// Adds the generator objective to `g`; returns the total node and its parts.
    fn generator_objective_on(
        &self,
        g: &mut Graph,
        x_g: Var,
        batch: &TrainBatch,
        phase: Phase,
        lambda: f64,
    ) -> Result<(Var, f64, f64)> {
        let dspec = &self.model.spec.discriminator;
        let side = self.output_side(phase);
        let levels = pyramid_vars(g, x_g, dspec.num_scales);
        let attrs = g.constant(batch.attributes.clone());
        let mut adv: Option<Var> = None;
        for (k, &x) in levels.iter().enumerate() {
            let s_k = g.constant(self.layout_planes(&batch.layouts, side >> k)?);
            let name = format!("{}.{k}", phase.discriminator_prefix());
            let d = forward_discriminator(g, &self.model.params, dspec, &name, x, attrs, s_k)?;
            let l = generator_adversarial_graph(g, d);
            adv = Some(match adv {
                Some(a) => g.add(a, l),
                None => l,
            });
        }
        let adv = adv.ok_or_else(|| TrainError::Config("no discriminator scales".into()))?;
        let adv_value = g.scalar(adv);
        match (&self.encoder, self.config.use_perceptual) {
            (Some(enc), true) => {
                let real = self.real_images(batch, phase)?;
                let real_f = g.constant(enc.feature_tensor(&real)?);
                let fake_f = enc.features(g, x_g)?;
                let perc = perceptual_graph(g, real_f, fake_f);
                let perc_value = g.scalar(perc);
                let weighted = g.scale(perc, lambda);
                Ok((g.add(adv, weighted), adv_value, perc_value))
            }
            _ => Ok((adv, adv_value, 0.0)),
        }
    }

    /// Generator objective at the current parameters, without updating anything.
    pub fn generator_objective(&self, batch: &TrainBatch, phase: Phase, lambda: f64) -> Result<LossReport> {
        let (mut g, x_g) = self.generator_forward(batch, phase)?;
        let (total, adv, perc) = self.generator_objective_on(&mut g, x_g, batch, phase, lambda)?;
        Ok(LossReport {
            iteration: self.iteration,
            phase,
            d_losses: Vec::new(),
            g_adversarial: adv,
            perceptual: perc,
            g_total: g.scalar(total),
        })
    }

    /// Gradients of the generator objective with respect to generator parameters.
    pub fn generator_gradients(&self, batch: &TrainBatch, phase: Phase, lambda: f64) -> Result<ParamStore> {
        let (mut g, x_g) = self.generator_forward(batch, phase)?;
        let (total, _, _) = self.generator_objective_on(&mut g, x_g, batch, phase, lambda)?;
        let grads = g.backward(total);
        let mut out = ParamStore::new();
        for (name, t) in grads.params() {
            out.insert(name, t.clone());
        }
        Ok(out)
    }

    /// Updates every `D_k` once, then the generator once.
    pub fn train_step(&mut self, batch: &TrainBatch, phase: Phase) -> Result<LossReport> {
        self.iteration += 1;
        let it = self.iteration;
        let (mut g, x_g) = self.generator_forward(batch, phase)?;
        let fake = g.value(x_g).clone();
        let real = self.real_images(batch, phase)?;
        let dspec = self.model.spec.discriminator.clone();
        let side = self.output_side(phase);
        let reals = build_pyramid_levels(&real, dspec.num_scales)?.levels;
        let fakes = build_pyramid_levels(&fake, dspec.num_scales)?.levels;

        let mut d_losses = Vec::with_capacity(dspec.num_scales);
        for k in 0..dspec.num_scales {
            let name = format!("{}.{k}", phase.discriminator_prefix());
            let mut gd = Graph::new();
            let s_k = gd.constant(self.layout_planes(&batch.layouts, side >> k)?);
            let s_neg = gd.constant(self.layout_planes(&batch.neg_layouts, side >> k)?);
            let a = gd.constant(batch.attributes.clone());
            let a_neg = gd.constant(batch.neg_attributes.clone());
            let xr = gd.constant(reals[k].clone());
            let xf = gd.constant(fakes[k].clone());
            let dr = forward_discriminator(&mut gd, &self.model.params, &dspec, &name, xr, a, s_k)?;
            let df = forward_discriminator(&mut gd, &self.model.params, &dspec, &name, xf, a, s_k)?;
            let dm = forward_discriminator(&mut gd, &self.model.params, &dspec, &name, xr, a_neg, s_neg)?;
            let loss = discriminator_loss_graph(&mut gd, dr, df, dm);
            let value = gd.scalar(loss);
            if !value.is_finite() {
                return Err(divergence(it, format!("L_D{}", k + 1), value));
            }
            let grads = gd.backward(loss);
            self.opt_d.step(&mut self.model.params, &grads);
            d_losses.push(value);
        }

        let lambda = self.config.lambda;
        let (total, adv, perc) = self.generator_objective_on(&mut g, x_g, batch, phase, lambda)?;
        let g_total = g.scalar(total);
        if !g_total.is_finite() {
            return Err(divergence(it, "L_G", g_total));
        }
        let grads = g.backward(total);
        self.opt_g.step(&mut self.model.params, &grads);
        Ok(LossReport { iteration: it, phase, d_losses, g_adversarial: adv, perceptual: perc, g_total })
    }
}

/// Phase for a zero-based epoch index.
pub fn phase_for_epoch(config: &TrainConfig, epoch: usize) -> Phase {
    let p = config.phase_epochs();
    if epoch < p.coarse {
        Phase::Coarse
    } else if epoch < p.coarse + p.fine {
        Phase::Fine
    } else {
        Phase::Joint
    }
}

pub const MODEL_FILE: &str = "model.ckpt";
pub const STATE_FILE: &str = "train_state.ckpt";
pub const ENCODER_FILE: &str = "perceptual.ckpt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const DIVERGED_FILE: &str = "diverged.ckpt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrainState {
    epochs_done: usize,
    iteration: u64,
    config: TrainConfig,
    encoder_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseBoundary {
    pub phase: Phase,
    pub start_epoch: usize,
    pub start_iteration: u64,
}

pub struct ScheduleOutcome {
    pub model: SgnModel,
    pub encoder: Option<PerceptualEncoder>,
    pub reports: Vec<LossReport>,
    pub boundaries: Vec<PhaseBoundary>,
    pub resumed_from_epoch: Option<usize>,
}

fn prefixed(store: ParamStore, prefix: &str) -> ParamStore {
    let mut out = ParamStore::new();
    for (k, v) in store.iter() {
        out.insert(format!("{prefix}{k}"), v.clone());
    }
    out
}

fn strip(store: &ParamStore, prefix: &str) -> ParamStore {
    let mut out = ParamStore::new();
    for (k, v) in store.iter() {
        if let Some(rest) = k.strip_prefix(prefix) {
            out.insert(rest, v.clone());
        }
    }
    out
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (epoch as u64 + 1).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

fn save_state(dir: &Path, trainer: &Trainer, epochs_done: usize) -> Result<()> {
    trainer.model.save(dir.join(MODEL_FILE))?;
    let state = TrainState {
        epochs_done,
        iteration: trainer.iteration,
        config: trainer.config.clone(),
        encoder_accuracy: trainer.encoder.as_ref().map(|e| e.held_out_accuracy),
    };
    let mut params = prefixed(trainer.opt_g.state_store(), "opt_g:");
    params.merge(prefixed(trainer.opt_d.state_store(), "opt_d:"));
    Checkpoint::new(&state, params)?.save(dir.join(STATE_FILE))?;
    Ok(())
}

const CSV_HEADER: [&str; 9] = ["iteration", "epoch", "phase", "L_D1", "L_D2", "L_D3", "L_G_adv", "L_percep", "L_G_total"];

fn csv_row(r: &LossReport, epoch: usize) -> Vec<String> {
    let d = |k: usize| r.d_losses.get(k).map(|v| v.to_string()).unwrap_or_default();
    vec![
        r.iteration.to_string(),
        epoch.to_string(),
        r.phase.name().to_string(),
        d(0),
        d(1),
        d(2),
        r.g_adversarial.to_string(),
        r.perceptual.to_string(),
        r.g_total.to_string(),
    ]
}

/// Keeps only rows up to `iteration`, so a resumed log matches its checkpoint.
fn truncate_log(path: &Path, iteration: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let mut reader = csv::Reader::from_path(path)?;
    let rows: Vec<csv::StringRecord> = reader
        .records()
        .filter_map(|r| r.ok())
        .filter(|r| r.get(0).and_then(|v| v.parse::<u64>().ok()).is_some_and(|i| i <= iteration))
        .collect();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Splits off the last `fraction` of `pool` for the encoder's accuracy gate.
fn holdout_split(pool: &[SharedSample], fraction: f64) -> (Vec<&SceneSample>, Vec<&SceneSample>) {
    let n_hold = ((pool.len() as f64 * fraction).ceil() as usize).clamp(1, pool.len().saturating_sub(1).max(1));
    let cut = pool.len() - n_hold;
    let all: Vec<&SceneSample> = pool.iter().map(|s| s.as_ref()).collect();
    let (train, held) = all.split_at(cut);
    (train.to_vec(), held.to_vec())
}

/// Runs the coarse → fine → joint schedule.
///
/// With `out_dir`, checkpoints, the encoder and `metrics.csv` are written
/// there, and an existing training state in that directory is resumed.
pub fn train_schedule(
    pool: Vec<SharedSample>,
    manifest: &Manifest,
    config: &TrainConfig,
    out_dir: Option<&Path>,
    encoder: Option<PerceptualEncoder>,
) -> Result<ScheduleOutcome> {
    config.validate()?;
    if pool.is_empty() {
        return Err(TrainError::Config("training set is empty".into()));
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    let state_path = out_dir.map(|d| d.join(STATE_FILE));
    let resume = state_path.as_ref().is_some_and(|p| p.exists());

    let (model, mut encoder, epochs_done, iteration, opt_states) = if resume {
        let dir = out_dir.expect("resume implies a directory");
        let ck = Checkpoint::load(dir.join(STATE_FILE))?;
        let state: TrainState = ck.spec()?;
        if state.config.net != config.net || state.config.seed != config.seed {
            return Err(TrainError::Config("existing training state was produced by a different configuration".into()));
        }
        let model = SgnModel::load(dir.join(MODEL_FILE))?;
        let enc = match (&encoder, config.use_perceptual) {
            (Some(e), _) => Some(e.clone()),
            (None, true) => {
                let net = Surrogate::from_checkpoint(&Checkpoint::load(dir.join(ENCODER_FILE))?)?;
                Some(PerceptualEncoder::from_segmenter(net, state.encoder_accuracy.unwrap_or(f64::NAN))?)
            }
            (None, false) => None,
        };
        log::info!("resuming from epoch {} (iteration {})", state.epochs_done, state.iteration);
        let opt = (strip(&ck.params, "opt_g:"), strip(&ck.params, "opt_d:"));
        (model, enc, state.epochs_done, state.iteration, Some(opt))
    } else {
        (SgnModel::new(config.model_spec(manifest), config.seed)?, encoder, 0, 0, None)
    };

    if config.use_perceptual && encoder.is_none() {
        let pcfg = config.perceptual_config(manifest.num_classes as usize);
        let (train, held) = holdout_split(&pool, pcfg.held_out_fraction);
        let enc = train_perceptual_encoder(&train, &held, &pcfg)?;
        encoder = Some(enc);
    }
    if let (Some(dir), Some(enc)) = (out_dir, &encoder) {
        let path = dir.join(ENCODER_FILE);
        if !path.exists() {
            enc.net.to_checkpoint()?.save(path)?;
        }
    }

    let mut trainer = Trainer::new(model, config.clone(), pool, encoder)?;
    trainer.iteration = iteration;
    if let Some((g, d)) = opt_states {
        let adam = trainer.opt_g.config;
        trainer.opt_g = Adam::from_state_store(adam, &g);
        trainer.opt_d = Adam::from_state_store(adam, &d);
    }

    let metrics_path = out_dir.map(|d| d.join(METRICS_FILE));
    let mut log_writer = match &metrics_path {
        Some(p) => {
            let fresh = !resume || !p.exists();
            if !fresh {
                truncate_log(p, iteration)?;
            }
            let file = fs::OpenOptions::new().create(true).append(true).open(p)?;
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
            if fresh {
                w.write_record(CSV_HEADER)?;
            }
            Some(w)
        }
        None => None,
    };

    let total = config.phase_epochs().total();
    let mut reports = Vec::new();
    let mut boundaries: Vec<PhaseBoundary> = Vec::new();
    let n = trainer.pool().len();
    for epoch in epochs_done..total {
        let phase = phase_for_epoch(config, epoch);
        if boundaries.last().map(|b| b.phase) != Some(phase) {
            log::info!("phase {} starts at epoch {epoch}, iteration {}", phase.name(), trainer.iteration + 1);
            boundaries.push(PhaseBoundary { phase, start_epoch: epoch, start_iteration: trainer.iteration + 1 });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(config.seed, epoch));
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch = trainer.make_batch(chunk, &mut rng)?;
            let report = match trainer.train_step(&batch, phase) {
                Ok(r) => r,
                Err(TrainError::Divergence { iteration, what, value, .. }) => {
                    let dump = match out_dir {
                        Some(dir) => {
                            let p = dir.join(DIVERGED_FILE);
                            trainer.model.save(&p)?;
                            Some(p)
                        }
                        None => None,
                    };
                    return Err(TrainError::Divergence { iteration, what, value, dump });
                }
                Err(e) => return Err(e),
            };
            if let Some(w) = log_writer.as_mut() {
                w.write_record(csv_row(&report, epoch))?;
            }
            log::debug!("{report:?}");
            reports.push(report);
        }
        if let Some(w) = log_writer.as_mut() {
            w.flush()?;
        }
        let done = epoch + 1;
        if let Some(dir) = out_dir {
            if done % config.checkpoint_every.max(1) == 0 || done == total {
                save_state(dir, &trainer, done)?;
            }
        }
    }

    Ok(ScheduleOutcome {
        resumed_from_epoch: resume.then_some(epochs_done),
        model: trainer.model,
        encoder: trainer.encoder,
        reports,
        boundaries,
    })
}

/// Paths written by [`train_schedule`] under `dir`.
pub fn output_paths(dir: &Path) -> [PathBuf; 4] {
    [dir.join(MODEL_FILE), dir.join(STATE_FILE), dir.join(ENCODER_FILE), dir.join(METRICS_FILE)]
}
