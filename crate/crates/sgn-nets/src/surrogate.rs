//! Small supervised networks trained on the synthetic corpus: a segmenter
//! whose encoder doubles as the perceptual feature extractor, an attribute
//! regressor and a condition classifier used as the metric embedder.

use ndarray::{s, Array2, Axis, IxDyn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scene_data::SceneSample;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{NetError, Result};
use crate::graph::{Graph, Tensor, Var};
use crate::kernels::ConvGeom;
use crate::layers::{self, conv, conv_in_relu, linear};
use crate::nets::image_batch;
use crate::params::{Adam, AdamConfig, ParamStore};

const INIT_STD: f64 = 0.1;
const INFER_CHUNK: usize = 16;

/// Encoder–decoder segmenter with skip connections.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegNetSpec {
    pub width: usize,
    pub num_classes: usize,
    /// Encoder stage (0-based) whose activations serve as perceptual features.
    pub feature_layer: usize,
}

pub const SEG_STAGES: usize = 3;

impl SegNetSpec {
    pub fn new(num_classes: usize) -> Self {
        Self { width: 8, num_classes, feature_layer: SEG_STAGES - 1 }
    }

    fn widths(&self) -> [usize; SEG_STAGES] {
        [self.width, 2 * self.width, 4 * self.width]
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_layer >= SEG_STAGES || self.width == 0 || self.num_classes < 2 {
            return Err(NetError::Config(format!("invalid segmenter spec {self:?}")));
        }
        Ok(())
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        let w = self.widths();
        layers::init_conv(store, rng, "seg.enc0", w[0], 3, 3, INIT_STD);
        layers::init_conv(store, rng, "seg.enc1", w[1], w[0], 3, INIT_STD);
        layers::init_conv(store, rng, "seg.enc2", w[2], w[1], 3, INIT_STD);
        layers::init_conv(store, rng, "seg.dec1", w[1], w[2] + w[1], 3, INIT_STD);
        layers::init_conv(store, rng, "seg.dec0", w[0], w[1] + w[0], 3, INIT_STD);
        layers::init_conv(store, rng, "seg.head", self.num_classes, w[0], 1, INIT_STD);
    }
}

/// Encoder stage activations, shallowest first.
pub fn seg_encode(g: &mut Graph, store: &ParamStore, x: Var) -> Vec<Var> {
    let e0 = conv_in_relu(g, store, "seg.enc0", x, ConvGeom::new(3, 1, 1));
    let e1 = conv_in_relu(g, store, "seg.enc1", e0, ConvGeom::new(3, 2, 1));
    let e2 = conv_in_relu(g, store, "seg.enc2", e1, ConvGeom::new(3, 2, 1));
    vec![e0, e1, e2]
}

/// Per-pixel class logits `[N, K, H, W]`.
pub fn seg_logits(g: &mut Graph, store: &ParamStore, x: Var) -> Var {
    let e = seg_encode(g, store, x);
    let u1 = g.upsample2(e[2]);
    let c1 = g.concat(&[u1, e[1]]);
    let d1 = conv_in_relu(g, store, "seg.dec1", c1, ConvGeom::new(3, 1, 1));
    let u0 = g.upsample2(d1);
    let c0 = g.concat(&[u0, e[0]]);
    let d0 = conv_in_relu(g, store, "seg.dec0", c0, ConvGeom::new(3, 1, 1));
    conv(g, store, "seg.head", d0, ConvGeom::new(1, 1, 0))
}

/// Shared convolutional trunk of the regressor and the embedder; no
/// normalization so global color and brightness stay visible.
fn trunk(g: &mut Graph, store: &ParamStore, prefix: &str, x: Var) -> Var {
    let mut h = x;
    for i in 0..3 {
        h = conv(g, store, &format!("{prefix}.c{i}"), h, ConvGeom::new(3, 2, 1));
        h = g.leaky_relu(h, 0.2);
    }
    let pooled = g.spatial_mean(h);
    let colors = g.spatial_mean(x);
    g.concat(&[pooled, colors])
}

fn init_trunk(store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, width: usize) -> usize {
    let w = [width, 2 * width, 4 * width];
    let mut c_in = 3;
    for (i, &c) in w.iter().enumerate() {
        layers::init_conv(store, rng, &format!("{prefix}.c{i}"), c, c_in, 3, INIT_STD);
        c_in = c;
    }
    c_in + 3
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegressorSpec {
    pub width: usize,
    pub num_attributes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub width: usize,
    pub num_conditions: usize,
}

/// Which surrogate a checkpoint holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurrogateSpec {
    Segmenter(SegNetSpec),
    Regressor(RegressorSpec),
    Embedder(EmbedderSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub spec: SurrogateSpec,
    pub params: ParamStore,
}

impl Surrogate {
    pub fn new(spec: SurrogateSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        match &spec {
            SurrogateSpec::Segmenter(s) => {
                s.validate()?;
                s.init(&mut params, &mut rng);
            }
            SurrogateSpec::Regressor(s) => {
                let f = init_trunk(&mut params, &mut rng, "reg", s.width);
                layers::init_linear(&mut params, &mut rng, "reg.fc", f, s.num_attributes, INIT_STD);
            }
            SurrogateSpec::Embedder(s) => {
                let f = init_trunk(&mut params, &mut rng, "emb", s.width);
                layers::init_linear(&mut params, &mut rng, "emb.fc", f, s.num_conditions, INIT_STD);
            }
        }
        Ok(Self { spec, params })
    }

    pub fn kind(&self) -> &'static str {
        match self.spec {
            SurrogateSpec::Segmenter(_) => "segmenter",
            SurrogateSpec::Regressor(_) => "regressor",
            SurrogateSpec::Embedder(_) => "embedder",
        }
    }

    /// Forward pass producing the supervised output node.
    ///
    /// Segmenter: logits `[N, K, H, W]`. Regressor: sigmoid outputs `[N, A]`.
    /// Embedder: `(logits [N, K], features [N, F])`.
    fn head(&self, g: &mut Graph, x: Var) -> (Var, Option<Var>) {
        match &self.spec {
            SurrogateSpec::Segmenter(_) => (seg_logits(g, &self.params, x), None),
            SurrogateSpec::Regressor(_) => {
                let f = trunk(g, &self.params, "reg", x);
                let o = linear(g, &self.params, "reg.fc", f);
                (g.sigmoid(o), Some(f))
            }
            SurrogateSpec::Embedder(_) => {
                let f = trunk(g, &self.params, "emb", x);
                (linear(g, &self.params, "emb.fc", f), Some(f))
            }
        }
    }

    fn chunks<'a>(&self, images: &'a Tensor) -> impl Iterator<Item = Tensor> + 'a {
        let n = images.shape()[0];
        (0..n).step_by(INFER_CHUNK).map(move |i| {
            images.slice_axis(Axis(0), (i..(i + INFER_CHUNK).min(n)).into()).to_owned()
        })
    }

    /// Argmax labels for every image in an `[N, 3, H, W]` batch.
    pub fn segment(&self, images: &Tensor) -> Result<Vec<Array2<u8>>> {
        self.expect("segmenter", matches!(self.spec, SurrogateSpec::Segmenter(_)))?;
        let mut out = Vec::new();
        for chunk in self.chunks(images) {
            let mut g = Graph::new();
            let x = g.constant(chunk);
            let (logits, _) = self.head(&mut g, x);
            let l = g.value(logits).view().into_dimensionality::<ndarray::Ix4>().expect("4-D");
            for im in l.outer_iter() {
                let (k, h, w) = im.dim();
                out.push(Array2::from_shape_fn((h, w), |(y, x)| {
                    (0..k)
                        .max_by(|&a, &b| im[[a, y, x]].total_cmp(&im[[b, y, x]]).then(b.cmp(&a)))
                        .unwrap_or(0) as u8
                }));
            }
        }
        Ok(out)
    }

    /// Perceptual features of the configured encoder stage.
    pub fn encoder_features(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let SurrogateSpec::Segmenter(s) = &self.spec else {
            return Err(NetError::Config(format!("a {} has no encoder features", self.kind())));
        };
        Ok(seg_encode(g, &self.params, x)[s.feature_layer])
    }

    /// `[N, A]` predicted attributes.
    pub fn predict_attributes(&self, images: &Tensor) -> Result<Array2<f64>> {
        self.expect("regressor", matches!(self.spec, SurrogateSpec::Regressor(_)))?;
        let mut rows = Vec::new();
        for chunk in self.chunks(images) {
            let mut g = Graph::new();
            let x = g.constant(chunk);
            let (y, _) = self.head(&mut g, x);
            rows.push(g.value(y).clone().into_dimensionality::<ndarray::Ix2>().expect("2-D"));
        }
        stack_rows(rows)
    }

    /// Class probabilities `[N, K]` and features `[N, F]`.
    pub fn embed(&self, images: &Tensor) -> Result<(Array2<f64>, Array2<f64>)> {
        self.expect("embedder", matches!(self.spec, SurrogateSpec::Embedder(_)))?;
        let (mut probs, mut feats) = (Vec::new(), Vec::new());
        for chunk in self.chunks(images) {
            let mut g = Graph::new();
            let x = g.constant(chunk);
            let (logits, f) = self.head(&mut g, x);
            let l = g.value(logits).clone().into_dimensionality::<ndarray::Ix2>().expect("2-D");
            probs.push(softmax_rows(&l));
            feats.push(g.value(f.expect("embedder features")).clone().into_dimensionality().expect("2-D"));
        }
        Ok((stack_rows(probs)?, stack_rows(feats)?))
    }

    fn expect(&self, want: &str, ok: bool) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(NetError::Config(format!("expected a {want}, found a {}", self.kind())))
        }
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::new(&self.spec, self.params.clone())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let spec: SurrogateSpec = ck.spec()?;
        let reference = Self::new(spec.clone(), 0)?;
        for name in reference.params.names() {
            if ck.params.get(name).map(|t| t.shape()) != reference.params.get(name).map(|t| t.shape()) {
                return Err(NetError::MissingParam(name.to_string()));
            }
        }
        Ok(Self { spec, params: ck.params.clone() })
    }
}

fn stack_rows(rows: Vec<Array2<f64>>) -> Result<Array2<f64>> {
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    if views.is_empty() {
        return Err(NetError::Shape("empty image batch".into()));
    }
    ndarray::concatenate(Axis(0), &views).map_err(|e| NetError::Shape(e.to_string()))
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.outer_iter_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    p
}

/// Index of the strongest attribute, the embedder's training label.
pub fn condition_class(sample: &SceneSample) -> usize {
    let v = sample.attributes.values();
    (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b]).then(b.cmp(&a))).unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Segmenter only: weight each class by median frequency over its frequency.
    #[serde(default)]
    pub class_balanced: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { epochs: 8, batch_size: 8, lr: 2e-3, seed: 0, class_balanced: false }
    }
}

/// Supervised training on `samples`; returns the mean loss of each epoch.
pub fn fit(model: &mut Surrogate, samples: &[&SceneSample], cfg: &FitConfig) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(NetError::Config("no training samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(AdamConfig { lr: cfg.lr, beta1: 0.9, ..AdamConfig::default() });
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let class_weights = match &model.spec {
        SurrogateSpec::Segmenter(spec) if cfg.class_balanced => median_frequency_weights(samples, spec.num_classes),
        SurrogateSpec::Segmenter(spec) => vec![1.0; spec.num_classes],
        _ => Vec::new(),
    };
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for idx in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<&SceneSample> = idx.iter().map(|&i| samples[i]).collect();
            let images: Vec<_> = batch.iter().map(|s| &s.image).collect();
            let mut g = Graph::new();
            let x = g.constant(image_batch(&images)?);
            let (out, _) = model.head(&mut g, x);
            let loss = match &model.spec {
                SurrogateSpec::Segmenter(_) => {
                    let targets: Vec<usize> = batch
                        .iter()
                        .flat_map(|s| s.layout.labels().iter().map(|&l| l as usize).collect::<Vec<_>>())
                        .collect();
                    let weights: Vec<f64> = targets.iter().map(|&t| class_weights[t]).collect();
                    g.weighted_cross_entropy(out, &targets, &weights)
                }
                SurrogateSpec::Regressor(_) => {
                    let a: Vec<&_> = batch.iter().map(|s| &s.attributes).collect();
                    let t = g.constant(crate::nets::attribute_batch(&a)?);
                    let d = g.sub(out, t);
                    let sq = g.square(d);
                    g.mean_all(sq)
                }
                SurrogateSpec::Embedder(_) => {
                    let targets: Vec<usize> = batch.iter().map(|s| condition_class(s)).collect();
                    g.softmax_cross_entropy(out, &targets)
                }
            };
            let l = g.scalar(loss);
            if !l.is_finite() {
                return Err(NetError::Config(format!("surrogate loss diverged ({l})")));
            }
            total += l;
            batches += 1;
            let grads = g.backward(loss);
            opt.step(&mut model.params, &grads);
        }
        history.push(total / batches as f64);
    }
    Ok(history)
}

/// `median(freq) / freq_c` over classes present in `samples`; absent classes get 0.
pub fn median_frequency_weights(samples: &[&SceneSample], num_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; num_classes];
    for s in samples {
        for &l in s.layout.labels() {
            if let Some(c) = counts.get_mut(l as usize) {
                *c += 1;
            }
        }
    }
    let mut present: Vec<f64> = counts.iter().filter(|&&c| c > 0).map(|&c| c as f64).collect();
    if present.is_empty() {
        return vec![1.0; num_classes];
    }
    present.sort_by(f64::total_cmp);
    let m = present.len();
    let median = if m % 2 == 1 { present[m / 2] } else { 0.5 * (present[m / 2 - 1] + present[m / 2]) };
    counts.iter().map(|&c| if c == 0 { 0.0 } else { median / c as f64 }).collect()
}

/// Pixel accuracy of a segmenter on labelled samples, in [0, 1].
pub fn pixel_accuracy(model: &Surrogate, samples: &[&SceneSample]) -> Result<f64> {
    let images: Vec<_> = samples.iter().map(|s| &s.image).collect();
    let preds = model.segment(&image_batch(&images)?)?;
    let (mut hit, mut total) = (0usize, 0usize);
    for (p, s) in preds.iter().zip(samples) {
        hit += p.iter().zip(s.layout.labels().iter()).filter(|(a, b)| a == b).count();
        total += p.len();
    }
    Ok(hit as f64 / total.max(1) as f64)
}

/// Crops the centre `side×side` window of an NCHW batch.
pub fn center_crop(t: &Tensor, side: usize) -> Tensor {
    let (h, w) = (t.shape()[2], t.shape()[3]);
    let (top, left) = ((h - side) / 2, (w - side) / 2);
    t.slice(s![.., .., top..top + side, left..left + side])
        .to_owned()
        .into_shape_with_order(IxDyn(&[t.shape()[0], t.shape()[1], side, side]))
        .expect("crop shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use scene_data::{build_synthetic_corpus, CorpusConfig, OracleRecipe};

    fn corpus(n: usize, res: usize) -> Vec<scene_data::SharedSample> {
        let cfg = CorpusConfig { resolution: res, n_train: n, n_test: 1, seed: 5 };
        let ds = build_synthetic_corpus(&OracleRecipe::desk(5), &cfg).unwrap();
        ds.train.iter().map(|r| r.load(&ds.manifest).unwrap()).collect()
    }

    #[test]
    fn segmenter_learns_tiny_corpus() {
        let data = corpus(24, 16);
        let refs: Vec<&SceneSample> = data.iter().map(|s| s.as_ref()).collect();
        let mut m = Surrogate::new(SurrogateSpec::Segmenter(SegNetSpec::new(6)), 1).unwrap();
        let before = pixel_accuracy(&m, &refs).unwrap();
        let hist = fit(&mut m, &refs, &FitConfig { epochs: 6, ..Default::default() }).unwrap();
        let after = pixel_accuracy(&m, &refs).unwrap();
        assert!(hist.last().unwrap() < &hist[0], "{hist:?}");
        assert!(after > before.max(0.5), "accuracy {before} → {after}");
    }

    #[test]
    fn median_frequency_weights_by_hand() {
        let labels = ndarray::Array2::from_shape_vec((2, 4), vec![0, 0, 0, 0, 0, 1, 1, 3]).unwrap();
        let layout = scene_data::SemanticLayout::new(labels, 4).unwrap();
        let image = ndarray::Array3::zeros((2, 4, 3));
        let s = SceneSample::new("a", image, layout, scene_data::AttributeVector::zeros(vec!["x".into()])).unwrap();
        // counts 5, 2, 0, 1 → median of present counts is 2
        let w = median_frequency_weights(&[&s], 4);
        let want = [0.4, 1.0, 0.0, 2.0];
        for (a, b) in w.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{w:?}");
        }
    }

    #[test]
    fn embedder_rows_are_distributions() {
        let data = corpus(4, 16);
        let images: Vec<_> = data.iter().map(|s| &s.image).collect();
        let m = Surrogate::new(SurrogateSpec::Embedder(EmbedderSpec { width: 4, num_conditions: 8 }), 2).unwrap();
        let (p, f) = m.embed(&image_batch(&images).unwrap()).unwrap();
        assert_eq!(p.dim(), (4, 8));
        assert_eq!(f.dim().0, 4);
        for row in p.outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let m = Surrogate::new(SurrogateSpec::Regressor(RegressorSpec { width: 4, num_attributes: 8 }), 2).unwrap();
        assert!(m.segment(&Tensor::zeros(IxDyn(&[1, 3, 8, 8]))).is_err());
        let ck = m.to_checkpoint().unwrap();
        assert_eq!(Surrogate::from_checkpoint(&ck).unwrap(), m);
    }
}
