//! Coarse/fine generators and the multi-scale match-aware discriminators.

use ndarray::{Array3, Array4, IxDyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use scene_data::{AttributeVector, SemanticLayout, LAYOUT_BITS};
use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};
use crate::graph::{self, Graph, Tensor, Var};
use crate::kernels::ConvGeom;
use crate::layers::{self, conv, conv_in_relu, deconv, up_in_mod_relu, IN_EPS};
use crate::params::ParamStore;

pub const INIT_STD: f64 = 0.02;
pub const LEAKY_SLOPE: f64 = 0.2;

const COARSE_ENC: [usize; 4] = [64, 128, 256, 512];
const COARSE_DEC: [usize; 3] = [256, 128, 64];
const FINE_ENC: [usize; 2] = [32, 64];
const DISC_STREAM: [usize; 4] = [64, 128, 256, 512];
const DISC_FUSE: usize = 512;

fn scaled(width: usize, divisor: usize) -> usize {
    (width / divisor).max(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub base_resolution: usize,
    pub fine_resolution: usize,
    pub num_attributes: usize,
    pub layout_bits: usize,
    pub noise_channels: usize,
    pub scale_divisor: usize,
    pub coarse_blocks: usize,
    pub fine_blocks: usize,
}

impl GeneratorSpec {
    /// Table widths verbatim, 256 → 512.
    pub fn paper(num_attributes: usize) -> Self {
        Self {
            base_resolution: 256,
            fine_resolution: 512,
            num_attributes,
            layout_bits: LAYOUT_BITS as usize,
            noise_channels: 4,
            scale_divisor: 1,
            coarse_blocks: 5,
            fine_blocks: 2,
        }
    }

    /// 64 → 128 with widths divided by 4.
    pub fn desk(num_attributes: usize) -> Self {
        Self { base_resolution: 64, fine_resolution: 128, scale_divisor: 4, ..Self::paper(num_attributes) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fine_resolution != 2 * self.base_resolution {
            return Err(NetError::Config(format!(
                "fine resolution {} must be twice the base resolution {}",
                self.fine_resolution, self.base_resolution
            )));
        }
        if self.base_resolution % 8 != 0 || self.base_resolution == 0 {
            return Err(NetError::Config(format!(
                "base resolution {} must be a positive multiple of 8",
                self.base_resolution
            )));
        }
        if self.scale_divisor == 0 || self.layout_bits == 0 || self.num_attributes == 0 {
            return Err(NetError::Config("divisor, layout bits and attribute count must be positive".into()));
        }
        Ok(())
    }

    pub fn input_channels(&self) -> usize {
        self.noise_channels + self.layout_bits
    }

    fn w(&self, width: usize) -> usize {
        scaled(width, self.scale_divisor)
    }

    /// Channel count of f11/f12.
    pub fn coarse_width(&self) -> usize {
        self.w(COARSE_ENC[3])
    }

    /// Channel count of f13, f21 and f22.
    pub fn fine_width(&self) -> usize {
        self.w(FINE_ENC[1])
    }

    /// Gaussian init of every generator parameter (`g1.*`, `g2.*`).
    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        let a = self.num_attributes;
        let mut c_in = self.input_channels();
        for (i, &width) in COARSE_ENC.iter().enumerate() {
            let k = if i == 0 { 7 } else { 3 };
            layers::init_conv(store, rng, &format!("g1.enc{i}"), self.w(width), c_in, k, INIT_STD);
            c_in = self.w(width);
        }
        init_res_blocks(store, rng, "g1.res", self.coarse_blocks, self.coarse_width(), a);
        let mut c_in = self.coarse_width();
        for (i, &width) in COARSE_DEC.iter().enumerate() {
            layers::init_deconv(store, rng, &format!("g1.dec{i}"), c_in, self.w(width), 3, INIT_STD);
            layers::init_modulation(store, rng, &format!("g1.dec{i}.mod"), a, self.w(width), INIT_STD);
            c_in = self.w(width);
        }
        layers::init_deconv(store, rng, "g1.out", c_in, 3, 7, INIT_STD);

        let mut c_in = self.input_channels();
        for (i, &width) in FINE_ENC.iter().enumerate() {
            let k = if i == 0 { 7 } else { 3 };
            layers::init_conv(store, rng, &format!("g2.enc{i}"), self.w(width), c_in, k, INIT_STD);
            c_in = self.w(width);
        }
        init_res_blocks(store, rng, "g2.res", self.fine_blocks, self.fine_width(), a);
        layers::init_deconv(store, rng, "g2.dec0", self.fine_width(), self.fine_width(), 3, INIT_STD);
        layers::init_modulation(store, rng, "g2.dec0.mod", a, self.fine_width(), INIT_STD);
        layers::init_deconv(store, rng, "g2.out", self.fine_width(), 3, 7, INIT_STD);
    }
}

fn init_res_blocks(store: &mut ParamStore, rng: &mut impl Rng, prefix: &str, blocks: usize, width: usize, attrs: usize) {
    for i in 0..blocks {
        layers::init_conv(store, rng, &format!("{prefix}{i}.c1"), width, width + attrs, 3, INIT_STD);
        layers::init_conv(store, rng, &format!("{prefix}{i}.c2"), width, width, 3, INIT_STD);
    }
}

/// Residual block; the replicated attribute map joins the block input before the first conv.
fn res_block(g: &mut Graph, store: &ParamStore, name: &str, x: Var, a: Var) -> Var {
    let (h, w) = (g.shape(x)[2], g.shape(x)[3]);
    let a_map = g.replicate(a, h, w);
    let xa = g.concat(&[x, a_map]);
    let y = conv_in_relu(g, store, &format!("{name}.c1"), xa, ConvGeom::new(3, 1, 1));
    let y = conv(g, store, &format!("{name}.c2"), y, ConvGeom::new(3, 1, 1));
    let y = g.instance_norm(y, IN_EPS);
    g.add(x, y)
}

/// Batched generator inputs. `layout` holds binary planes at fine resolution.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorInputs {
    pub noise: Var,
    pub layout: Var,
    pub attributes: Var,
}

/// Named activations of one generator pass.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorOutputs {
    pub f11: Var,
    pub f12: Var,
    pub f13: Var,
    pub coarse: Var,
    pub f21: Option<Var>,
    pub f22: Option<Var>,
    pub fine: Option<Var>,
}

/// Runs G1 and, when `with_fine`, G2.
pub fn forward_generator(
    g: &mut Graph,
    store: &ParamStore,
    spec: &GeneratorSpec,
    inputs: GeneratorInputs,
    with_fine: bool,
) -> Result<GeneratorOutputs> {
    spec.validate()?;
    let (ns, ls, as_) = (g.shape(inputs.noise).to_vec(), g.shape(inputs.layout).to_vec(), g.shape(inputs.attributes).to_vec());
    let fine = spec.fine_resolution;
    if ns.len() != 4 || ns[1] != spec.noise_channels || ns[2] != fine || ns[3] != fine {
        return Err(NetError::Shape(format!(
            "noise {ns:?} must be [N, {}, {fine}, {fine}]",
            spec.noise_channels
        )));
    }
    if ls != [ns[0], spec.layout_bits, fine, fine] {
        return Err(NetError::Shape(format!(
            "layout planes {ls:?} must be [{}, {}, {fine}, {fine}]",
            ns[0], spec.layout_bits
        )));
    }
    if as_ != [ns[0], spec.num_attributes] {
        return Err(NetError::Shape(format!("attributes {as_:?} must be [{}, {}]", ns[0], spec.num_attributes)));
    }

    let zs = g.concat(&[inputs.noise, inputs.layout]);
    let a = inputs.attributes;

    let mut x = g.avg_pool2(zs);
    for i in 0..COARSE_ENC.len() {
        let geom = if i == 0 { ConvGeom::new(7, 1, 3) } else { ConvGeom::new(3, 2, 1) };
        x = conv_in_relu(g, store, &format!("g1.enc{i}"), x, geom);
    }
    let f11 = x;
    for i in 0..spec.coarse_blocks {
        x = res_block(g, store, &format!("g1.res{i}"), x, a);
    }
    let f12 = x;
    for i in 0..COARSE_DEC.len() {
        x = up_in_mod_relu(g, store, &format!("g1.dec{i}"), x, a, 3);
    }
    let f13 = x;
    let y = deconv(g, store, "g1.out", f13, ConvGeom::new(7, 1, 3), 0);
    let coarse = g.tanh(y);

    if !with_fine {
        return Ok(GeneratorOutputs { f11, f12, f13, coarse, f21: None, f22: None, fine: None });
    }

    let mut x = zs;
    for i in 0..FINE_ENC.len() {
        let geom = if i == 0 { ConvGeom::new(7, 1, 3) } else { ConvGeom::new(3, 2, 1) };
        x = conv_in_relu(g, store, &format!("g2.enc{i}"), x, geom);
    }
    let f21 = x;
    let mut x = g.add(f13, f21);
    for i in 0..spec.fine_blocks {
        x = res_block(g, store, &format!("g2.res{i}"), x, a);
    }
    let f22 = x;
    let x = up_in_mod_relu(g, store, "g2.dec0", f22, a, 3);
    let y = deconv(g, store, "g2.out", x, ConvGeom::new(7, 1, 3), 0);
    let fine_img = g.tanh(y);
    Ok(GeneratorOutputs { f11, f12, f13, coarse, f21: Some(f21), f22: Some(f22), fine: Some(fine_img) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub num_attributes: usize,
    pub layout_bits: usize,
    pub scale_divisor: usize,
    pub num_scales: usize,
    pub leaky_slope: f64,
    /// InstanceNorm after every conv except the first of each stream.
    #[serde(default = "default_true")]
    pub instance_norm: bool,
}

fn default_true() -> bool {
    true
}

impl DiscriminatorSpec {
    pub fn paper(num_attributes: usize) -> Self {
        Self {
            num_attributes,
            layout_bits: LAYOUT_BITS as usize,
            scale_divisor: 1,
            num_scales: 3,
            leaky_slope: LEAKY_SLOPE,
            instance_norm: true,
        }
    }

    /// Narrower and without normalisation, so global colour statistics reach the score.
    pub fn desk(num_attributes: usize) -> Self {
        Self { scale_divisor: 4, instance_norm: false, ..Self::paper(num_attributes) }
    }

    /// Scale factors 1, ½, ¼, … for each discriminator.
    pub fn scale_factors(&self) -> Vec<f64> {
        (0..self.num_scales).map(|k| 0.5f64.powi(k as i32)).collect()
    }

    fn w(&self, width: usize) -> usize {
        scaled(width, self.scale_divisor)
    }

    /// Gaussian init of `D_k` for every scale under `{prefix}.{k}.*`.
    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng, prefix: &str) {
        for k in 0..self.num_scales {
            self.init_one(store, rng, &format!("{prefix}.{k}"));
        }
    }

    pub fn init_one(&self, store: &mut ParamStore, rng: &mut impl Rng, name: &str) {
        for (stream, c0) in [("img", 3), ("cond", self.num_attributes + self.layout_bits)] {
            let mut c_in = c0;
            for (i, &width) in DISC_STREAM.iter().enumerate() {
                layers::init_conv(store, rng, &format!("{name}.{stream}{i}"), self.w(width), c_in, 4, INIT_STD);
                c_in = self.w(width);
            }
        }
        let streams = 2 * self.w(DISC_STREAM[3]);
        layers::init_conv(store, rng, &format!("{name}.fuse"), self.w(DISC_FUSE), streams, 1, INIT_STD);
        layers::init_conv(store, rng, &format!("{name}.out"), 1, self.w(DISC_FUSE), 4, INIT_STD);
    }
}

fn disc_stream(g: &mut Graph, store: &ParamStore, name: &str, mut x: Var, slope: f64, norm: bool) -> Var {
    for i in 0..DISC_STREAM.len() {
        x = conv(g, store, &format!("{name}{i}"), x, ConvGeom::new(4, 2, 2));
        if norm && i > 0 {
            x = g.instance_norm(x, IN_EPS);
        }
        x = g.leaky_relu(x, slope);
    }
    x
}

/// One `D_k` under parameter prefix `name`. Returns `[N, 1]` scores in (0, 1).
///
/// `layout` holds binary planes already at the resolution of `image`.
pub fn forward_discriminator(
    g: &mut Graph,
    store: &ParamStore,
    spec: &DiscriminatorSpec,
    name: &str,
    image: Var,
    attributes: Var,
    layout: Var,
) -> Result<Var> {
    let (is, ls, as_) = (g.shape(image).to_vec(), g.shape(layout).to_vec(), g.shape(attributes).to_vec());
    if is.len() != 4 || is[1] != 3 {
        return Err(NetError::Shape(format!("image {is:?} must be [N, 3, H, W]")));
    }
    if ls != [is[0], spec.layout_bits, is[2], is[3]] {
        return Err(NetError::Shape(format!(
            "layout planes {ls:?} do not match image scale {:?}",
            &is[2..]
        )));
    }
    if as_ != [is[0], spec.num_attributes] {
        return Err(NetError::Shape(format!("attributes {as_:?} must be [{}, {}]", is[0], spec.num_attributes)));
    }
    let a_map = g.replicate(attributes, is[2], is[3]);
    let cond = g.concat(&[a_map, layout]);
    let fx = disc_stream(g, store, &format!("{name}.img"), image, spec.leaky_slope, spec.instance_norm);
    let fc = disc_stream(g, store, &format!("{name}.cond"), cond, spec.leaky_slope, spec.instance_norm);
    let f = g.concat(&[fx, fc]);
    let f = conv(g, store, &format!("{name}.fuse"), f, ConvGeom::new(1, 1, 0));
    let f = if spec.instance_norm { g.instance_norm(f, IN_EPS) } else { f };
    let f = g.leaky_relu(f, spec.leaky_slope);
    let logits = conv(g, store, &format!("{name}.out"), f, ConvGeom::new(4, 1, 2));
    let pooled = g.spatial_mean(logits);
    Ok(g.sigmoid(pooled))
}

/// Spatial replication of one attribute vector into an `H×W×A` array.
pub fn replicate_attributes(a: &AttributeVector, h: usize, w: usize) -> Array3<f64> {
    let v = a.values();
    Array3::from_shape_fn((h, w, v.len()), |(_, _, k)| v[k])
}

/// Fine image with its mean-pooled ½ and ¼ versions (NCHW batches).
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePyramid {
    pub levels: Vec<Tensor>,
}

/// Three-level mean-pooling pyramid of an `[N, 3, H, W]` batch.
pub fn build_pyramid(fine: &Tensor) -> Result<ImagePyramid> {
    build_pyramid_levels(fine, 3)
}

pub fn build_pyramid_levels(fine: &Tensor, levels: usize) -> Result<ImagePyramid> {
    let s = fine.shape();
    if s.len() != 4 {
        return Err(NetError::Shape(format!("pyramid input {s:?} must be NCHW")));
    }
    let div = 1usize << levels.saturating_sub(1);
    if s[2] % div != 0 || s[3] % div != 0 {
        return Err(NetError::Shape(format!("side {}x{} not divisible by {div}", s[2], s[3])));
    }
    let mut out = vec![fine.as_standard_layout().into_owned()];
    for _ in 1..levels {
        let next = graph::avg_pool2(out.last().expect("non-empty"));
        out.push(next);
    }
    Ok(ImagePyramid { levels: out })
}

/// In-graph pyramid so gradients reach the generator.
pub fn pyramid_vars(g: &mut Graph, fine: Var, levels: usize) -> Vec<Var> {
    let mut out = vec![fine];
    for _ in 1..levels {
        let last = *out.last().expect("non-empty");
        out.push(g.avg_pool2(last));
    }
    out
}

/// Standard-normal noise with `n_z` channels at layout resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMap {
    pub data: Array3<f64>,
}

impl NoiseMap {
    pub fn sample(channels: usize, h: usize, w: usize, rng: &mut impl Rng) -> Self {
        let data = Array3::from_shape_simple_fn((channels, h, w), || StandardNormal.sample(rng));
        Self { data }
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[0]
    }
}

/// `[N, n_z, H, W]` batch from noise maps.
pub fn noise_batch(maps: &[NoiseMap]) -> Result<Tensor> {
    let first = maps.first().ok_or_else(|| NetError::Shape("empty noise batch".into()))?;
    let (c, h, w) = first.data.dim();
    let mut t = Array4::zeros((maps.len(), c, h, w));
    for (i, m) in maps.iter().enumerate() {
        if m.data.dim() != (c, h, w) {
            return Err(NetError::Shape("noise maps differ in shape".into()));
        }
        t.index_axis_mut(ndarray::Axis(0), i).assign(&m.data);
    }
    Ok(t.into_dyn())
}

/// `[N, bits, H, W]` binary planes of a batch of layouts.
pub fn layout_batch(layouts: &[&SemanticLayout], bits: usize) -> Result<Tensor> {
    let first = layouts.first().ok_or_else(|| NetError::Shape("empty layout batch".into()))?;
    let (h, w) = (first.height(), first.width());
    let mut t = Array4::zeros((layouts.len(), bits, h, w));
    for (i, l) in layouts.iter().enumerate() {
        if (l.height(), l.width()) != (h, w) {
            return Err(NetError::Shape("layouts differ in size".into()));
        }
        let planes = scene_data::encode_layout_binary(l, bits as u32)?;
        for ((y, x, b), v) in planes.indexed_iter() {
            t[[i, b, y, x]] = *v;
        }
    }
    Ok(t.into_dyn())
}

/// Binary planes of each layout resampled (nearest) to `side`.
pub fn layout_batch_at(layouts: &[&SemanticLayout], bits: usize, side: usize) -> Result<Tensor> {
    let resized: Vec<SemanticLayout> = layouts.iter().map(|l| l.resize_nearest(side, side)).collect();
    let refs: Vec<&SemanticLayout> = resized.iter().collect();
    layout_batch(&refs, bits)
}

/// `[N, A]` batch of attribute vectors.
pub fn attribute_batch(attrs: &[&AttributeVector]) -> Result<Tensor> {
    let first = attrs.first().ok_or_else(|| NetError::Shape("empty attribute batch".into()))?;
    let a = first.len();
    let mut data = Vec::with_capacity(attrs.len() * a);
    for v in attrs {
        if v.len() != a {
            return Err(NetError::Shape("attribute vectors differ in length".into()));
        }
        data.extend_from_slice(v.values());
    }
    Ok(Tensor::from_shape_vec(IxDyn(&[attrs.len(), a]), data).expect("shape"))
}

/// `[N, 3, H, W]` from `H×W×3` images.
pub fn image_batch(images: &[&Array3<f64>]) -> Result<Tensor> {
    let first = images.first().ok_or_else(|| NetError::Shape("empty image batch".into()))?;
    let (h, w, c) = first.dim();
    let mut t = Array4::zeros((images.len(), c, h, w));
    for (i, im) in images.iter().enumerate() {
        if im.dim() != (h, w, c) {
            return Err(NetError::Shape("images differ in shape".into()));
        }
        t.index_axis_mut(ndarray::Axis(0), i).assign(&im.view().permuted_axes([2, 0, 1]));
    }
    Ok(t.into_dyn())
}

/// Splits an `[N, C, H, W]` batch into `H×W×C` images.
pub fn unbatch_images(t: &Tensor) -> Vec<Array3<f64>> {
    let t4 = t.view().into_dimensionality::<ndarray::Ix4>().expect("NCHW batch");
    t4.outer_iter()
        .map(|im| im.permuted_axes([1, 2, 0]).as_standard_layout().into_owned())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_gen() -> GeneratorSpec {
        GeneratorSpec {
            base_resolution: 16,
            fine_resolution: 32,
            num_attributes: 3,
            layout_bits: 8,
            noise_channels: 2,
            scale_divisor: 16,
            coarse_blocks: 2,
            fine_blocks: 1,
        }
    }

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
        Tensor::from_shape_fn(IxDyn(shape), |_| rng.random_range(lo..hi))
    }

    #[test]
    fn generator_shapes_and_range() {
        let spec = tiny_gen();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        spec.init(&mut store, &mut rng);
        let mut g = Graph::new();
        let noise = g.constant(rand_tensor(&mut rng, &[2, 2, 32, 32], -2.0, 2.0));
        let layout = g.constant(rand_tensor(&mut rng, &[2, 8, 32, 32], 0.0, 1.0).mapv(f64::round));
        let attributes = g.constant(rand_tensor(&mut rng, &[2, 3], 0.0, 1.0));
        let out = forward_generator(&mut g, &store, &spec, GeneratorInputs { noise, layout, attributes }, true).unwrap();
        assert_eq!(g.shape(out.coarse), &[2, 3, 16, 16]);
        assert_eq!(g.shape(out.fine.unwrap()), &[2, 3, 32, 32]);
        assert_eq!(g.shape(out.f13), g.shape(out.f21.unwrap()));
        assert!(g.value(out.fine.unwrap()).iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn generator_rejects_mismatched_layout() {
        let spec = tiny_gen();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        spec.init(&mut store, &mut rng);
        let mut g = Graph::new();
        let noise = g.constant(Tensor::zeros(IxDyn(&[1, 2, 32, 32])));
        let layout = g.constant(Tensor::zeros(IxDyn(&[1, 8, 16, 16])));
        let attributes = g.constant(Tensor::zeros(IxDyn(&[1, 3])));
        let r = forward_generator(&mut g, &store, &spec, GeneratorInputs { noise, layout, attributes }, true);
        assert!(matches!(r, Err(NetError::Shape(_))));
    }

    #[test]
    fn discriminator_zeroed_output_is_half() {
        let spec = DiscriminatorSpec { scale_divisor: 16, ..DiscriminatorSpec::paper(3) };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        spec.init_one(&mut store, &mut rng, "d");
        for n in ["d.out.w", "d.out.b"] {
            store.get_mut(n).unwrap().fill(0.0);
        }
        let mut g = Graph::new();
        let x = g.constant(rand_tensor(&mut rng, &[4, 3, 16, 16], -1.0, 1.0));
        let a = g.constant(rand_tensor(&mut rng, &[4, 3], 0.0, 1.0));
        let s = g.constant(Tensor::zeros(IxDyn(&[4, 8, 16, 16])));
        let d = forward_discriminator(&mut g, &store, &spec, "d", x, a, s).unwrap();
        assert_eq!(g.shape(d), &[4, 1]);
        assert!(g.value(d).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn discriminator_rejects_scale_mismatch() {
        let spec = DiscriminatorSpec { scale_divisor: 16, ..DiscriminatorSpec::paper(3) };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        spec.init_one(&mut store, &mut rng, "d");
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(IxDyn(&[1, 3, 16, 16])));
        let a = g.constant(Tensor::zeros(IxDyn(&[1, 3])));
        let s = g.constant(Tensor::zeros(IxDyn(&[1, 8, 8, 8])));
        assert!(forward_discriminator(&mut g, &store, &spec, "d", x, a, s).is_err());
    }

    #[test]
    fn replicate_and_pyramid_basics() {
        let a = AttributeVector::new(vec![0.2, 0.8], vec!["p".into(), "q".into()]).unwrap();
        let r = replicate_attributes(&a, 2, 2);
        assert!(r.index_axis(ndarray::Axis(2), 0).iter().all(|&v| v == 0.2));
        assert!(r.index_axis(ndarray::Axis(2), 1).iter().all(|&v| v == 0.8));

        let img = Tensor::from_elem(IxDyn(&[1, 3, 128, 128]), 0.3);
        let p = build_pyramid(&img).unwrap();
        let sides: Vec<usize> = p.levels.iter().map(|l| l.shape()[2]).collect();
        assert_eq!(sides, vec![128, 64, 32]);
        assert!(p.levels.iter().all(|l| l.iter().all(|&v| (v - 0.3).abs() < 1e-15)));
        assert!(build_pyramid(&Tensor::zeros(IxDyn(&[1, 3, 30, 30]))).is_err());
    }

    #[test]
    fn image_batch_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let im = Array3::from_shape_fn((4, 5, 3), |_| rng.random_range(-1.0..1.0));
        let t = image_batch(&[&im, &im]).unwrap();
        assert_eq!(t.shape(), &[2, 3, 4, 5]);
        assert_eq!(unbatch_images(&t)[1], im);
    }
}
