//! Parameter-naming helpers shared by every network definition.

use rand::Rng;

use crate::graph::{Graph, Var};
use crate::kernels::ConvGeom;
use crate::params::ParamStore;

pub const IN_EPS: f64 = 1e-5;

/// `w: [O, C, k, k]`, `b: [O]`.
pub fn init_conv(store: &mut ParamStore, rng: &mut impl Rng, name: &str, c_out: usize, c_in: usize, k: usize, std: f64) {
    store.init_normal(&format!("{name}.w"), &[c_out, c_in, k, k], std, rng);
    store.init_zeros(&format!("{name}.b"), &[c_out]);
}

/// `w: [C_in, C_out, k, k]`, `b: [C_out]`.
pub fn init_deconv(store: &mut ParamStore, rng: &mut impl Rng, name: &str, c_in: usize, c_out: usize, k: usize, std: f64) {
    store.init_normal(&format!("{name}.w"), &[c_in, c_out, k, k], std, rng);
    store.init_zeros(&format!("{name}.b"), &[c_out]);
}

/// `w: [F, O]`, `b: [O]`.
pub fn init_linear(store: &mut ParamStore, rng: &mut impl Rng, name: &str, c_in: usize, c_out: usize, std: f64) {
    store.init_normal(&format!("{name}.w"), &[c_in, c_out], std, rng);
    store.init_zeros(&format!("{name}.b"), &[c_out]);
}

pub fn conv(g: &mut Graph, store: &ParamStore, name: &str, x: Var, geom: ConvGeom) -> Var {
    let w = g.param(store, &format!("{name}.w"));
    let b = g.param(store, &format!("{name}.b"));
    g.conv2d(x, w, Some(b), geom)
}

pub fn deconv(g: &mut Graph, store: &ParamStore, name: &str, x: Var, geom: ConvGeom, output_padding: usize) -> Var {
    let w = g.param(store, &format!("{name}.w"));
    let b = g.param(store, &format!("{name}.b"));
    g.conv_transpose2d(x, w, Some(b), geom, output_padding)
}

pub fn linear(g: &mut Graph, store: &ParamStore, name: &str, x: Var) -> Var {
    let w = g.param(store, &format!("{name}.w"));
    let b = g.param(store, &format!("{name}.b"));
    let h = g.matmul(x, w);
    g.add_bias(h, b)
}

/// Convolution → InstanceNorm → ReLU.
pub fn conv_in_relu(g: &mut Graph, store: &ParamStore, name: &str, x: Var, geom: ConvGeom) -> Var {
    let y = conv(g, store, name, x, geom);
    let y = g.instance_norm(y, IN_EPS);
    g.relu(y)
}

/// Per-channel scale and shift predicted from attributes (`{name}.gamma`, `{name}.beta`).
pub fn init_modulation(store: &mut ParamStore, rng: &mut impl Rng, name: &str, attrs: usize, channels: usize, std: f64) {
    init_linear(store, rng, &format!("{name}.gamma"), attrs, channels, std);
    init_linear(store, rng, &format!("{name}.beta"), attrs, channels, std);
}

/// `y · (1 + γ(a)) + β(a)` with `γ, β` broadcast over space.
pub fn modulate(g: &mut Graph, store: &ParamStore, name: &str, y: Var, a: Var) -> Var {
    let (h, w) = (g.shape(y)[2], g.shape(y)[3]);
    let gamma = linear(g, store, &format!("{name}.gamma"), a);
    let beta = linear(g, store, &format!("{name}.beta"), a);
    let gamma = g.replicate(gamma, h, w);
    let beta = g.replicate(beta, h, w);
    let scaled = g.mul(y, gamma);
    let y = g.add(y, scaled);
    g.add(y, beta)
}

/// Stride-½ deconvolution → InstanceNorm → attribute modulation → ReLU.
pub fn up_in_mod_relu(g: &mut Graph, store: &ParamStore, name: &str, x: Var, a: Var, kernel: usize) -> Var {
    let y = deconv(g, store, name, x, ConvGeom::new(kernel, 2, kernel / 2), 1);
    let y = g.instance_norm(y, IN_EPS);
    let y = modulate(g, store, &format!("{name}.mod"), y, a);
    g.relu(y)
}
