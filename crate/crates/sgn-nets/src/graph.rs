//! Tape-based reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records every operation of one forward pass; [`Graph::backward`]
//! walks the tape in reverse and returns gradients for every node that
//! requires them. Parameters are pulled from a [`ParamStore`] by name, so the
//! same store can be bound into many graphs.

use std::collections::BTreeMap;

use ndarray::{ArrayD, Axis, IxDyn};

use crate::kernels::{self, ConvGeom, ConvShape};
use crate::params::ParamStore;

pub type Tensor = ArrayD<f64>;

/// Handle on a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    ConvTranspose2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    InstanceNorm { x: Var, inv_std: Vec<f64> },
    Relu(Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Ln(Var),
    Square(Var),
    Clamp { x: Var, lo: f64, hi: f64 },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Concat(Vec<Var>),
    AvgPool2(Var),
    Upsample2(Var),
    Replicate(Var),
    SpatialMean(Var),
    MeanAll(Var),
    SumAll(Var),
    Matmul(Var, Var),
    AddBias(Var, Var),
    Reshape(Var),
    SoftmaxCrossEntropy { logits: Var, targets: Vec<usize>, weights: Vec<f64>, probs: Tensor },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// One forward pass worth of recorded operations.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
    frozen: Vec<String>,
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: BTreeMap<String, Var>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).and_then(|v| self.wrt(*v))
    }

    /// Gradients of every trainable parameter bound in the graph.
    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params
            .iter()
            .filter_map(|(name, v)| self.wrt(*v).map(|g| (name.as_str(), g)))
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }
}

fn shape_of(t: &Tensor) -> &[usize] {
    t.shape()
}

fn dims4(t: &Tensor) -> (usize, usize, usize, usize) {
    let s = t.shape();
    assert_eq!(s.len(), 4, "expected an NCHW tensor, got shape {s:?}");
    (s[0], s[1], s[2], s[3])
}

fn contiguous(t: &Tensor) -> &[f64] {
    t.as_slice().expect("graph tensors are kept in standard layout")
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parameters whose names start with `prefix` are bound as constants.
    pub fn freeze(&mut self, prefix: &str) {
        self.frozen.push(prefix.to_string());
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        debug_assert!(value.is_standard_layout());
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant input; no gradient is tracked.
    pub fn constant(&mut self, value: Tensor) -> Var {
        let value = value.as_standard_layout().into_owned();
        self.push(value, Op::Leaf, false)
    }

    /// Input whose gradient is wanted.
    pub fn variable(&mut self, value: Tensor) -> Var {
        let value = value.as_standard_layout().into_owned();
        self.push(value, Op::Leaf, true)
    }

    /// Binds a named parameter once per graph.
    ///
    /// Panics if the store lacks the name: parameter sets are fixed by the
    /// network spec, so a miss is a programming error.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let value = store
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` missing from store"))
            .clone();
        let trainable = !self.frozen.iter().any(|p| name.starts_with(p.as_str()));
        let v = self.push(value, Op::Leaf, trainable);
        if trainable {
            self.params.insert(name.to_string(), v);
        }
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        assert_eq!(t.len(), 1, "not a scalar: shape {:?}", t.shape());
        t.iter().next().copied().unwrap_or_default()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        shape_of(self.value(v))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeom) -> Var {
        let (n, c, h, wd) = dims4(self.value(x));
        let ws = self.value(w).shape().to_vec();
        assert_eq!(ws.len(), 4, "conv weight must be [O, C, k, k]");
        assert_eq!(ws[1], c, "conv weight expects {} input channels, got {c}", ws[1]);
        assert_eq!((ws[2], ws[3]), (geom.kernel, geom.kernel));
        let ho = geom.conv_out(h).expect("input smaller than kernel");
        let wo = geom.conv_out(wd).expect("input smaller than kernel");
        let s = ConvShape { n, c_in: c, h, w: wd, c_out: ws[0], ho, wo };
        let mut y = vec![0.0; n * ws[0] * ho * wo];
        kernels::conv2d_forward(
            contiguous(self.value(x)),
            contiguous(self.value(w)),
            b.map(|b| contiguous(self.value(b))),
            &s,
            geom,
            &mut y,
        );
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        let value = Tensor::from_shape_vec(IxDyn(&[n, ws[0], ho, wo]), y).expect("shape");
        self.push(value, Op::Conv2d { x, w, b, geom }, rg)
    }

    /// Transposed convolution with weight `[C_in, C_out, k, k]`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeom, output_padding: usize) -> Var {
        let (n, c, h, wd) = dims4(self.value(x));
        let ws = self.value(w).shape().to_vec();
        assert_eq!(ws.len(), 4, "transposed conv weight must be [C_in, C_out, k, k]");
        assert_eq!(ws[0], c, "transposed conv weight expects {} input channels, got {c}", ws[0]);
        let ho = geom.transpose_out(h, output_padding).expect("invalid transposed geometry");
        let wo = geom.transpose_out(wd, output_padding).expect("invalid transposed geometry");
        let s = ConvShape { n, c_in: c, h, w: wd, c_out: ws[1], ho, wo };
        let mut y = vec![0.0; n * ws[1] * ho * wo];
        kernels::conv_transpose2d_forward(
            contiguous(self.value(x)),
            contiguous(self.value(w)),
            b.map(|b| contiguous(self.value(b))),
            &s,
            geom,
            &mut y,
        );
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        let value = Tensor::from_shape_vec(IxDyn(&[n, ws[1], ho, wo]), y).expect("shape");
        self.push(value, Op::ConvTranspose2d { x, w, b, geom }, rg)
    }

    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Var {
        let (n, c, _, _) = dims4(self.value(x));
        let mut y = self.value(x).clone();
        let inv_std = kernels::instance_norm_forward(y.as_slice_mut().expect("standard layout"), n * c, eps);
        let rg = self.rg(x);
        self.push(y, Op::InstanceNorm { x, inv_std }, rg)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let y = self.value(x).mapv(f);
        let rg = self.rg(x);
        self.push(y, op, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(x, move |v| if v > 0.0 { v } else { slope * v }, Op::LeakyRelu(x, slope))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, Op::Ln(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, move |v| v.clamp(lo, hi), Op::Clamp { x, lo, hi })
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.unary(x, move |v| v * s, Op::Scale(x, s))
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        self.unary(x, move |v| v + s, Op::AddScalar(x))
    }

    /// `1 − x`.
    pub fn one_minus(&mut self, x: Var) -> Var {
        let neg = self.scale(x, -1.0);
        self.add_scalar(neg, 1.0)
    }

    fn binary_same_shape(&self, a: Var, b: Var, what: &str) {
        assert_eq!(self.shape(a), self.shape(b), "{what}: shape mismatch");
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, "add");
        let y = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(y, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, "sub");
        let y = self.value(a) - self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(y, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, "mul");
        let y = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(y, Op::Mul(a, b), rg)
    }

    /// Concatenation along the channel axis.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let y = ndarray::concatenate(Axis(1), &views)
            .expect("concat: non-channel dimensions must agree")
            .as_standard_layout()
            .into_owned();
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(y, Op::Concat(parts.to_vec()), rg)
    }

    /// 2×2 mean pooling.
    pub fn avg_pool2(&mut self, x: Var) -> Var {
        let y = avg_pool2(self.value(x));
        let rg = self.rg(x);
        self.push(y, Op::AvgPool2(x), rg)
    }

    /// Nearest-neighbor 2× upsampling.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let (n, c, h, w) = dims4(self.value(x));
        let src = self.value(x);
        let y = Tensor::from_shape_fn(IxDyn(&[n, c, 2 * h, 2 * w]), |i| src[[i[0], i[1], i[2] / 2, i[3] / 2]]);
        let rg = self.rg(x);
        self.push(y, Op::Upsample2(x), rg)
    }

    /// `[N, A]` → `[N, A, h, w]` with every position carrying the row.
    pub fn replicate(&mut self, a: Var, h: usize, w: usize) -> Var {
        let src = self.value(a);
        assert_eq!(src.ndim(), 2, "replicate expects [N, A]");
        let (n, k) = (src.shape()[0], src.shape()[1]);
        let y = Tensor::from_shape_fn(IxDyn(&[n, k, h, w]), |i| src[[i[0], i[1]]]);
        let rg = self.rg(a);
        self.push(y, Op::Replicate(a), rg)
    }

    /// `[N, C, H, W]` → `[N, C]`.
    pub fn spatial_mean(&mut self, x: Var) -> Var {
        let (n, c, h, w) = dims4(self.value(x));
        let src = contiguous(self.value(x));
        let hw = h * w;
        let data: Vec<f64> = src.chunks(hw).map(|p| p.iter().sum::<f64>() / hw as f64).collect();
        let y = Tensor::from_shape_vec(IxDyn(&[n, c]), data).expect("shape");
        let rg = self.rg(x);
        self.push(y, Op::SpatialMean(x), rg)
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let y = Tensor::from_elem(IxDyn(&[]), t.sum() / t.len() as f64);
        let rg = self.rg(x);
        self.push(y, Op::MeanAll(x), rg)
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let y = Tensor::from_elem(IxDyn(&[]), self.value(x).sum());
        let rg = self.rg(x);
        self.push(y, Op::SumAll(x), rg)
    }

    /// `[N, F] · [F, O]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a).view().into_dimensionality::<ndarray::Ix2>().expect("matmul lhs must be 2-D");
        let bv = self.value(b).view().into_dimensionality::<ndarray::Ix2>().expect("matmul rhs must be 2-D");
        let y = av.dot(&bv).into_dyn();
        let rg = self.rg(a) || self.rg(b);
        self.push(y, Op::Matmul(a, b), rg)
    }

    /// `[N, O] + [O]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let y = self.value(x) + self.value(b);
        let rg = self.rg(x) || self.rg(b);
        self.push(y, Op::AddBias(x, b), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let y = self
            .value(x)
            .clone()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape: element count must match");
        let rg = self.rg(x);
        self.push(y, Op::Reshape(x), rg)
    }

    /// Mean negative log-likelihood of `targets` under a softmax over axis 1.
    ///
    /// `logits` is `[N, K]` or `[N, K, H, W]`; `targets` holds one class index
    /// per `(n, h, w)` position in row-major order.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        self.weighted_cross_entropy(logits, targets, &vec![1.0; targets.len()])
    }

    /// Cross entropy with one weight per position, normalised by the weight sum.
    pub fn weighted_cross_entropy(&mut self, logits: Var, targets: &[usize], weights: &[f64]) -> Var {
        assert_eq!(targets.len(), weights.len(), "one weight per target");
        let l = self.value(logits);
        let shape = l.shape().to_vec();
        let (n, k) = (shape[0], shape[1]);
        let spatial: usize = shape[2..].iter().product();
        assert_eq!(targets.len(), n * spatial, "one target per position");
        let src = contiguous(l);
        let mut probs = vec![0.0; src.len()];
        let mut loss = 0.0;
        for b in 0..n {
            for p in 0..spatial {
                let idx = |c: usize| (b * k + c) * spatial + p;
                let max = (0..k).map(|c| src[idx(c)]).fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = (0..k).map(|c| (src[idx(c)] - max).exp()).sum();
                for c in 0..k {
                    probs[idx(c)] = (src[idx(c)] - max).exp() / z;
                }
                let t = targets[b * spatial + p];
                assert!(t < k, "target {t} out of {k} classes");
                loss -= weights[b * spatial + p] * (src[idx(t)] - max - z.ln());
            }
        }
        let count: f64 = weights.iter().sum();
        let probs = Tensor::from_shape_vec(IxDyn(&shape), probs).expect("shape");
        let rg = self.rg(logits);
        self.push(
            Tensor::from_elem(IxDyn(&[]), loss / count),
            Op::SoftmaxCrossEntropy { logits, targets: targets.to_vec(), weights: weights.to_vec(), probs },
            rg,
        )
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::ones(self.value(loss).raw_dim()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            self.propagate(node, &gy, &mut grads);
            grads[i] = Some(gy);
        }
        Gradients { grads, params: self.params.clone() }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }

    fn zeros_like(&self, v: Var) -> Tensor {
        Tensor::zeros(self.value(v).raw_dim())
    }

    fn propagate(&self, node: &Node, gy: &Tensor, grads: &mut [Option<Tensor>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } => {
                let (n, c, h, wd) = dims4(self.value(*x));
                let (_, o, ho, wo) = dims4(y);
                let s = ConvShape { n, c_in: c, h, w: wd, c_out: o, ho, wo };
                let mut dx = self.rg(*x).then(|| self.zeros_like(*x));
                let mut dw = self.rg(*w).then(|| self.zeros_like(*w));
                let mut db = b.filter(|b| self.rg(*b)).map(|b| self.zeros_like(b));
                kernels::conv2d_backward(
                    contiguous(self.value(*x)),
                    contiguous(self.value(*w)),
                    contiguous(gy),
                    &s,
                    *geom,
                    dx.as_mut().map(|t| t.as_slice_mut().expect("standard layout")),
                    dw.as_mut().map(|t| t.as_slice_mut().expect("standard layout")),
                    db.as_mut().map(|t| t.as_slice_mut().expect("standard layout")),
                );
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, dx);
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *w, dw);
                }
                if let (Some(b), Some(db)) = (b, db) {
                    self.accumulate(grads, *b, db);
                }
            }
            Op::ConvTranspose2d { x, w, b, geom } => {
                let (n, c, h, wd) = dims4(self.value(*x));
                let (_, o, ho, wo) = dims4(y);
                let s = ConvShape { n, c_in: c, h, w: wd, c_out: o, ho, wo };
                let mut dx = self.rg(*x).then(|| self.zeros_like(*x));
                let mut dw = self.rg(*w).then(|| self.zeros_like(*w));
                let mut db = b.filter(|b| self.rg(*b)).map(|b| self.zeros_like(b));
                kernels::conv_transpose2d_backward(
                    contiguous(self.value(*x)),
                    contiguous(self.value(*w)),
                    contiguous(gy),
                    &s,
                    *geom,
                    dx.as_mut().map(|t| t.as_slice_mut().expect("standard layout")),
                    dw.as_mut().map(|t| t.as_slice_mut().expect("standard layout")),
                    db.as_mut().map(|t| t.as_slice_mut().expect("standard layout")),
                );
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, dx);
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *w, dw);
                }
                if let (Some(b), Some(db)) = (b, db) {
                    self.accumulate(grads, *b, db);
                }
            }
            Op::InstanceNorm { x, inv_std } => {
                let mut dx = self.zeros_like(*x);
                kernels::instance_norm_backward(
                    contiguous(y),
                    contiguous(gy),
                    inv_std,
                    dx.as_slice_mut().expect("standard layout"),
                );
                self.accumulate(grads, *x, dx);
            }
            Op::Relu(x) => {
                let mut g = gy.clone();
                g.zip_mut_with(self.value(*x), |g, &v| if v <= 0.0 { *g = 0.0 });
                self.accumulate(grads, *x, g);
            }
            Op::LeakyRelu(x, slope) => {
                let mut g = gy.clone();
                g.zip_mut_with(self.value(*x), |g, &v| if v <= 0.0 { *g *= slope });
                self.accumulate(grads, *x, g);
            }
            Op::Tanh(x) => {
                let mut g = gy.clone();
                g.zip_mut_with(y, |g, &t| *g *= 1.0 - t * t);
                self.accumulate(grads, *x, g);
            }
            Op::Sigmoid(x) => {
                let mut g = gy.clone();
                g.zip_mut_with(y, |g, &s| *g *= s * (1.0 - s));
                self.accumulate(grads, *x, g);
            }
            Op::Ln(x) => {
                let mut g = gy.clone();
                g.zip_mut_with(self.value(*x), |g, &v| *g /= v);
                self.accumulate(grads, *x, g);
            }
            Op::Square(x) => {
                let mut g = gy.clone();
                g.zip_mut_with(self.value(*x), |g, &v| *g *= 2.0 * v);
                self.accumulate(grads, *x, g);
            }
            Op::Clamp { x, lo, hi } => {
                let mut g = gy.clone();
                g.zip_mut_with(self.value(*x), |g, &v| if v < *lo || v > *hi { *g = 0.0 });
                self.accumulate(grads, *x, g);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gy.clone());
                self.accumulate(grads, *b, gy.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, gy.clone());
                self.accumulate(grads, *b, -gy);
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    self.accumulate(grads, *a, gy * self.value(*b));
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, gy * self.value(*a));
                }
            }
            Op::Scale(x, s) => self.accumulate(grads, *x, gy * *s),
            Op::AddScalar(x) => self.accumulate(grads, *x, gy.clone()),
            Op::Concat(parts) => {
                let mut start = 0;
                for &p in parts {
                    let c = self.value(p).shape()[1];
                    if self.rg(p) {
                        let g = gy.slice_axis(Axis(1), (start..start + c).into()).as_standard_layout().into_owned();
                        self.accumulate(grads, p, g);
                    }
                    start += c;
                }
            }
            Op::AvgPool2(x) => {
                let (n, c, h, w) = dims4(self.value(*x));
                let g = Tensor::from_shape_fn(IxDyn(&[n, c, h, w]), |i| 0.25 * gy[[i[0], i[1], i[2] / 2, i[3] / 2]]);
                self.accumulate(grads, *x, g);
            }
            Op::Upsample2(x) => {
                let (n, c, h, w) = dims4(self.value(*x));
                let mut g = Tensor::zeros(IxDyn(&[n, c, h, w]));
                for ((b, ch, yy, xx), v) in gy
                    .view()
                    .into_dimensionality::<ndarray::Ix4>()
                    .expect("4-D")
                    .indexed_iter()
                {
                    g[[b, ch, yy / 2, xx / 2]] += v;
                }
                self.accumulate(grads, *x, g);
            }
            Op::Replicate(a) => {
                let g = gy.sum_axis(Axis(3)).sum_axis(Axis(2));
                self.accumulate(grads, *a, g);
            }
            Op::SpatialMean(x) => {
                let (n, c, h, w) = dims4(self.value(*x));
                let scale = 1.0 / (h * w) as f64;
                let g = Tensor::from_shape_fn(IxDyn(&[n, c, h, w]), |i| gy[[i[0], i[1]]] * scale);
                self.accumulate(grads, *x, g);
            }
            Op::MeanAll(x) => {
                let g0 = gy.iter().next().copied().unwrap_or_default() / self.value(*x).len() as f64;
                self.accumulate(grads, *x, Tensor::from_elem(self.value(*x).raw_dim(), g0));
            }
            Op::SumAll(x) => {
                let g0 = gy.iter().next().copied().unwrap_or_default();
                self.accumulate(grads, *x, Tensor::from_elem(self.value(*x).raw_dim(), g0));
            }
            Op::Matmul(a, b) => {
                let g2 = gy.view().into_dimensionality::<ndarray::Ix2>().expect("2-D");
                if self.rg(*a) {
                    let bv = self.value(*b).view().into_dimensionality::<ndarray::Ix2>().expect("2-D");
                    self.accumulate(grads, *a, g2.dot(&bv.t()).into_dyn());
                }
                if self.rg(*b) {
                    let av = self.value(*a).view().into_dimensionality::<ndarray::Ix2>().expect("2-D");
                    self.accumulate(grads, *b, av.t().dot(&g2).into_dyn());
                }
            }
            Op::AddBias(x, b) => {
                self.accumulate(grads, *x, gy.clone());
                if self.rg(*b) {
                    self.accumulate(grads, *b, gy.sum_axis(Axis(0)));
                }
            }
            Op::Reshape(x) => {
                let g = gy
                    .clone()
                    .into_shape_with_order(self.value(*x).raw_dim())
                    .expect("reshape back");
                self.accumulate(grads, *x, g);
            }
            Op::SoftmaxCrossEntropy { logits, targets, weights, probs } => {
                let shape = probs.shape();
                let (k, spatial) = (shape[1], shape[2..].iter().product::<usize>());
                let count: f64 = weights.iter().sum();
                let g0 = gy.iter().next().copied().unwrap_or_default() / count;
                let mut g = probs.clone();
                let slice = g.as_slice_mut().expect("standard layout");
                for (pos, &t) in targets.iter().enumerate() {
                    let (b, p) = (pos / spatial, pos % spatial);
                    slice[(b * k + t) * spatial + p] -= 1.0;
                    for c in 0..k {
                        slice[(b * k + c) * spatial + p] *= weights[pos];
                    }
                }
                slice.iter_mut().for_each(|v| *v *= g0);
                self.accumulate(grads, *logits, g);
            }
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// 2×2 mean pooling of an NCHW tensor with even spatial sides.
pub fn avg_pool2(t: &Tensor) -> Tensor {
    let (n, c, h, w) = dims4(t);
    assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2 needs even sides, got {h}x{w}");
    Tensor::from_shape_fn(IxDyn(&[n, c, h / 2, w / 2]), |i| {
        let (y, x) = (2 * i[2], 2 * i[3]);
        0.25 * (t[[i[0], i[1], y, x]] + t[[i[0], i[1], y + 1, x]] + t[[i[0], i[1], y, x + 1]] + t[[i[0], i[1], y + 1, x + 1]])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        Tensor::from_shape_fn(IxDyn(shape), |_| rng.random_range(-1.0..1.0))
    }

    /// Central finite differences of `f` at `x` against the tape gradient.
    fn check(shape: &[usize], seed: u64, f: impl Fn(&mut Graph, Var) -> Var) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = rand_tensor(&mut rng, shape);
        let mut g = Graph::new();
        let x = g.variable(x0.clone());
        let out = f(&mut g, x);
        let grads = g.backward(out);
        let analytic = grads.wrt(x).cloned().unwrap_or_else(|| Tensor::zeros(x0.raw_dim()));
        let eval = |t: &Tensor| {
            let mut g = Graph::new();
            let x = g.constant(t.clone());
            let out = f(&mut g, x);
            g.scalar(out)
        };
        let h = 1e-6;
        for i in 0..x0.len() {
            let mut plus = x0.clone();
            plus.as_slice_mut().unwrap()[i] += h;
            let mut minus = x0.clone();
            minus.as_slice_mut().unwrap()[i] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic.as_slice().unwrap()[i];
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            assert!((a - numeric).abs() / denom < 1e-4, "index {i}: analytic {a} vs numeric {numeric}");
        }
    }

    fn weighted_sum(g: &mut Graph, y: Var, seed: u64) -> Var {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = rand_tensor(&mut rng, g.shape(y));
        let wv = g.constant(w);
        let p = g.mul(y, wv);
        g.sum_all(p)
    }

    #[test]
    fn conv_gradients() {
        check(&[2, 3, 5, 5], 1, |g, x| {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let w = g.constant(rand_tensor(&mut rng, &[4, 3, 3, 3]));
            let b = g.constant(rand_tensor(&mut rng, &[4]));
            let y = g.conv2d(x, w, Some(b), ConvGeom::new(3, 2, 1));
            weighted_sum(g, y, 2)
        });
    }

    #[test]
    fn conv_weight_gradients() {
        check(&[4, 2, 4, 4], 3, |g, w| {
            let mut rng = ChaCha8Rng::seed_from_u64(10);
            let x = g.constant(rand_tensor(&mut rng, &[2, 2, 6, 6]));
            let y = g.conv2d(x, w, None, ConvGeom::new(4, 2, 2));
            weighted_sum(g, y, 4)
        });
    }

    #[test]
    fn transposed_conv_gradients() {
        check(&[1, 3, 3, 4], 5, |g, x| {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let w = g.constant(rand_tensor(&mut rng, &[3, 2, 3, 3]));
            let y = g.conv_transpose2d(x, w, None, ConvGeom::new(3, 2, 1), 1);
            assert_eq!(g.shape(y), &[1, 2, 6, 8]);
            weighted_sum(g, y, 6)
        });
        check(&[3, 2, 3, 3], 7, |g, w| {
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            let x = g.constant(rand_tensor(&mut rng, &[2, 3, 4, 4]));
            let y = g.conv_transpose2d(x, w, None, ConvGeom::new(3, 2, 1), 1);
            weighted_sum(g, y, 8)
        });
    }

    #[test]
    fn instance_norm_gradients() {
        check(&[2, 2, 3, 3], 13, |g, x| {
            let y = g.instance_norm(x, 1e-5);
            weighted_sum(g, y, 14)
        });
    }

    #[test]
    fn pointwise_gradients() {
        check(&[2, 3, 2, 2], 15, |g, x| {
            let a = g.leaky_relu(x, 0.2);
            let b = g.tanh(a);
            let c = g.sigmoid(b);
            let d = g.clamp(c, 0.3, 0.7);
            let e = g.square(d);
            let f = g.add_scalar(e, 1.0);
            let l = g.ln(f);
            let r = g.relu(x);
            let s = g.add(l, r);
            weighted_sum(g, s, 16)
        });
    }

    #[test]
    fn structural_gradients() {
        check(&[2, 2, 4, 4], 17, |g, x| {
            let p = g.avg_pool2(x);
            let u = g.upsample2(p);
            let c = g.concat(&[u, x]);
            let m = g.spatial_mean(c);
            let r = g.reshape(m, &[2, 4]);
            let mut rng = ChaCha8Rng::seed_from_u64(18);
            let w = g.constant(rand_tensor(&mut rng, &[4, 3]));
            let b = g.constant(rand_tensor(&mut rng, &[3]));
            let h = g.matmul(r, w);
            let o = g.add_bias(h, b);
            let rep = g.replicate(o, 2, 3);
            weighted_sum(g, rep, 19)
        });
    }

    #[test]
    fn cross_entropy_gradients() {
        check(&[2, 4, 2, 3], 21, |g, x| g.softmax_cross_entropy(x, &[0, 1, 2, 3, 0, 1, 3, 3, 2, 1, 0, 0]));
        check(&[3, 5], 22, |g, x| g.softmax_cross_entropy(x, &[4, 0, 2]));
        check(&[3, 5], 23, |g, x| g.weighted_cross_entropy(x, &[4, 0, 2], &[0.5, 3.0, 1.25]));
    }

    #[test]
    fn unit_weights_match_plain_cross_entropy() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_shape_fn(IxDyn(&[2, 3]), |i| (i[0] * 3 + i[1]) as f64 * 0.3 - 0.7));
        let a = g.softmax_cross_entropy(x, &[2, 0]);
        let b = g.weighted_cross_entropy(x, &[2, 0], &[4.0, 4.0]);
        assert!((g.scalar(a) - g.scalar(b)).abs() < 1e-12);
    }

    #[test]
    fn replicate_gradient_is_area() {
        let mut g = Graph::new();
        let a = g.variable(Tensor::from_shape_vec(IxDyn(&[1, 2]), vec![0.2, 0.8]).unwrap());
        let r = g.replicate(a, 3, 5);
        let s = g.sum_all(r);
        let grads = g.backward(s);
        assert!(grads.wrt(a).unwrap().iter().all(|&v| v == 15.0));
    }

    #[test]
    fn frozen_params_receive_no_gradient() {
        let mut store = ParamStore::new();
        store.insert("d.w", Tensor::from_elem(IxDyn(&[2]), 1.0));
        store.insert("g.w", Tensor::from_elem(IxDyn(&[2]), 2.0));
        let mut g = Graph::new();
        g.freeze("d.");
        let dw = g.param(&store, "d.w");
        let gw = g.param(&store, "g.w");
        let p = g.mul(dw, gw);
        let s = g.sum_all(p);
        let grads = g.backward(s);
        assert!(grads.param("d.w").is_none());
        assert_eq!(grads.param("g.w").unwrap().iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0]);
    }
}
