//! Named parameter storage and the Adam optimizer.

use std::collections::BTreeMap;

use ndarray::IxDyn;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::graph::{Gradients, Tensor};

/// Ordered map from parameter name to tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value.as_standard_layout().into_owned());
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    /// Copies every parameter whose name starts with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamStore {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Inserts or overwrites every entry of `other`.
    pub fn merge(&mut self, other: ParamStore) {
        self.tensors.extend(other.tensors);
    }

    /// Zero-mean Gaussian init.
    pub fn init_normal(&mut self, name: &str, shape: &[usize], std: f64, rng: &mut impl Rng) {
        let normal = Normal::new(0.0, std).expect("std must be finite and non-negative");
        let t = Tensor::from_shape_simple_fn(IxDyn(shape), || normal.sample(rng));
        self.insert(name, t);
    }

    pub fn init_zeros(&mut self, name: &str, shape: &[usize]) {
        self.insert(name, Tensor::zeros(IxDyn(shape)));
    }

    /// Euclidean distance between matching entries, for update-norm checks.
    pub fn distance(&self, other: &ParamStore, prefix: &str) -> f64 {
        self.tensors
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .filter_map(|(k, a)| other.get(k).map(|b| (a - b).mapv(|v| v * v).sum()))
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 2e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    m: Tensor,
    v: Tensor,
    t: u64,
}

/// Adam with per-parameter step counters, keyed by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    state: BTreeMap<String, Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, state: BTreeMap::new() }
    }

    /// Applies one update to every parameter that has a gradient.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        for (name, g) in grads.params() {
            self.step_one(store, name, g);
        }
    }

    pub fn step_one(&mut self, store: &mut ParamStore, name: &str, g: &Tensor) {
        let Some(p) = store.get_mut(name) else { return };
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let st = self.state.entry(name.to_string()).or_insert_with(|| Moments {
            m: Tensor::zeros(g.raw_dim()),
            v: Tensor::zeros(g.raw_dim()),
            t: 0,
        });
        st.t += 1;
        let c1 = 1.0 - beta1.powi(st.t as i32);
        let c2 = 1.0 - beta2.powi(st.t as i32);
        ndarray::Zip::from(p)
            .and(&mut st.m)
            .and(&mut st.v)
            .and(g)
            .for_each(|p, m, v, &g| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
    }

    /// Moment tensors as a store (`m/<name>`, `v/<name>`, `t/<name>`) for checkpointing.
    pub fn state_store(&self) -> ParamStore {
        let mut s = ParamStore::new();
        for (k, st) in &self.state {
            s.insert(format!("m/{k}"), st.m.clone());
            s.insert(format!("v/{k}"), st.v.clone());
            s.insert(format!("t/{k}"), Tensor::from_elem(IxDyn(&[]), st.t as f64));
        }
        s
    }

    pub fn from_state_store(config: AdamConfig, s: &ParamStore) -> Self {
        let mut state = BTreeMap::new();
        for (name, m) in s.iter().filter_map(|(k, v)| k.strip_prefix("m/").map(|n| (n, v))) {
            let (Some(v), Some(t)) = (s.get(&format!("v/{name}")), s.get(&format!("t/{name}"))) else {
                continue;
            };
            let t = t.iter().next().copied().unwrap_or(0.0) as u64;
            state.insert(name.to_string(), Moments { m: m.clone(), v: v.clone(), t });
        }
        Self { config, state }
    }
}
