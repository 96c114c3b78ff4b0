//! Bipartite graph-convolution Q-network: embeddings, interleaved
//! variable→constraint / constraint→variable half-convolutions with mean
//! aggregation, and a per-variable readout. Forward and backward passes are
//! written out by hand.

mod adam;
mod checkpoint;
mod graph;
mod network;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{CHECKPOINT_EXTENSION, CHECKPOINT_FORMAT};
pub use graph::Graph;
pub use network::{ForwardPass, QNet};

use crate::features::{NUM_CONS_FEATURES, NUM_VAR_FEATURES};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const INIT_STD: f64 = 0.01;
pub const LN_EPS: f64 = 1e-5;

/// How the readout's last pre-activation `z` becomes a Q-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalActivation {
    /// `-LeakyReLU(z)`.
    NegLeakyRelu,
    /// `min(z, slope·z)`: identity below zero, leaky above.
    MinSideLeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub var_features: usize,
    pub cons_features: usize,
    pub edge_features: usize,
    pub hidden: usize,
    /// Number of (variable→constraint, constraint→variable) pairs.
    pub conv_pairs: usize,
    pub leaky_slope: f64,
    pub final_activation: FinalActivation,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            var_features: NUM_VAR_FEATURES,
            cons_features: NUM_CONS_FEATURES,
            edge_features: 1,
            hidden: 64,
            conv_pairs: 1,
            leaky_slope: 0.01,
            final_activation: FinalActivation::NegLeakyRelu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Weight,
    Bias,
    NormGain,
    NormBias,
}

pub(crate) const EMB_VAR_W: usize = 0;
pub(crate) const EMB_VAR_B: usize = 1;
pub(crate) const EMB_VAR_G: usize = 2;
pub(crate) const EMB_VAR_BETA: usize = 3;
pub(crate) const EMB_CONS_W: usize = 4;
pub(crate) const EMB_CONS_B: usize = 5;
pub(crate) const EMB_CONS_G: usize = 6;
pub(crate) const EMB_CONS_BETA: usize = 7;
pub(crate) const EMB_EDGE_W: usize = 8;
pub(crate) const EMB_EDGE_B: usize = 9;
const NUM_EMB: usize = 10;

// offsets inside one half-convolution block
pub(crate) const HALF_SELF: usize = 0;
pub(crate) const HALF_MSG: usize = 1;
pub(crate) const HALF_EDGE: usize = 2;
pub(crate) const HALF_B: usize = 3;
pub(crate) const HALF_G: usize = 4;
pub(crate) const HALF_BETA: usize = 5;
const HALF_LEN: usize = 6;

pub(crate) const HEAD_W1: usize = 0;
pub(crate) const HEAD_B1: usize = 1;
pub(crate) const HEAD_W2: usize = 2;
pub(crate) const HEAD_B2: usize = 3;

impl Architecture {
    pub fn num_tensors(&self) -> usize {
        NUM_EMB + 2 * HALF_LEN * self.conv_pairs + 4
    }

    /// First tensor of half-convolution `k` (even: v→c, odd: c→v).
    pub(crate) fn half(&self, k: usize) -> usize {
        NUM_EMB + HALF_LEN * k
    }

    pub(crate) fn head(&self) -> usize {
        NUM_EMB + 2 * HALF_LEN * self.conv_pairs
    }

    /// `(name, shape, kind)` of every tensor, in storage order.
    pub fn layout(&self) -> Vec<(String, (usize, usize), TensorKind)> {
        let h = self.hidden;
        let mut v: Vec<(String, (usize, usize), TensorKind)> = vec![
            ("var_emb.weight".into(), (h, self.var_features), TensorKind::Weight),
            ("var_emb.bias".into(), (1, h), TensorKind::Bias),
            ("var_emb.norm_gain".into(), (1, h), TensorKind::NormGain),
            ("var_emb.norm_bias".into(), (1, h), TensorKind::NormBias),
            ("cons_emb.weight".into(), (h, self.cons_features), TensorKind::Weight),
            ("cons_emb.bias".into(), (1, h), TensorKind::Bias),
            ("cons_emb.norm_gain".into(), (1, h), TensorKind::NormGain),
            ("cons_emb.norm_bias".into(), (1, h), TensorKind::NormBias),
            ("edge_emb.weight".into(), (self.edge_features, h), TensorKind::Weight),
            ("edge_emb.bias".into(), (1, h), TensorKind::Bias),
        ];
        for k in 0..2 * self.conv_pairs {
            let p = format!("conv{}.{}", k / 2, if k % 2 == 0 { "v_to_c" } else { "c_to_v" });
            v.push((format!("{p}.self_weight"), (h, h), TensorKind::Weight));
            v.push((format!("{p}.msg_weight"), (h, h), TensorKind::Weight));
            v.push((format!("{p}.edge_weight"), (h, h), TensorKind::Weight));
            v.push((format!("{p}.bias"), (1, h), TensorKind::Bias));
            v.push((format!("{p}.norm_gain"), (1, h), TensorKind::NormGain));
            v.push((format!("{p}.norm_bias"), (1, h), TensorKind::NormBias));
        }
        v.push(("head.weight1".into(), (h, h), TensorKind::Weight));
        v.push(("head.bias1".into(), (1, h), TensorKind::Bias));
        v.push(("head.weight2".into(), (1, h), TensorKind::Weight));
        v.push(("head.bias2".into(), (1, 1), TensorKind::Bias));
        v
    }
}

/// A list of tensors laid out per [`Architecture::layout`]. Also used for
/// gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub tensors: Vec<Array2<f64>>,
}

impl Params {
    pub fn zeros(arch: &Architecture) -> Self {
        Params {
            tensors: arch
                .layout()
                .into_iter()
                .map(|(_, shape, _)| Array2::zeros(shape))
                .collect(),
        }
    }

    /// Linear weights `N(0, 0.01²)`, biases 0, layer-norm gains 1 and biases 0.
    /// Values are rounded to `f32` so checkpoints round-trip exactly.
    pub fn init(arch: &Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let tensors = arch
            .layout()
            .into_iter()
            .map(|(_, shape, kind)| match kind {
                TensorKind::Weight => Array2::from_shape_simple_fn(shape, || normal.sample(&mut rng)),
                TensorKind::Bias | TensorKind::NormBias => Array2::zeros(shape),
                TensorKind::NormGain => Array2::ones(shape),
            })
            .collect();
        let mut p = Params { tensors };
        p.round_to_f32();
        p
    }

    pub fn zeros_like(&self) -> Self {
        Params {
            tensors: self.tensors.iter().map(|t| Array2::zeros(t.raw_dim())).collect(),
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, f: f64) {
        for t in &mut self.tensors {
            t.mapv_inplace(|v| v * f);
        }
    }

    /// `self += a·other`.
    pub fn add_scaled(&mut self, a: f64, other: &Params) {
        for (t, o) in self.tensors.iter_mut().zip(&other.tensors) {
            t.scaled_add(a, o);
        }
    }

    /// Polyak averaging `self ← τ·online + (1-τ)·self`.
    pub fn soft_update(&mut self, online: &Params, tau: f64) {
        for (t, o) in self.tensors.iter_mut().zip(&online.tensors) {
            t.zip_mut_with(o, |a, &b| *a = tau * b + (1.0 - tau) * *a);
        }
    }

    pub(crate) fn round_to_f32(&mut self) {
        for t in &mut self.tensors {
            t.mapv_inplace(|v| v as f32 as f64);
        }
    }

    pub(crate) fn check_layout(&self, arch: &Architecture) -> bool {
        let layout = arch.layout();
        layout.len() == self.tensors.len()
            && layout
                .iter()
                .zip(&self.tensors)
                .all(|((_, shape, _), t)| t.dim() == *shape)
    }
}
