// SPDX-License-Identifier: MIT OR Apache-2.0

//! Linear and MLP language probes over LayerNorm-normalized hidden states.
//!
//! ```text
//! linear:  logits = W_c · LN(h) + b_c
//! mlp:     logits = W_2 · ReLU(W_1 · LN(h))        (biases optional, off by default)
//! ```
//!
//! LN is parameter-free: `(h - mean(h)) / sqrt(var(h) + 1e-5)` with the
//! population variance. Training minimizes mean cross-entropy over mini-batches
//! with AdamW and keeps the weights of the epoch with the best validation
//! accuracy.

mod adamw;
mod io;
mod loss;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub use adamw::{adamw_step, AdamState};
pub use io::{load_probe, read_probe_manifest, save_probe, ProbeManifest, PROBE_MANIFEST_FILE};
pub use loss::{cross_entropy_grad, log_sum_exp};
pub use train::{argmax, class_accuracies, evaluate, loss_and_gradients, train_probe, Dataset};

/// Epsilon inside the LayerNorm square root.
pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    Linear,
    Mlp,
}

impl ProbeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbeKind::Linear => "linear",
            ProbeKind::Mlp => "mlp",
        }
    }
}

impl std::fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ProbeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(ProbeKind::Linear),
            "mlp" => Ok(ProbeKind::Mlp),
            other => Err(Error::InvalidConfig(format!(
                "unknown probe kind {other:?}"
            ))),
        }
    }
}

/// Training hyperparameters. Defaults follow the reference setup: AdamW with
/// lr 1e-3, batch 128, at most 3 epochs, early stopping with patience 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Epochs without validation-accuracy improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
    pub mlp_hidden: usize,
    pub mlp_bias: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 128,
            max_epochs: 3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            patience: 1,
            seed: 0,
            mlp_hidden: 256,
            mlp_bias: false,
        }
    }
}

impl OptimizerConfig {
    /// Default config with lr 2e-2, for desk-scale datasets of a few hundred
    /// samples per language where 3 epochs amount to only a few dozen steps.
    pub fn desk_scale() -> Self {
        Self {
            learning_rate: 2e-2,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be non-negative");
        }
        if self.mlp_hidden == 0 {
            return bad("mlp_hidden must be at least 1");
        }
        Ok(())
    }
}

/// Probe weights; gradients use the same layout.
#[derive(Clone, Debug, PartialEq)]
pub enum ProbeWeights<T> {
    Linear {
        /// `num_classes x d`
        w: Matrix<T>,
        b: Vec<T>,
    },
    Mlp {
        /// `hidden x d`
        w1: Matrix<T>,
        /// `num_classes x hidden`
        w2: Matrix<T>,
        b1: Option<Vec<T>>,
        b2: Option<Vec<T>>,
    },
}

impl<T: Scalar> ProbeWeights<T> {
    pub fn kind(&self) -> ProbeKind {
        match self {
            ProbeWeights::Linear { .. } => ProbeKind::Linear,
            ProbeWeights::Mlp { .. } => ProbeKind::Mlp,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            ProbeWeights::Linear { w, .. } => w.rows(),
            ProbeWeights::Mlp { w2, .. } => w2.rows(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ProbeWeights::Linear { w, .. } => w.cols(),
            ProbeWeights::Mlp { w1, .. } => w1.cols(),
        }
    }

    pub fn hidden_dim(&self) -> Option<usize> {
        match self {
            ProbeWeights::Linear { .. } => None,
            ProbeWeights::Mlp { w1, .. } => Some(w1.rows()),
        }
    }

    /// Named parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, &[T])> {
        match self {
            ProbeWeights::Linear { w, b } => vec![("w_c", w.as_slice()), ("b_c", b.as_slice())],
            ProbeWeights::Mlp { w1, w2, b1, b2 } => {
                let mut out = vec![("w_1", w1.as_slice()), ("w_2", w2.as_slice())];
                if let Some(b1) = b1 {
                    out.push(("b_1", b1.as_slice()));
                }
                if let Some(b2) = b2 {
                    out.push(("b_2", b2.as_slice()));
                }
                out
            }
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [T])> {
        match self {
            ProbeWeights::Linear { w, b } => {
                vec![("w_c", w.as_mut_slice()), ("b_c", b.as_mut_slice())]
            }
            ProbeWeights::Mlp { w1, w2, b1, b2 } => {
                let mut out = vec![("w_1", w1.as_mut_slice()), ("w_2", w2.as_mut_slice())];
                if let Some(b1) = b1 {
                    out.push(("b_1", b1.as_mut_slice()));
                }
                if let Some(b2) = b2 {
                    out.push(("b_2", b2.as_mut_slice()));
                }
                out
            }
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = T::zero();
        match self {
            ProbeWeights::Linear { w, b } => ProbeWeights::Linear {
                w: Matrix::filled(w.rows(), w.cols(), z),
                b: vec![z; b.len()],
            },
            ProbeWeights::Mlp { w1, w2, b1, b2 } => ProbeWeights::Mlp {
                w1: Matrix::filled(w1.rows(), w1.cols(), z),
                w2: Matrix::filled(w2.rows(), w2.cols(), z),
                b1: b1.as_ref().map(|b| vec![z; b.len()]),
                b2: b2.as_ref().map(|b| vec![z; b.len()]),
            },
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    /// Logits for an already normalized input. `hidden` is scratch for the MLP path.
    pub(crate) fn logits_normalized(&self, z: &[T], hidden: &mut Vec<T>, logits: &mut [T]) {
        match self {
            ProbeWeights::Linear { w, b } => {
                for (c, out) in logits.iter_mut().enumerate() {
                    *out = dot(w.row(c), z) + b[c];
                }
            }
            ProbeWeights::Mlp { w1, w2, b1, b2 } => {
                hidden.clear();
                for j in 0..w1.rows() {
                    let mut a = dot(w1.row(j), z);
                    if let Some(b1) = b1 {
                        a = a + b1[j];
                    }
                    hidden.push(a.max(T::zero()));
                }
                for (c, out) in logits.iter_mut().enumerate() {
                    let mut s = dot(w2.row(c), hidden);
                    if let Some(b2) = b2 {
                        s = s + b2[c];
                    }
                    *out = s;
                }
            }
        }
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Training provenance stored alongside the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeMeta {
    pub layer: usize,
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Fraction in `[0, 1]`.
    pub best_val_accuracy: f64,
    pub config: OptimizerConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeParameters<T> {
    pub weights: ProbeWeights<T>,
    pub meta: ProbeMeta,
}

impl<T: Scalar> ProbeParameters<T> {
    pub fn kind(&self) -> ProbeKind {
        self.weights.kind()
    }

    pub fn num_classes(&self) -> usize {
        self.weights.num_classes()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.input_dim()
    }

    pub fn with_layer(mut self, layer: usize) -> Self {
        self.meta.layer = layer;
        self
    }
}

/// Parameter-free LayerNorm.
pub fn layer_norm<T: Scalar>(h: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); h.len()];
    layer_norm_into(h, &mut out);
    out
}

pub fn layer_norm_into<T: Scalar>(h: &[T], out: &mut [T]) {
    debug_assert_eq!(h.len(), out.len());
    if h.is_empty() {
        return;
    }
    let n = T::from_usize_lossy(h.len());
    let mean = h.iter().copied().sum::<T>() / n;
    let var = h.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    let inv = (var + T::lit(LN_EPS)).sqrt().recip();
    for (o, &x) in out.iter_mut().zip(h) {
        *o = (x - mean) * inv;
    }
}

/// Logits of `probe` for a raw hidden state.
pub fn forward<T: Scalar>(probe: &ProbeParameters<T>, h: &[T]) -> Result<Vec<T>> {
    let d = probe.input_dim();
    if h.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: h.len(),
        });
    }
    let z = layer_norm(h);
    let mut logits = vec![T::zero(); probe.num_classes()];
    let mut hidden = Vec::new();
    probe
        .weights
        .logits_normalized(&z, &mut hidden, &mut logits);
    Ok(logits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn meta() -> ProbeMeta {
        ProbeMeta {
            layer: 0,
            seed: 0,
            epochs_run: 0,
            best_epoch: 0,
            best_val_accuracy: 0.0,
            config: OptimizerConfig::default(),
        }
    }

    #[test]
    fn layer_norm_constant_and_symmetric() {
        assert_eq!(layer_norm(&[1.0f64, 1.0, 1.0]), vec![0.0, 0.0, 0.0]);
        let out = layer_norm(&[2.0f64, -2.0]);
        // var 4 -> 2 / sqrt(4 + 1e-5)
        assert_relative_eq!(out[0], 1.0, epsilon = 2e-6);
        assert_relative_eq!(out[1], -1.0, epsilon = 2e-6);
    }

    #[test]
    fn layer_norm_random_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h: Vec<f64> = (0..16).map(|_| rng.random_range(-5.0..5.0)).collect();
        let out = layer_norm(&h);
        let m = out.iter().sum::<f64>() / 16.0;
        let v = out.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 16.0;
        assert!(m.abs() < 1e-6);
        assert!((v - 1.0).abs() < 1e-3);
    }

    #[test]
    fn identity_probe_returns_normalized_coordinates() {
        let d = 8;
        let w = Matrix::from_fn(5, d, |i, j| if i == j { 1.0f64 } else { 0.0 });
        let probe = ProbeParameters {
            weights: ProbeWeights::Linear { w, b: vec![0.0; 5] },
            meta: meta(),
        };
        // mean 0, population variance 1 up to the LN epsilon
        let h = [1.0f64, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let logits = forward(&probe, &h).unwrap();
        let z = layer_norm(&h);
        assert_eq!(logits, z[..5].to_vec());
        assert_relative_eq!(logits[0], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn dead_hidden_layer_gives_zero_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w2 = Matrix::from_fn(5, 6, |_, _| rng.random_range(-1.0..1.0));
        let probe = ProbeParameters {
            weights: ProbeWeights::Mlp {
                w1: Matrix::filled(6, 4, 0.0f64),
                w2,
                b1: None,
                b2: None,
            },
            meta: meta(),
        };
        for _ in 0..5 {
            let h: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert_eq!(forward(&probe, &h).unwrap(), vec![0.0; 5]);
        }
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let probe = ProbeParameters {
            weights: ProbeWeights::Linear {
                w: Matrix::filled(5, 4, 0.0f32),
                b: vec![0.0; 5],
            },
            meta: meta(),
        };
        assert!(matches!(
            forward(&probe, &[0.0; 3]),
            Err(Error::DimensionMismatch {
                expected: 4,
                actual: 3
            })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let mut c = OptimizerConfig::default();
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        let mut c = OptimizerConfig::default();
        c.beta2 = 1.0;
        assert!(c.validate().is_err());
        let mut c = OptimizerConfig::default();
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }
}
