// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::probes::{
    adamw_step, cross_entropy_grad, layer_norm_into, AdamState, OptimizerConfig, ProbeKind,
    ProbeMeta, ProbeParameters, ProbeWeights,
};
use crate::scalar::Scalar;

/// Raw (un-normalized) features with class labels in `[0, num_classes)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub features: Matrix<T>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: Matrix<T>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::LengthMismatch {
                left: features.rows(),
                right: labels.len(),
            });
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                index,
                label: label as u32,
                num_languages: num_classes,
            });
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    /// Rows `indices` of an f32 layer matrix, cast to `T`.
    pub fn from_layer(
        layer: &Matrix<f32>,
        labels: &[u32],
        indices: &[usize],
        num_classes: usize,
    ) -> Result<Self> {
        let features = layer.select_rows(indices).cast::<T>();
        let labels = indices.iter().map(|&i| labels[i] as usize).collect();
        Self::new(features, labels, num_classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    fn normalized(&self) -> Matrix<T> {
        let mut out = self.features.clone();
        for i in 0..out.rows() {
            let row = self.features.row(i);
            layer_norm_into(row, out.row_mut(i));
        }
        out
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Scalar>(x: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate().skip(1) {
        if v > x[best] {
            best = i;
        }
    }
    best
}

fn init_weights<T: Scalar>(
    kind: ProbeKind,
    dim: usize,
    classes: usize,
    config: &OptimizerConfig,
    rng: &mut ChaCha8Rng,
) -> ProbeWeights<T> {
    let mut uniform = |rows: usize, cols: usize, fan_in: usize| -> Vec<T> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        (0..rows * cols).map(|_| T::lit(dist.sample(rng))).collect()
    };
    match kind {
        ProbeKind::Linear => {
            let w = uniform(classes, dim, dim);
            let b = uniform(1, classes, dim);
            ProbeWeights::Linear {
                w: Matrix::new(classes, dim, w).expect("shape"),
                b,
            }
        }
        ProbeKind::Mlp => {
            let h = config.mlp_hidden;
            let w1 = uniform(h, dim, dim);
            let w2 = uniform(classes, h, h);
            let (b1, b2) = if config.mlp_bias {
                (Some(uniform(1, h, dim)), Some(uniform(1, classes, h)))
            } else {
                (None, None)
            };
            ProbeWeights::Mlp {
                w1: Matrix::new(h, dim, w1).expect("shape"),
                w2: Matrix::new(classes, h, w2).expect("shape"),
                b1,
                b2,
            }
        }
    }
}

/// Adds the gradient of the summed cross-entropy over `rows` of `z` to `grads`
/// and returns the summed loss. `z` must already be normalized.
fn accumulate<T: Scalar>(
    weights: &ProbeWeights<T>,
    z: &Matrix<T>,
    labels: &[usize],
    rows: &[usize],
    grads: &mut ProbeWeights<T>,
) -> T {
    let classes = weights.num_classes();
    let mut logits = vec![T::zero(); classes];
    let mut dlogits = vec![T::zero(); classes];
    let mut hidden = Vec::new();
    let mut dhidden = Vec::new();
    let mut total = T::zero();
    for &i in rows {
        let x = z.row(i);
        weights.logits_normalized(x, &mut hidden, &mut logits);
        total = total + cross_entropy_grad(&logits, labels[i], &mut dlogits);
        match (weights, &mut *grads) {
            (ProbeWeights::Linear { .. }, ProbeWeights::Linear { w: gw, b: gb }) => {
                for c in 0..classes {
                    let g = dlogits[c];
                    gb[c] = gb[c] + g;
                    for (gwj, &xj) in gw.row_mut(c).iter_mut().zip(x) {
                        *gwj = *gwj + g * xj;
                    }
                }
            }
            (
                ProbeWeights::Mlp { w2, .. },
                ProbeWeights::Mlp {
                    w1: gw1,
                    w2: gw2,
                    b1: gb1,
                    b2: gb2,
                },
            ) => {
                let h = hidden.len();
                dhidden.clear();
                dhidden.resize(h, T::zero());
                for c in 0..classes {
                    let g = dlogits[c];
                    if let Some(gb2) = gb2.as_mut() {
                        gb2[c] = gb2[c] + g;
                    }
                    let w2row = w2.row(c);
                    for (j, gw2j) in gw2.row_mut(c).iter_mut().enumerate() {
                        *gw2j = *gw2j + g * hidden[j];
                        dhidden[j] = dhidden[j] + g * w2row[j];
                    }
                }
                for j in 0..h {
                    // ReLU gate: hidden > 0 iff pre-activation > 0
                    if hidden[j] <= T::zero() {
                        continue;
                    }
                    let g = dhidden[j];
                    if let Some(gb1) = gb1.as_mut() {
                        gb1[j] = gb1[j] + g;
                    }
                    for (gw1k, &xk) in gw1.row_mut(j).iter_mut().zip(x) {
                        *gw1k = *gw1k + g * xk;
                    }
                }
            }
            _ => unreachable!("gradient layout follows the weights"),
        }
    }
    total
}

fn zero_fill<T: Scalar>(grads: &mut ProbeWeights<T>) {
    for (_, t) in grads.tensors_mut() {
        t.iter_mut().for_each(|v| *v = T::zero());
    }
}

fn scale<T: Scalar>(grads: &mut ProbeWeights<T>, s: T) {
    for (_, t) in grads.tensors_mut() {
        t.iter_mut().for_each(|v| *v = *v * s);
    }
}

/// Mean cross-entropy over `data` and its gradient with respect to `weights`.
pub fn loss_and_gradients<T: Scalar>(
    weights: &ProbeWeights<T>,
    data: &Dataset<T>,
) -> Result<(T, ProbeWeights<T>)> {
    check_dims(weights, data)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let z = data.normalized();
    let rows: Vec<usize> = (0..data.len()).collect();
    let mut grads = weights.zeros_like();
    let total = accumulate(weights, &z, &data.labels, &rows, &mut grads);
    let inv = T::from_usize_lossy(data.len()).recip();
    scale(&mut grads, inv);
    Ok((total * inv, grads))
}

fn check_dims<T: Scalar>(weights: &ProbeWeights<T>, data: &Dataset<T>) -> Result<()> {
    if weights.input_dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: weights.input_dim(),
            actual: data.dim(),
        });
    }
    if weights.num_classes() != data.num_classes {
        return Err(Error::DimensionMismatch {
            expected: weights.num_classes(),
            actual: data.num_classes,
        });
    }
    Ok(())
}

fn predictions<T: Scalar>(weights: &ProbeWeights<T>, z: &Matrix<T>) -> Vec<usize> {
    let mut logits = vec![T::zero(); weights.num_classes()];
    let mut hidden = Vec::new();
    (0..z.rows())
        .map(|i| {
            weights.logits_normalized(z.row(i), &mut hidden, &mut logits);
            argmax(&logits)
        })
        .collect()
}

fn accuracy_of(pred: &[usize], labels: &[usize]) -> f64 {
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

/// Fraction of correctly classified samples.
pub fn evaluate<T: Scalar>(probe: &ProbeParameters<T>, data: &Dataset<T>) -> Result<f64> {
    check_dims(&probe.weights, data)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let pred = predictions(&probe.weights, &data.normalized());
    Ok(accuracy_of(&pred, &data.labels))
}

/// Per-class recall; `None` for classes absent from `data`.
pub fn class_accuracies<T: Scalar>(
    probe: &ProbeParameters<T>,
    data: &Dataset<T>,
) -> Result<Vec<Option<f64>>> {
    check_dims(&probe.weights, data)?;
    let pred = predictions(&probe.weights, &data.normalized());
    let mut hits = vec![0usize; data.num_classes];
    let mut totals = vec![0usize; data.num_classes];
    for (&p, &l) in pred.iter().zip(&data.labels) {
        totals[l] += 1;
        if p == l {
            hits[l] += 1;
        }
    }
    Ok(hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
        .collect())
}

/// Trains a probe on `train`, selecting the epoch with the best accuracy on `val`.
pub fn train_probe<T: Scalar>(
    kind: ProbeKind,
    train: &Dataset<T>,
    val: &Dataset<T>,
    config: &OptimizerConfig,
) -> Result<ProbeParameters<T>> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train.dim() != val.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            actual: val.dim(),
        });
    }
    if train.num_classes != val.num_classes {
        return Err(Error::DimensionMismatch {
            expected: train.num_classes,
            actual: val.num_classes,
        });
    }
    let classes = train.num_classes;
    let mut seen = vec![false; classes];
    train.labels.iter().for_each(|&l| seen[l] = true);
    let present = seen.iter().filter(|&&s| s).count();
    if present < classes {
        return Err(Error::DegenerateTrainSet {
            present,
            expected: classes,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights = init_weights::<T>(kind, train.dim(), classes, config, &mut rng);
    let mut states: Vec<AdamState<T>> = weights
        .tensors()
        .iter()
        .map(|(_, t)| AdamState::new(t.len()))
        .collect();
    let mut grads = weights.zeros_like();
    let z_train = train.normalized();
    let z_val = val.normalized();

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0u64;
    let mut best = (weights.clone(), f64::NEG_INFINITY, 0usize);
    let mut stale = 0usize;
    let mut epochs_run = 0;
    for epoch in 1..=config.max_epochs {
        epochs_run = epoch;
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            zero_fill(&mut grads);
            accumulate(&weights, &z_train, &train.labels, batch, &mut grads);
            scale(&mut grads, T::from_usize_lossy(batch.len()).recip());
            step += 1;
            for (((name, p), (_, g)), st) in weights
                .tensors_mut()
                .into_iter()
                .zip(grads.tensors())
                .zip(states.iter_mut())
            {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteGradient {
                        tensor: name.to_string(),
                        step,
                    });
                }
                adamw_step(p, g, st, config, step)?;
            }
        }
        let acc = accuracy_of(&predictions(&weights, &z_val), &val.labels);
        log::debug!("{kind} probe epoch {epoch}: val accuracy {acc:.4}");
        if acc > best.1 {
            best = (weights.clone(), acc, epoch);
            stale = 0;
        } else {
            stale += 1;
            if config.patience > 0 && stale >= config.patience {
                break;
            }
        }
    }

    Ok(ProbeParameters {
        weights: best.0,
        meta: ProbeMeta {
            layer: 0,
            seed: config.seed,
            epochs_run,
            best_epoch: best.2,
            best_val_accuracy: best.1,
            config: config.clone(),
        },
    })
}
