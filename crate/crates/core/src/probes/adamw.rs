// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::error::{Error, Result};
use crate::probes::OptimizerConfig;
use crate::scalar::Scalar;

/// First and second moment estimates for one tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
        }
    }
}

/// One decoupled-weight-decay Adam step at global step `t` (1-based).
///
/// ```text
/// θ ← θ − lr·λ·θ
/// m ← β1·m + (1−β1)·g,   v ← β2·v + (1−β2)·g²
/// θ ← θ − lr · m̂ / (sqrt(v̂) + ε)
/// ```
pub fn adamw_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdamState<T>,
    config: &OptimizerConfig,
    t: u64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::LengthMismatch {
            left: params.len(),
            right: grads.len(),
        });
    }
    if t == 0 {
        return Err(Error::InvalidConfig(
            "AdamW step counter starts at 1".into(),
        ));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            tensor: "gradient".into(),
            step: t,
        });
    }
    let lr = T::lit(config.learning_rate);
    let decay = T::one() - lr * T::lit(config.weight_decay);
    let b1 = T::lit(config.beta1);
    let b2 = T::lit(config.beta2);
    let eps = T::lit(config.epsilon);
    let exp = i32::try_from(t).unwrap_or(i32::MAX);
    let bc1 = T::one() - b1.powi(exp);
    let bc2 = T::one() - b2.powi(exp);
    for i in 0..params.len() {
        let g = grads[i];
        let m = b1 * state.m[i] + (T::one() - b1) * g;
        let v = b2 * state.v[i] + (T::one() - b2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        let update = (m / bc1) / ((v / bc2).sqrt() + eps);
        params[i] = params[i] * decay - lr * update;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn first_step_unit_gradient() {
        let cfg = OptimizerConfig::default();
        let mut p = [1.0f64];
        let mut s = AdamState::new(1);
        adamw_step(&mut p, &[1.0], &mut s, &cfg, 1).unwrap();
        // decay then adam: 1 - 1e-3*0.01 - 1e-3/(1+1e-8)
        let expected = 1.0 - 1e-3 * 0.01 - 1e-3 / (1.0 + 1e-8);
        assert_relative_eq!(p[0], expected, epsilon = 1e-15);
    }

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut cfg = OptimizerConfig::default();
        cfg.weight_decay = 0.0;
        let mut p = [0.75f64, -2.0];
        let mut s = AdamState::new(2);
        for t in 1..=5 {
            adamw_step(&mut p, &[0.0, 0.0], &mut s, &cfg, t).unwrap();
        }
        assert_eq!(p, [0.75, -2.0]);
    }

    #[test]
    fn decay_only_step() {
        let cfg = OptimizerConfig::default();
        let mut p = [1.0f64];
        let mut s = AdamState::new(1);
        adamw_step(&mut p, &[0.0], &mut s, &cfg, 1).unwrap();
        assert_relative_eq!(p[0], 1.0 - 1e-3 * 0.01, epsilon = 1e-15);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let cfg = OptimizerConfig::default();
        let mut p = [1.0f32];
        let mut s = AdamState::new(1);
        let err = adamw_step(&mut p, &[f32::NAN], &mut s, &cfg, 4).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { step: 4, .. }));
        assert_eq!(p, [1.0]);
    }
}
