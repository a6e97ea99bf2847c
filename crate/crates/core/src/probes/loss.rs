// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::scalar::Scalar;

/// `log(sum(exp(x)))` with max subtraction.
pub fn log_sum_exp<T: Scalar>(x: &[T]) -> T {
    let m = x.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    m + x.iter().map(|&v| (v - m).exp()).sum::<T>().ln()
}

/// Softmax cross-entropy of `logits` against `label`. Writes
/// `softmax(logits) - onehot(label)` into `dlogits` and returns the loss.
pub fn cross_entropy_grad<T: Scalar>(logits: &[T], label: usize, dlogits: &mut [T]) -> T {
    debug_assert_eq!(logits.len(), dlogits.len());
    let lse = log_sum_exp(logits);
    for (g, &l) in dlogits.iter_mut().zip(logits) {
        *g = (l - lse).exp();
    }
    dlogits[label] = dlogits[label] - T::one();
    lse - logits[label]
}
