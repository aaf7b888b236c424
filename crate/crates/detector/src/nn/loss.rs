//! Softmax and mean cross-entropy over `[n, classes, 1, 1]` logits.

use super::{Scalar, Tensor};

/// Row-wise softmax, max-shifted for stability.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Vec<Vec<T>> {
    (0..logits.n())
        .map(|i| {
            let row = logits.item(i);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let exps: Vec<T> = row.iter().map(|v| (*v - max).exp()).collect();
            let sum: T = exps.iter().copied().sum();
            exps.into_iter().map(|e| e / sum).collect()
        })
        .collect()
}

/// Mean cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, targets: &[usize]) -> (T, Tensor<T>) {
    assert_eq!(logits.n(), targets.len(), "one target per row");
    let n = T::lit(targets.len() as f64);
    let mut grad = Tensor::zeros(logits.shape);
    let mut loss = T::zero();
    for (i, &t) in targets.iter().enumerate() {
        let row = logits.item(i);
        assert!(t < row.len(), "target {t} out of range");
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let log_sum = row.iter().map(|v| (*v - max).exp()).sum::<T>().ln() + max;
        loss += log_sum - row[t];
        for (j, g) in grad.item_mut(i).iter_mut().enumerate() {
            let p = (row[j] - log_sum).exp();
            *g = (p - if j == t { T::one() } else { T::zero() }) / n;
        }
    }
    (loss / n, grad)
}
