use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Mean binary cross-entropy on raw logits, in the overflow-free form
/// `max(x, 0) - x*t + ln(1 + e^{-|x|})`.
///
/// Returns the loss and its gradient with respect to the logits.
pub fn bce_with_logits_loss<T: Scalar>(logits: &Tensor<T>, targets: &[T]) -> Result<(T, Tensor<T>)> {
    if logits.len() != targets.len() || targets.is_empty() {
        return Err(Error::Shape(format!(
            "{} logits vs {} targets",
            logits.len(),
            targets.len()
        )));
    }
    if targets.iter().any(|&t| t != T::zero() && t != T::one()) {
        return Err(Error::Config("targets must be 0 or 1".into()));
    }
    let n = T::from_usize(targets.len()).unwrap();
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(targets.len());
    for (&x, &t) in logits.data().iter().zip(targets) {
        loss += x.max(T::zero()) - x * t + (-x.abs()).exp().ln_1p();
        grad.push((sigmoid(x) - t) / n);
    }
    Ok((loss / n, Tensor::new(logits.shape(), grad)?))
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
