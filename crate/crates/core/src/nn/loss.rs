use super::tensor::{Real, Tensor};
use super::NnError;

/// Mean absolute error and its gradient with respect to the prediction.
#[derive(Debug, Clone)]
pub struct MaeLoss<T> {
    pub value: T,
    pub grad: Tensor<T>,
    /// Number of elements that contributed.
    pub count: usize,
}

/// Mean of `|pred - target|` over unmasked elements (`mask[i] == true` keeps
/// element `i`). The gradient is `sign(pred - target) / n` with `sign(0) = 0`.
pub fn mae_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, mask: Option<&[bool]>) -> Result<MaeLoss<T>, NnError> {
    if pred.shape() != target.shape() {
        return Err(NnError::Shape(format!("prediction {:?} vs target {:?}", pred.shape(), target.shape())));
    }
    if let Some(m) = mask {
        if m.len() != pred.len() {
            return Err(NnError::Shape(format!("mask has {} entries for {} elements", m.len(), pred.len())));
        }
    }
    let keep = |i: usize| mask.is_none_or(|m| m[i]);
    let count = (0..pred.len()).filter(|&i| keep(i)).count();
    let mut grad = Tensor::zeros(pred.shape());
    if count == 0 {
        return Ok(MaeLoss { value: T::zero(), grad, count });
    }
    let n = T::lit(count as f64);
    let mut total = T::zero();
    for (i, (&p, &t)) in pred.data().iter().zip(target.data()).enumerate() {
        if !keep(i) {
            continue;
        }
        let d = p - t;
        total += d.abs();
        grad.data_mut()[i] = if d > T::zero() {
            T::one() / n
        } else if d < T::zero() {
            -T::one() / n
        } else {
            T::zero()
        };
    }
    Ok(MaeLoss { value: total / n, grad, count })
}
