use super::{NnError, Result, Tensor};

/// Neumaier-compensated sum. Keeps the loss accurate to a few ulps, which
/// finite-difference checks at small step sizes depend on.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        carry += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + carry
}

/// Mean squared error over every entry, with its gradient `2(pred - target)/n`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    target.expect_shape(pred.shape(), "mse target")?;
    let n = pred.len();
    if n == 0 {
        return Err(NnError::InvalidArgument("mse over an empty matrix".into()));
    }
    let mut grad = Tensor::zeros(pred.shape());
    for ((g, p), t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        *g = 2.0 * (p - t) / n as f64;
    }
    Ok((mse(pred, target)?, grad))
}

/// The value of [`mse_loss`] without its gradient.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    target.expect_shape(pred.shape(), "mse target")?;
    if pred.is_empty() {
        return Err(NnError::InvalidArgument("mse over an empty matrix".into()));
    }
    let sum = compensated_sum(pred.data().iter().zip(target.data()).map(|(p, t)| (p - t) * (p - t)));
    Ok(sum / pred.len() as f64)
}

/// Mean squared error over the entries where `mask` is nonzero. An all-zero
/// mask gives zero loss and zero gradient.
pub fn masked_mse_loss(pred: &Tensor, target: &Tensor, mask: &Tensor) -> Result<(f64, Tensor)> {
    target.expect_shape(pred.shape(), "mse target")?;
    mask.expect_shape(pred.shape(), "mse mask")?;
    if pred.is_empty() {
        return Err(NnError::InvalidArgument("mse over an empty matrix".into()));
    }
    let n = mask.data().iter().filter(|&&m| m != 0.0).count();
    let mut grad = Tensor::zeros(pred.shape());
    if n == 0 {
        return Ok((0.0, grad));
    }
    for (((g, p), t), m) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()).zip(mask.data()) {
        if *m != 0.0 {
            *g = 2.0 * (p - t) / n as f64;
        }
    }
    let sum = compensated_sum(
        pred.data().iter().zip(target.data()).zip(mask.data()).filter(|(_, m)| **m != 0.0).map(|((p, t), _)| (p - t) * (p - t)),
    );
    Ok((sum / n as f64, grad))
}
