use rand::Rng;

use super::{NnError, Result, Tensor};

/// Per-unit multipliers drawn by a training-mode dropout pass: `0` or `1/keep_prob`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask(Tensor);

impl DropoutMask {
    pub fn from_tensor(mask: Tensor) -> Self {
        Self(mask)
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.0
    }
}

/// Inverted dropout. Each unit is kept with probability `keep_prob` and scaled
/// by `1/keep_prob`; outside training, or with `keep_prob == 1`, this is the
/// identity and draws nothing from `rng`.
pub fn dropout_forward<R: Rng + ?Sized>(
    inputs: &Tensor,
    keep_prob: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Tensor, Option<DropoutMask>)> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(NnError::InvalidArgument(format!("keep probability {keep_prob} not in (0, 1]")));
    }
    if !training || keep_prob == 1.0 {
        return Ok((inputs.clone(), None));
    }
    let scale = 1.0 / keep_prob;
    let mut mask = Tensor::zeros(inputs.shape());
    mask.data_mut().iter_mut().for_each(|m| {
        if rng.gen::<f64>() < keep_prob {
            *m = scale;
        }
    });
    let mut out = inputs.clone();
    out.data_mut().iter_mut().zip(mask.data()).for_each(|(x, m)| *x *= m);
    Ok((out, Some(DropoutMask(mask))))
}

pub fn dropout_backward(grad_out: &Tensor, mask: Option<&DropoutMask>) -> Result<Tensor> {
    let mut dx = grad_out.clone();
    if let Some(DropoutMask(mask)) = mask {
        mask.expect_shape(grad_out.shape(), "dropout mask")?;
        dx.data_mut().iter_mut().zip(mask.data()).for_each(|(d, m)| *d *= m);
    }
    Ok(dx)
}
