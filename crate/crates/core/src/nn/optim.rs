use super::{NnError, Result, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Euclidean norm over every entry of every tensor.
pub fn global_norm(grads: &[&Tensor]) -> f64 {
    grads.iter().map(|g| g.sum_squares()).sum::<f64>().sqrt()
}

/// Rescales all tensors by `max_norm / n` when their joint norm `n` exceeds
/// `max_norm`. Returns the norm before clipping.
pub fn clip_by_global_norm(grads: &mut [&mut Tensor], max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0) {
        return Err(NnError::InvalidArgument(format!("clip norm {max_norm} must be positive")));
    }
    let norm = grads.iter().map(|g| g.sum_squares()).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(NnError::NonFinite("gradient norm".into()));
    }
    if norm > max_norm {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale(scale));
    }
    Ok(norm)
}

/// Moments and step count for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamSlot {
    pub m: Tensor,
    pub v: Tensor,
    pub step: u64,
}

impl AdamSlot {
    pub fn new(shape: &[usize]) -> Self {
        Self { m: Tensor::zeros(shape), v: Tensor::zeros(shape), step: 0 }
    }
}

/// Adam moments for an ordered parameter list. Each tensor keeps its own step
/// count so tensors that sit out a step (an inactive genre branch) are not
/// moved by stale momentum and their bias correction stays exact.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub slots: Vec<AdamSlot>,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> Self {
        Self {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
            slots: params.iter().map(|p| AdamSlot::new(p.shape())).collect(),
        }
    }
}

/// One Adam update of a single tensor. Nothing is written if the update
/// would produce a non-finite value.
pub fn adam_update(
    param: &mut Tensor,
    grad: &Tensor,
    slot: &mut AdamSlot,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) -> Result<()> {
    grad.expect_shape(param.shape(), "adam grad")?;
    slot.m.expect_shape(param.shape(), "adam first moment")?;
    slot.v.expect_shape(param.shape(), "adam second moment")?;
    let step = slot.step + 1;
    let c1 = 1.0 - beta1.powf(step as f64);
    let c2 = 1.0 - beta2.powf(step as f64);
    let mut m = slot.m.clone();
    let mut v = slot.v.clone();
    let mut p = param.clone();
    for (((p, m), v), g) in p.data_mut().iter_mut().zip(m.data_mut()).zip(v.data_mut()).zip(grad.data()) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
    if !(p.all_finite() && m.all_finite() && v.all_finite()) {
        return Err(NnError::NonFinite("adam update".into()));
    }
    *param = p;
    slot.m = m;
    slot.v = v;
    slot.step = step;
    Ok(())
}

/// Adam over every tensor in `params`, paired with `grads` and `state.slots` by position.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[&Tensor], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.slots.len() {
        return Err(NnError::Shape(format!(
            "adam: {} params, {} grads, {} slots",
            params.len(),
            grads.len(),
            state.slots.len()
        )));
    }
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    for ((p, g), slot) in params.iter_mut().zip(grads).zip(state.slots.iter_mut()) {
        adam_update(p, g, slot, lr, b1, b2, eps)?;
    }
    Ok(())
}
