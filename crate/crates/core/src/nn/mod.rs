//! Dense double-precision building blocks for the velocity model.
//!
//! Every layer exposes a forward pass that returns a cache and a backward pass
//! that accumulates parameter gradients into a caller-owned gradient value of
//! the same type as the parameters. Gradients are exact; [`grad_check`]
//! verifies them against central differences.

mod dropout;
mod gradcheck;
mod linear;
mod loss;
mod lstm;
pub(crate) use lstm::bilstm_join;
mod optim;
mod tensor;

pub use dropout::{dropout_backward, dropout_forward, DropoutMask};
pub use gradcheck::{grad_check, GradCheckReport, TensorCheck, FD_STEP};
pub use linear::{linear_backward, linear_forward, LinearParams};
pub use loss::{masked_mse_loss, mse, mse_loss};
pub use lstm::{
    bilstm_backward, bilstm_forward, lstm_backward, lstm_forward, BiLstmCache, BiLstmParams,
    LstmCache, LstmParams, Gate,
};
pub use optim::{
    adam_step, adam_update, clip_by_global_norm, global_norm, AdamSlot, AdamState, ADAM_BETA1,
    ADAM_BETA2, ADAM_EPSILON,
};
pub use tensor::{gemm, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, NnError>;

/// A fixed, ordered collection of named parameter tensors.
///
/// Gradients use the same type as the parameters, so `names`, `tensors` and
/// `tensors_mut` must agree in order for every value of a given shape.
pub trait ParamSet {
    fn names(&self) -> Vec<String>;
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(Tensor::fill_zero);
        z
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

impl ParamSet for Tensor {
    fn names(&self) -> Vec<String> {
        vec!["x".to_string()]
    }
    fn tensors(&self) -> Vec<&Tensor> {
        vec![self]
    }
    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![self]
    }
}

pub(crate) fn prefixed(prefix: &str, names: Vec<String>) -> Vec<String> {
    names.into_iter().map(|n| format!("{prefix}.{n}")).collect()
}
