use rand::Rng;

use super::{gemm, NnError, ParamSet, Result, Tensor};

/// Affine map with identity activation: `y = x·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    /// `in × out`
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LinearParams {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self { weight: Tensor::zeros(&[input, output]), bias: Tensor::zeros(&[output]) }
    }

    /// Weights uniform in ±1/√input, zero bias.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self { weight: Tensor::uniform(&[input, output], bound, rng), bias: Tensor::zeros(&[output]) }
    }

    pub fn input_size(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_size(&self) -> usize {
        self.weight.cols()
    }
}

impl ParamSet for LinearParams {
    fn names(&self) -> Vec<String> {
        vec!["weight".into(), "bias".into()]
    }
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }
    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub fn linear_forward(params: &LinearParams, inputs: &Tensor) -> Result<Tensor> {
    if inputs.shape().len() != 2 || inputs.cols() != params.input_size() {
        return Err(NnError::Shape(format!("linear input {:?}, expected T x {}", inputs.shape(), params.input_size())));
    }
    let mut out = Tensor::zeros(&[inputs.rows(), params.output_size()]);
    gemm(1.0, inputs, false, &params.weight, false, 0.0, &mut out)?;
    for t in 0..out.rows() {
        out.row_mut(t).iter_mut().zip(params.bias.data()).for_each(|(y, b)| *y += b);
    }
    Ok(out)
}

/// Adds parameter gradients to `grads` and returns the input gradient.
pub fn linear_backward(params: &LinearParams, inputs: &Tensor, grad_out: &Tensor, grads: &mut LinearParams) -> Result<Tensor> {
    grad_out.expect_shape(&[inputs.rows(), params.output_size()], "linear grad_out")?;
    gemm(1.0, inputs, true, grad_out, false, 1.0, &mut grads.weight)?;
    let db = grads.bias.data_mut();
    for t in 0..grad_out.rows() {
        db.iter_mut().zip(grad_out.row(t)).for_each(|(b, d)| *b += d);
    }
    let mut dx = Tensor::zeros(&[inputs.rows(), params.input_size()]);
    gemm(1.0, grad_out, false, &params.weight, true, 0.0, &mut dx)?;
    Ok(dx)
}
