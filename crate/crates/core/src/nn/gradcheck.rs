use std::fmt;

use super::{ParamSet, Tensor};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub elements: usize,
    pub max_rel_error: f64,
    /// Analytic and numeric values at the worst element.
    pub worst: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error() < tolerance
    }

    /// Prefixes every tensor name, for merging reports of sub-models.
    pub fn prefixed(mut self, prefix: &str) -> Self {
        for t in &mut self.tensors {
            t.name = format!("{prefix}.{}", t.name);
        }
        self
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.tensors {
            writeln!(
                f,
                "{:<40} n={:<6} max_rel_err={:.3e} (analytic {:.6e}, numeric {:.6e})",
                t.name, t.elements, t.max_rel_error, t.worst.0, t.worst.1
            )?;
        }
        Ok(())
    }
}

pub(crate) fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `loss` around `params`.
///
/// Every element of every tensor is perturbed by ±[`FD_STEP`] and restored
/// afterwards, so `params` is unchanged on return.
pub fn grad_check<P, F>(params: &mut P, analytic: &P, mut loss: F) -> GradCheckReport
where
    P: ParamSet,
    F: FnMut(&P) -> f64,
{
    let names = params.names();
    let analytic: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.data().to_vec()).collect();
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let mut report = GradCheckReport::default();
    for (i, name) in names.into_iter().enumerate() {
        let mut check = TensorCheck { name, elements: sizes[i], max_rel_error: 0.0, worst: (0.0, 0.0) };
        for j in 0..sizes[i] {
            let original = params.tensors()[i].data()[j];
            let nudge = |p: &mut P, v: f64| {
                let mut tensors: Vec<&mut Tensor> = p.tensors_mut();
                tensors[i].data_mut()[j] = v;
            };
            nudge(params, original + FD_STEP);
            let plus = loss(params);
            nudge(params, original - FD_STEP);
            let minus = loss(params);
            nudge(params, original);
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic[i][j];
            let err = relative_error(a, numeric);
            if j == 0 || err > check.max_rel_error {
                check.max_rel_error = err;
                check.worst = (a, numeric);
            }
        }
        report.tensors.push(check);
    }
    report
}
