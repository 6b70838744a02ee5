//! Finite-difference verification of every layer and of the composed model
//! at desk-scale sizes.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{backward, forward, ModelDims, StyleNetParams, GENRE_LAYERS};
use crate::corpus::GenreLabel;
use crate::nn::{
    bilstm_join,
    bilstm_backward, bilstm_forward, dropout_backward, dropout_forward, grad_check, linear_backward, linear_forward,
    lstm_backward, lstm_forward, mse, mse_loss, BiLstmParams, GradCheckReport, LinearParams, LstmParams, ParamSet, Tensor,
};

/// Sizes of the composed-model check.
pub const CHECK_INTERP_HIDDEN: usize = 4;
pub const CHECK_GENRE_HIDDEN: usize = 6;
pub const CHECK_STEPS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerResult {
    pub layer: String,
    pub max_rel_error: f64,
    pub worst_tensor: String,
}

fn projection_loss(out: &Tensor, proj: &Tensor) -> f64 {
    out.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
}

fn merge(reports: Vec<GradCheckReport>) -> GradCheckReport {
    GradCheckReport { tensors: reports.into_iter().flat_map(|r| r.tensors).collect() }
}

fn check_linear(rng: &mut ChaCha8Rng) -> GradCheckReport {
    let mut p = LinearParams::init(5, 4, rng);
    p.bias = Tensor::uniform(&[4], 0.5, rng);
    let mut x = Tensor::uniform(&[6, 5], 1.0, rng);
    let proj = Tensor::uniform(&[6, 4], 1.0, rng);
    let mut g = p.zeros_like();
    let dx = linear_backward(&p, &x, &proj, &mut g).unwrap();
    let a = grad_check(&mut p, &g, |p| projection_loss(&linear_forward(p, &x).unwrap(), &proj));
    let b = grad_check(&mut x, &dx, |x| projection_loss(&linear_forward(&p, x).unwrap(), &proj));
    merge(vec![a, b.prefixed("input")])
}

fn check_lstm(rng: &mut ChaCha8Rng) -> GradCheckReport {
    let mut p = LstmParams::init(3, 4, rng);
    let mut x = Tensor::uniform(&[5, 3], 1.0, rng);
    let proj = Tensor::uniform(&[5, 4], 1.0, rng);
    let (_, cache) = lstm_forward(&p, &x, None, None).unwrap();
    let mut g = p.zeros_like();
    let dx = lstm_backward(&p, &cache, &proj, &mut g).unwrap();
    let a = grad_check(&mut p, &g, |p| projection_loss(&lstm_forward(p, &x, None, None).unwrap().0, &proj));
    let b = grad_check(&mut x, &dx, |x| projection_loss(&lstm_forward(&p, x, None, None).unwrap().0, &proj));
    merge(vec![a, b.prefixed("input")])
}

fn check_bilstm(rng: &mut ChaCha8Rng) -> GradCheckReport {
    let mut p = BiLstmParams::init(3, 3, rng);
    let mut x = Tensor::uniform(&[6, 3], 1.0, rng);
    let proj = Tensor::uniform(&[6, 6], 1.0, rng);
    let (_, cache) = bilstm_forward(&p, &x).unwrap();
    let mut g = p.zeros_like();
    let dx = bilstm_backward(&p, &cache, &proj, &mut g).unwrap();
    let a = grad_check(&mut p, &g, |p| projection_loss(&bilstm_forward(p, &x).unwrap().0, &proj));
    let b = grad_check(&mut x, &dx, |x| projection_loss(&bilstm_forward(&p, x).unwrap().0, &proj));
    merge(vec![a, b.prefixed("input")])
}

fn check_dropout(rng: &mut ChaCha8Rng, training: bool) -> GradCheckReport {
    let mut x = Tensor::uniform(&[4, 5], 1.0, rng);
    let proj = Tensor::uniform(&[4, 5], 1.0, rng);
    let (_, mask) = dropout_forward(&x, 0.8, rng, training).unwrap();
    let dx = dropout_backward(&proj, mask.as_ref()).unwrap();
    grad_check(&mut x, &dx, |x| {
        let y = match &mask {
            Some(m) => {
                let mut y = x.clone();
                y.data_mut().iter_mut().zip(m.as_tensor().data()).for_each(|(v, m)| *v *= m);
                y
            }
            None => dropout_forward(x, 0.8, &mut ChaCha8Rng::seed_from_u64(0), false).unwrap().0,
        };
        projection_loss(&y, &proj)
    })
}

fn check_mse(rng: &mut ChaCha8Rng) -> GradCheckReport {
    let mut pred = Tensor::uniform(&[3, 88], 1.0, rng);
    let target = Tensor::uniform(&[3, 88], 1.0, rng);
    let (_, g) = mse_loss(&pred, &target).unwrap();
    grad_check(&mut pred, &g, |p| mse_loss(p, &target).unwrap().0)
}

/// A valid binary roll with random onsets and sustains, and matching targets.
pub fn random_window(steps: usize, rng: &mut ChaCha8Rng) -> (Tensor, Tensor) {
    let mut input = Tensor::zeros(&[steps, 176]);
    let mut target = Tensor::zeros(&[steps, 88]);
    for _ in 0..steps * 2 {
        let key = rng.gen_range(20..70);
        let onset = rng.gen_range(0..steps);
        let len = rng.gen_range(1..4);
        input.set(onset, 2 * key, 1.0);
        for t in onset..(onset + len).min(steps) {
            input.set(t, 2 * key + 1, 1.0);
        }
        target.set(onset, key, rng.gen_range(1..=127) as f64 / 127.0);
    }
    (input, target)
}

fn check_stylenet(rng: &mut ChaCha8Rng, inject_fault: bool) -> GradCheckReport {
    let genres = [GenreLabel::classical(), GenreLabel::jazz()];
    let dims = ModelDims::new(CHECK_INTERP_HIDDEN, CHECK_GENRE_HIDDEN);
    let mut params = StyleNetParams::init(&dims, &genres, rng);
    let cases: Vec<(GenreLabel, Tensor, Tensor)> = genres
        .iter()
        .map(|g| {
            let (x, y) = random_window(CHECK_STEPS, rng);
            (g.clone(), x, y)
        })
        .collect();
    let mut grads = params.zeros_like();
    let mut dummy = ChaCha8Rng::seed_from_u64(0);
    for (g, x, y) in &cases {
        let (pred, cache) = forward(&params, g, x, 1.0, &mut dummy, false).unwrap();
        let (_, d) = mse_loss(&pred, y).unwrap();
        backward(&params, &cache, &d, &mut grads).unwrap();
    }
    if inject_fault {
        grads.branches.get_mut(&GenreLabel::jazz()).unwrap().head.bias.scale(-1.0);
    }
    // A perturbation leaves everything upstream of it bit-identical, so every
    // LSTM direction and the head are memoized per window.
    let reversed: Vec<Tensor> = cases.iter().map(|(_, x, _)| x.reversed_rows()).collect();
    let mut memos: Vec<WindowMemo> = cases.iter().map(|_| WindowMemo::default()).collect();
    grad_check(&mut params, &grads, |p| {
        let mut total = 0.0;
        for (((g, x, y), x_rev), memo) in cases.iter().zip(&reversed).zip(memos.iter_mut()) {
            let mut h = memo.interpretation.eval(&p.interpretation, x, x_rev);
            let branch = &p.branches[g];
            for (layer, m) in branch.layers.iter().zip(memo.layers.iter_mut()) {
                h = m.eval(layer, &h, &h.reversed_rows());
            }
            let pred = memo.head.eval(&branch.head, &h, |p, x| linear_forward(p, x).unwrap());
            total += mse(&pred, y).unwrap();
        }
        total
    })
}

/// Caches `f(params, input)` on exact equality of both.
struct Memo<P> {
    entry: Option<(P, Tensor, Tensor)>,
}

impl<P> Default for Memo<P> {
    fn default() -> Self {
        Self { entry: None }
    }
}

impl<P: Clone + PartialEq> Memo<P> {
    fn eval(&mut self, params: &P, input: &Tensor, f: impl FnOnce(&P, &Tensor) -> Tensor) -> Tensor {
        if let Some((p, x, y)) = &self.entry {
            if p == params && x == input {
                return y.clone();
            }
        }
        let y = f(params, input);
        self.entry = Some((params.clone(), input.clone(), y.clone()));
        y
    }
}

#[derive(Default)]
struct BiLstmMemo {
    forward: Memo<LstmParams>,
    backward: Memo<LstmParams>,
}

impl BiLstmMemo {
    fn eval(&mut self, p: &BiLstmParams, x: &Tensor, x_rev: &Tensor) -> Tensor {
        let run = |p: &LstmParams, x: &Tensor| lstm_forward(p, x, None, None).unwrap().0;
        let hf = self.forward.eval(&p.forward, x, run);
        let hb = self.backward.eval(&p.backward, x_rev, run);
        bilstm_join(&hf, &hb)
    }
}

#[derive(Default)]
struct WindowMemo {
    interpretation: BiLstmMemo,
    layers: [BiLstmMemo; GENRE_LAYERS],
    head: Memo<LinearParams>,
}

/// Runs every check over `seeds` consecutive seeds starting at `seed`.
/// `inject_fault` negates one analytic gradient of the composed model, which
/// the check must flag.
pub fn run_gradcheck_suite(seed: u64, seeds: usize, inject_fault: bool) -> Vec<LayerResult> {
    type Check = fn(&mut ChaCha8Rng, bool) -> GradCheckReport;
    let checks: [(&str, Check); 7] = [
        ("linear", |r, _| check_linear(r)),
        ("lstm", |r, _| check_lstm(r)),
        ("bilstm", |r, _| check_bilstm(r)),
        ("dropout-fixed-mask", |r, _| check_dropout(r, true)),
        ("dropout-off", |r, _| check_dropout(r, false)),
        ("mse", |r, _| check_mse(r)),
        ("stylenet", check_stylenet),
    ];
    checks
        .iter()
        .enumerate()
        .map(|(k, (name, check))| {
            let mut worst = LayerResult { layer: name.to_string(), max_rel_error: 0.0, worst_tensor: String::new() };
            for s in 0..seeds as u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s).wrapping_mul(31).wrapping_add(k as u64));
                let report = check(&mut rng, inject_fault);
                for t in report.tensors {
                    if worst.worst_tensor.is_empty() || t.max_rel_error > worst.max_rel_error {
                        worst.max_rel_error = t.max_rel_error;
                        worst.worst_tensor = t.name;
                    }
                }
            }
            worst
        })
        .collect()
}

/// One line per layer plus a verdict line.
pub fn format_suite(results: &[LayerResult], tolerance: f64) -> String {
    let mut out = String::new();
    for r in results {
        let verdict = if r.max_rel_error < tolerance { "ok" } else { "FAIL" };
        writeln!(out, "{:<20} max_rel_err={:.3e}  worst={:<36} {verdict}", r.layer, r.max_rel_error, r.worst_tensor)
            .unwrap();
    }
    let all = results.iter().all(|r| r.max_rel_error < tolerance);
    writeln!(out, "tolerance {tolerance:e}: {}", if all { "PASS" } else { "FAIL" }).unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_and_fault_is_caught() {
        let results = run_gradcheck_suite(0, 2, false);
        assert_eq!(results.len(), 7);
        assert!(results.iter().all(|r| r.max_rel_error < 1e-4), "{}", format_suite(&results, 1e-4));
        let faulty = run_gradcheck_suite(0, 1, true);
        let sn = faulty.iter().find(|r| r.layer == "stylenet").unwrap();
        assert!((sn.max_rel_error - 2.0).abs() < 1e-3, "{}", sn.max_rel_error);
        assert_eq!(sn.worst_tensor, "branch.jazz.head.bias");
    }
}
