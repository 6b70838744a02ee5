use rand::Rng;

use super::{ModelError, StyleNetParams};
use crate::corpus::GenreLabel;
use crate::nn::{
    bilstm_backward, bilstm_forward, dropout_backward, dropout_forward, linear_backward, linear_forward,
    BiLstmCache, DropoutMask, Tensor,
};

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    genre: GenreLabel,
    interpretation: BiLstmCache,
    /// One mask per dropout site: after the interpretation layer and after
    /// each branch layer except the last.
    masks: Vec<Option<DropoutMask>>,
    layers: Vec<BiLstmCache>,
    head_input: Tensor,
}

/// Interpretation BiLSTM, dropout, three branch BiLSTMs with dropout between
/// them, then the linear head. Returns raw `T × 88` velocities.
///
/// `rng` is drawn from only when `training` is set and `keep_prob < 1`.
pub fn forward<R: Rng + ?Sized>(
    params: &StyleNetParams,
    genre: &GenreLabel,
    input: &Tensor,
    keep_prob: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Tensor, ForwardCache), ModelError> {
    let branch = params.branches.get(genre).ok_or_else(|| ModelError::unknown_genre(genre, params))?;
    if input.shape().len() != 2 || input.rows() == 0 {
        return Err(ModelError::EmptyWindow);
    }
    let (mut x, interpretation) = bilstm_forward(&params.interpretation, input)?;
    let mut masks = Vec::with_capacity(branch.layers.len());
    let mut layers = Vec::with_capacity(branch.layers.len());
    for layer in &branch.layers {
        let (dropped, mask) = dropout_forward(&x, keep_prob, rng, training)?;
        masks.push(mask);
        let (y, cache) = bilstm_forward(layer, &dropped)?;
        layers.push(cache);
        x = y;
    }
    let out = linear_forward(&branch.head, &x)?;
    let cache = ForwardCache { genre: genre.clone(), interpretation, masks, layers, head_input: x };
    Ok((out, cache))
}

/// Accumulates gradients of the cached forward pass into `grads`. Only the
/// interpretation layer and the cached genre's branch are touched.
pub fn backward(
    params: &StyleNetParams,
    cache: &ForwardCache,
    grad_out: &Tensor,
    grads: &mut StyleNetParams,
) -> Result<(), ModelError> {
    let genre = &cache.genre;
    let branch = params.branches.get(genre).ok_or_else(|| ModelError::unknown_genre(genre, params))?;
    let branch_grads = grads.branches.get_mut(genre).ok_or_else(|| ModelError::unknown_genre(genre, params))?;
    let mut d = linear_backward(&branch.head, &cache.head_input, grad_out, &mut branch_grads.head)?;
    for i in (0..branch.layers.len()).rev() {
        let dx = bilstm_backward(&branch.layers[i], &cache.layers[i], &d, &mut branch_grads.layers[i])?;
        d = dropout_backward(&dx, cache.masks[i].as_ref())?;
    }
    bilstm_backward(&params.interpretation, &cache.interpretation, &d, &mut grads.interpretation)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDims;
    use crate::nn::{bilstm_forward, linear_forward, ParamSet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn genres() -> Vec<GenreLabel> {
        vec![GenreLabel::classical(), GenreLabel::jazz()]
    }

    fn binary_input(steps: usize, rng: &mut ChaCha8Rng) -> Tensor {
        let mut x = Tensor::zeros(&[steps, 176]);
        for v in x.data_mut() {
            *v = if rng.gen_bool(0.1) { 1.0 } else { 0.0 };
        }
        x
    }

    #[test]
    fn zero_params_predict_zero() {
        let p = StyleNetParams::zeros(&ModelDims::new(4, 5), &genres());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = binary_input(7, &mut rng);
        let (y, _) = forward(&p, &GenreLabel::jazz(), &x, 0.8, &mut rng, true).unwrap();
        assert_eq!(y.shape(), &[7, 88]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn branches_share_interpretation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = StyleNetParams::init(&ModelDims::new(4, 5), &genres(), &mut rng);
        let x = binary_input(6, &mut rng);
        let run = |p: &StyleNetParams, g: GenreLabel, rng: &mut ChaCha8Rng| forward(p, &g, &x, 1.0, rng, false).unwrap().0;
        assert_ne!(run(&p, GenreLabel::classical(), &mut rng), run(&p, GenreLabel::jazz(), &mut rng));
        let jazz = p.branches[&GenreLabel::jazz()].clone();
        p.branches.insert(GenreLabel::classical(), jazz);
        assert_eq!(run(&p, GenreLabel::classical(), &mut rng), run(&p, GenreLabel::jazz(), &mut rng));
    }

    #[test]
    fn matches_manual_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = StyleNetParams::init(&ModelDims::new(3, 4), &genres(), &mut rng);
        let x = binary_input(5, &mut rng);
        let (y, _) = forward(&p, &GenreLabel::classical(), &x, 0.8, &mut rng, false).unwrap();
        let b = &p.branches[&GenreLabel::classical()];
        let mut h = bilstm_forward(&p.interpretation, &x).unwrap().0;
        for layer in &b.layers {
            h = bilstm_forward(layer, &h).unwrap().0;
        }
        assert_eq!(y, linear_forward(&b.head, &h).unwrap());
    }

    #[test]
    fn errors() {
        let p = StyleNetParams::zeros(&ModelDims::new(2, 2), &[GenreLabel::jazz()]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::zeros(&[3, 176]);
        let err = forward(&p, &GenreLabel::classical(), &x, 1.0, &mut rng, false).unwrap_err();
        assert!(matches!(err, ModelError::UnknownGenre { ref available, .. } if available == &["jazz".to_string()]));
        let err = forward(&p, &GenreLabel::jazz(), &Tensor::zeros(&[0, 176]), 1.0, &mut rng, false).unwrap_err();
        assert!(matches!(err, ModelError::EmptyWindow));
    }

    #[test]
    fn backward_leaves_other_branch_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = StyleNetParams::init(&ModelDims::new(3, 4), &genres(), &mut rng);
        let x = binary_input(5, &mut rng);
        let (y, cache) = forward(&p, &GenreLabel::jazz(), &x, 0.8, &mut rng, true).unwrap();
        let mut g = p.zeros_like();
        backward(&p, &cache, &y, &mut g).unwrap();
        let classical = &g.branches[&GenreLabel::classical()];
        assert!(classical.tensors().iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
        assert!(g.interpretation.tensors().iter().any(|t| t.data().iter().any(|&v| v != 0.0)));
        assert!(g.branches[&GenreLabel::jazz()].tensors().iter().any(|t| t.data().iter().any(|&v| v != 0.0)));
    }
}
