use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{backward, forward, load_dataset, GenreData, ModelError, StyleNetParams, TrainConfig, Window};
use crate::corpus::{DatasetManifest, GenreLabel};
use crate::nn::{adam_update, clip_by_global_norm, masked_mse_loss, mse_loss, AdamState, NnError, ParamSet, Tensor};
use crate::roll::sounding_mask;

/// One row of the loss log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub genre: GenreLabel,
    pub train_loss: f64,
    /// Absent when the genre has no validation files.
    pub val_loss: Option<f64>,
}

pub const LOSS_CSV_HEADER: &str = "epoch,genre,train_loss,val_loss";

/// `epoch,genre,train_loss,val_loss` with a header line; a missing validation
/// loss is an empty field.
pub fn loss_csv(records: &[LossRecord]) -> String {
    let mut out = format!("{LOSS_CSV_HEADER}\n");
    for r in records {
        let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{}", r.epoch, r.genre, r.train_loss, val).unwrap();
    }
    out
}

/// Complete training state: resuming from it continues the run exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub params: StyleNetParams,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    pub rng: ChaCha8Rng,
    pub history: Vec<LossRecord>,
}

impl Checkpoint {
    /// Seeded initial state. All later randomness (shuffles, dropout) continues
    /// from the same generator.
    pub fn fresh(config: TrainConfig, genres: &[GenreLabel]) -> Result<Self, ModelError> {
        config.validate()?;
        if genres.is_empty() {
            return Err(ModelError::Config("at least one genre is required".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = StyleNetParams::init(&config.dims(), genres, &mut rng);
        let adam = AdamState::new(&params.tensors());
        Ok(Self { config, params, adam, epoch: 0, rng, history: Vec::new() })
    }
}

fn window_weight(window: &Window, masked: bool) -> (Option<Tensor>, usize) {
    if masked {
        let mask = sounding_mask(&window.input);
        let n = mask.data().iter().filter(|&&m| m != 0.0).count();
        (Some(mask), n)
    } else {
        (None, window.target.len())
    }
}

/// One optimizer step on a batch of windows of a single genre: forward,
/// loss, backward, global-norm clipping, then Adam on the interpretation
/// layer and that genre's branch only. Returns the batch loss, which is the
/// mean over all supervised cells of the batch.
pub fn optimizer_step(
    state: &mut Checkpoint,
    grads: &mut StyleNetParams,
    genre: &GenreLabel,
    batch: &[&Window],
) -> Result<f64, ModelError> {
    let active = state.params.active_indices(genre);
    if !state.params.branches.contains_key(genre) {
        return Err(ModelError::unknown_genre(genre, &state.params));
    }
    {
        let mut g = grads.tensors_mut();
        for &i in &active {
            g[i].fill_zero();
        }
    }
    let masked = state.config.masked_loss;
    let weights: Vec<_> = batch.iter().map(|w| window_weight(w, masked)).collect();
    let total: usize = weights.iter().map(|(_, n)| n).sum();
    let mut batch_loss = 0.0;
    for (window, (mask, n)) in batch.iter().zip(&weights) {
        let (pred, cache) =
            forward(&state.params, genre, &window.input, state.config.keep_prob, &mut state.rng, true)?;
        if *n == 0 {
            continue;
        }
        let (loss, mut grad) = match mask {
            Some(mask) => masked_mse_loss(&pred, &window.target, mask)?,
            None => mse_loss(&pred, &window.target)?,
        };
        let share = *n as f64 / total as f64;
        batch_loss += loss * share;
        grad.scale(share);
        backward(&state.params, &cache, &grad, grads)?;
    }
    if !batch_loss.is_finite() {
        return Err(NnError::NonFinite("training loss".into()).into());
    }
    let mut g = grads.tensors_mut();
    let mut active_grads: Vec<&mut Tensor> = Vec::with_capacity(active.len());
    for (i, t) in g.iter_mut().enumerate() {
        if active.binary_search(&i).is_ok() {
            active_grads.push(t);
        }
    }
    clip_by_global_norm(&mut active_grads, state.config.clip_norm)?;
    let grads_all = grads.tensors();
    let mut params = state.params.tensors_mut();
    let (b1, b2, eps) = (state.adam.beta1, state.adam.beta2, state.adam.epsilon);
    for &i in &active {
        adam_update(params[i], grads_all[i], &mut state.adam.slots[i], state.config.lr, b1, b2, eps)?;
    }
    Ok(batch_loss)
}

/// Length-weighted mean loss over `windows` in inference mode: the mean over
/// every supervised cell of the split.
pub fn evaluate(params: &StyleNetParams, genre: &GenreLabel, windows: &[Window], masked: bool) -> Result<f64, ModelError> {
    if windows.is_empty() {
        return Err(ModelError::EmptySplit(genre.to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut sum, mut count) = (0.0, 0usize);
    for w in windows {
        let (pred, _) = forward(params, genre, &w.input, 1.0, &mut rng, false)?;
        let (mask, n) = window_weight(w, masked);
        if n == 0 {
            continue;
        }
        let loss = match mask {
            Some(mask) => masked_mse_loss(&pred, &w.target, &mask)?.0,
            None => mse_loss(&pred, &w.target)?.0,
        };
        sum += loss * n as f64;
        count += n;
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Drives epochs over a loaded dataset.
pub struct Trainer {
    state: Checkpoint,
    data: BTreeMap<GenreLabel, GenreData>,
    grads: StyleNetParams,
}

impl Trainer {
    pub fn new(state: Checkpoint, data: BTreeMap<GenreLabel, GenreData>) -> Result<Self, ModelError> {
        state.config.validate()?;
        let model_genres = state.params.genres();
        let data_genres: Vec<GenreLabel> = data.keys().cloned().collect();
        if model_genres != data_genres {
            return Err(ModelError::Config(format!(
                "model genres {model_genres:?} do not match dataset genres {data_genres:?}"
            )));
        }
        if let Some((g, _)) = data.iter().find(|(_, d)| d.train.is_empty()) {
            return Err(ModelError::NoTrainingData(g.to_string()));
        }
        let grads = state.params.zeros_like();
        Ok(Self { state, data, grads })
    }

    pub fn state(&self) -> &Checkpoint {
        &self.state
    }

    pub fn into_state(self) -> Checkpoint {
        self.state
    }

    pub fn data(&self) -> &BTreeMap<GenreLabel, GenreData> {
        &self.data
    }

    /// One epoch: each genre's training windows are shuffled and batched, then
    /// steps alternate strictly between genres in label order until the genre
    /// with the most batches has used all of them; smaller genres wrap around.
    /// Training and validation losses are logged at the end.
    pub fn run_epoch(&mut self) -> Result<Vec<LossRecord>, ModelError> {
        let batch_size = self.state.config.batch_size;
        let mut batches: Vec<(GenreLabel, Vec<Vec<usize>>)> = Vec::new();
        for (genre, data) in &self.data {
            let mut order: Vec<usize> = (0..data.train.len()).collect();
            order.shuffle(&mut self.state.rng);
            batches.push((genre.clone(), order.chunks(batch_size).map(<[usize]>::to_vec).collect()));
        }
        let rounds = batches.iter().map(|(_, b)| b.len()).max().unwrap_or(0);
        for round in 0..rounds {
            for (genre, genre_batches) in &batches {
                let windows = &self.data[genre].train;
                let batch: Vec<&Window> = genre_batches[round % genre_batches.len()].iter().map(|&i| &windows[i]).collect();
                optimizer_step(&mut self.state, &mut self.grads, genre, &batch)?;
            }
        }
        self.state.epoch += 1;
        let masked = self.state.config.masked_loss;
        let mut records = Vec::new();
        for (genre, data) in &self.data {
            let train_loss = evaluate(&self.state.params, genre, &data.train, masked)?;
            let val_loss = if data.validation.is_empty() {
                None
            } else {
                Some(evaluate(&self.state.params, genre, &data.validation, masked)?)
            };
            if !train_loss.is_finite() || val_loss.is_some_and(|v| !v.is_finite()) {
                return Err(NnError::NonFinite("epoch loss".into()).into());
            }
            records.push(LossRecord { epoch: self.state.epoch, genre: genre.clone(), train_loss, val_loss });
        }
        self.state.history.extend(records.iter().cloned());
        Ok(records)
    }

    /// Runs epochs until `config.epochs` are complete. `on_epoch` sees the
    /// state after every epoch. A numerical failure returns
    /// [`ModelError::Diverged`] carrying the state from the end of the last
    /// good epoch.
    pub fn run<F>(&mut self, mut on_epoch: F) -> Result<(), ModelError>
    where
        F: FnMut(&Checkpoint) -> Result<(), ModelError>,
    {
        while self.state.epoch < self.state.config.epochs {
            let last_good = self.state.clone();
            match self.run_epoch() {
                Ok(_) => on_epoch(&self.state)?,
                Err(ModelError::Nn(e @ NnError::NonFinite(_))) => {
                    log::error!("training diverged in epoch {}: {e}", last_good.epoch + 1);
                    self.state = last_good.clone();
                    return Err(ModelError::Diverged { epoch: last_good.epoch + 1, last_good: Box::new(last_good) });
                }
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }
}

/// Loads the manifest's training data and trains a fresh model to completion.
pub fn train(manifest: &DatasetManifest, config: TrainConfig) -> Result<Checkpoint, ModelError> {
    let data = load_dataset(manifest, config.window)?;
    let genres: Vec<GenreLabel> = data.keys().cloned().collect();
    let mut trainer = Trainer::new(Checkpoint::fresh(config, &genres)?, data)?;
    trainer.run(|_| Ok(()))?;
    Ok(trainer.into_state())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_windows;
    use crate::roll::{PianoRoll, VelocityRoll};

    fn tiny_config() -> TrainConfig {
        TrainConfig { interp_hidden: 3, genre_hidden: 4, window: 8, batch_size: 2, epochs: 3, ..Default::default() }
    }

    fn toy_data(seed: u64, silent_targets: bool) -> BTreeMap<GenreLabel, GenreData> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = BTreeMap::new();
        for g in [GenreLabel::classical(), GenreLabel::jazz()] {
            let steps = 20;
            let mut roll = Tensor::zeros(&[steps, 176]);
            let mut vel = Tensor::zeros(&[steps, 88]);
            for t in 0..steps {
                let k = rng.gen_range(30..60);
                roll.set(t, 2 * k, 1.0);
                roll.set(t, 2 * k + 1, 1.0);
                if !silent_targets {
                    vel.set(t, k, rng.gen_range(0.2..0.9));
                }
            }
            let windows = make_windows(&PianoRoll { data: roll }, &VelocityRoll { data: vel }, 8).unwrap();
            out.insert(g, GenreData { train: windows.clone(), validation: windows[..1].to_vec() });
        }
        out
    }

    #[test]
    fn deterministic_logs() {
        let run = || {
            let mut t = Trainer::new(Checkpoint::fresh(tiny_config(), &[GenreLabel::classical(), GenreLabel::jazz()]).unwrap(), toy_data(1, false)).unwrap();
            t.run(|_| Ok(())).unwrap();
            t.into_state()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.history.len(), 6);
        assert_eq!(loss_csv(&a.history), loss_csv(&b.history));
        assert_eq!(a, b);
    }

    #[test]
    fn zero_targets_zero_head_start_at_zero_loss() {
        let genres = [GenreLabel::classical(), GenreLabel::jazz()];
        let mut ck = Checkpoint::fresh(tiny_config(), &genres).unwrap();
        for b in ck.params.branches.values_mut() {
            b.head.tensors_mut().into_iter().for_each(Tensor::fill_zero);
        }
        let data = toy_data(2, true);
        for (g, d) in &data {
            assert_eq!(evaluate(&ck.params, g, &d.train, false).unwrap(), 0.0);
        }
    }

    #[test]
    fn zero_lr_keeps_losses_constant() {
        let genres = [GenreLabel::classical(), GenreLabel::jazz()];
        let config = TrainConfig { lr: 0.0, ..tiny_config() };
        let mut t = Trainer::new(Checkpoint::fresh(config, &genres).unwrap(), toy_data(3, false)).unwrap();
        t.run(|_| Ok(())).unwrap();
        let h = &t.state().history;
        for r in &h[2..] {
            let first = h.iter().find(|f| f.genre == r.genre).unwrap();
            assert_eq!(r.train_loss, first.train_loss);
            assert_eq!(r.val_loss, first.val_loss);
        }
    }

    #[test]
    fn evaluate_is_duplication_invariant_and_rejects_empty() {
        let ck = Checkpoint::fresh(tiny_config(), &[GenreLabel::jazz()]).unwrap();
        let data = toy_data(4, false);
        let windows: Vec<Window> = data[&GenreLabel::jazz()].train[..2].to_vec();
        let doubled: Vec<Window> = windows.iter().chain(&windows).cloned().collect();
        let a = evaluate(&ck.params, &GenreLabel::jazz(), &windows, false).unwrap();
        let b = evaluate(&ck.params, &GenreLabel::jazz(), &doubled, false).unwrap();
        assert!((a - b).abs() <= 1e-15 * a.abs());
        assert!(matches!(evaluate(&ck.params, &GenreLabel::jazz(), &[], false), Err(ModelError::EmptySplit(_))));
    }

    #[test]
    fn untrained_zero_params_loss_is_mean_square_target() {
        let mut ck = Checkpoint::fresh(tiny_config(), &[GenreLabel::jazz()]).unwrap();
        ck.params = ck.params.zeros_like();
        let data = toy_data(5, false);
        let w = &data[&GenreLabel::jazz()].train;
        let ms: f64 = w.iter().flat_map(|w| w.target.data()).map(|v| v * v).sum::<f64>()
            / w.iter().map(|w| w.target.len()).sum::<usize>() as f64;
        let loss = evaluate(&ck.params, &GenreLabel::jazz(), w, false).unwrap();
        assert!((loss - ms).abs() < 1e-15);
    }

    #[test]
    fn masked_loss_trains() {
        let genres = [GenreLabel::classical(), GenreLabel::jazz()];
        let config = TrainConfig { masked_loss: true, ..tiny_config() };
        let mut t = Trainer::new(Checkpoint::fresh(config, &genres).unwrap(), toy_data(6, false)).unwrap();
        t.run(|_| Ok(())).unwrap();
        assert!(t.state().history.iter().all(|r| r.train_loss.is_finite()));
    }

    #[test]
    fn divergence_returns_last_good_state() {
        let genres = [GenreLabel::classical(), GenreLabel::jazz()];
        let mut ck = Checkpoint::fresh(tiny_config(), &genres).unwrap();
        ck.config.epochs = 2;
        let mut t = Trainer::new(ck, toy_data(7, false)).unwrap();
        t.run_epoch().unwrap();
        t.state.config.epochs = 3;
        let before = t.state().clone();
        t.state.params.branches.get_mut(&GenreLabel::jazz()).unwrap().head.bias.data_mut()[0] = f64::NAN;
        let err = t.run(|_| Ok(())).unwrap_err();
        match err {
            ModelError::Diverged { epoch, last_good } => {
                assert_eq!(epoch, 2);
                assert_eq!(last_good.epoch, before.epoch);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn csv_format() {
        let rows = vec![
            LossRecord { epoch: 1, genre: GenreLabel::classical(), train_loss: 0.5, val_loss: Some(0.25) },
            LossRecord { epoch: 1, genre: GenreLabel::jazz(), train_loss: 0.125, val_loss: None },
        ];
        assert_eq!(loss_csv(&rows), "epoch,genre,train_loss,val_loss\n1,classical,0.5,0.25\n1,jazz,0.125,\n");
    }
}
