use serde::{Deserialize, Serialize};

use super::{ModelDims, ModelError, DEFAULT_GENRE_HIDDEN, DEFAULT_INTERP_HIDDEN};

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    /// Probability of keeping a unit in dropout.
    pub keep_prob: f64,
    /// Global gradient norm ceiling.
    pub clip_norm: f64,
    /// Truncated-BPTT window length in sixteenth-note steps.
    pub window: usize,
    pub epochs: usize,
    /// Windows per optimizer step.
    pub batch_size: usize,
    pub interp_hidden: usize,
    pub genre_hidden: usize,
    pub seed: u64,
    /// Epochs between checkpoint writes.
    pub checkpoint_every: usize,
    /// Supervise only cells where a note sounds instead of the full matrix.
    pub masked_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            keep_prob: 0.8,
            clip_norm: 10.0,
            window: 200,
            epochs: 160,
            batch_size: 4,
            interp_hidden: DEFAULT_INTERP_HIDDEN,
            genre_hidden: DEFAULT_GENRE_HIDDEN,
            seed: 0,
            checkpoint_every: 1,
            masked_loss: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail(format!("lr {} must be a non-negative number", self.lr));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return fail(format!("keep_prob {} must lie in (0, 1]", self.keep_prob));
        }
        if !(self.clip_norm > 0.0) {
            return fail(format!("clip_norm {} must be positive", self.clip_norm));
        }
        for (name, v) in [
            ("window", self.window),
            ("batch_size", self.batch_size),
            ("interp_hidden", self.interp_hidden),
            ("genre_hidden", self.genre_hidden),
            ("checkpoint_every", self.checkpoint_every),
        ] {
            if v == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims::new(self.interp_hidden, self.genre_hidden)
    }
}
