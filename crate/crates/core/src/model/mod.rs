//! The StyleNet model: a shared interpretation layer feeding one
//! stacked-BiLSTM branch per genre, plus training, checkpoints and inference.

mod checkpoint;
mod config;
mod data;
mod gradcheck;
mod network;
mod params;
mod predict;
mod train;

use std::path::PathBuf;

use thiserror::Error;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::TrainConfig;
pub use data::{encode_file, load_dataset, load_midi, make_windows, GenreData, Window};
pub use gradcheck::{
    format_suite, random_window, run_gradcheck_suite, LayerResult, CHECK_GENRE_HIDDEN, CHECK_INTERP_HIDDEN,
    CHECK_STEPS,
};
pub use network::{backward, forward, ForwardCache};
pub use params::{
    GenreNetParams, ModelDims, StyleNetParams, DEFAULT_GENRE_HIDDEN, DEFAULT_INTERP_HIDDEN, GENRE_LAYERS,
};
pub use predict::{predict_performance, predict_roll};
pub use train::{evaluate, loss_csv, optimizer_step, train, Checkpoint, LossRecord, Trainer, LOSS_CSV_HEADER};

use crate::corpus::{CorpusError, GenreLabel};
use crate::midi::MidiError;
use crate::nn::NnError;
use crate::roll::RollError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown genre '{genre}' (available: {})", available.join(", "))]
    UnknownGenre { genre: String, available: Vec<String> },
    #[error("empty window")]
    EmptyWindow,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Midi(#[from] MidiError),
    #[error(transparent)]
    Roll(#[from] RollError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("empty split: {0}")]
    EmptySplit(String),
    #[error("no training data for genre '{0}'")]
    NoTrainingData(String),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize, last_good: Box<Checkpoint> },
}

impl ModelError {
    pub fn unknown_genre(genre: &GenreLabel, params: &StyleNetParams) -> Self {
        ModelError::UnknownGenre {
            genre: genre.to_string(),
            available: params.genres().iter().map(|g| g.to_string()).collect(),
        }
    }
}
