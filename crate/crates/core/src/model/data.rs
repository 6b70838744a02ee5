use std::collections::BTreeMap;
use std::path::Path;

use super::ModelError;
use crate::corpus::{DatasetManifest, GenreLabel, Split};
use crate::midi::{extract_notes, parse_midi, MidiFile};
use crate::nn::Tensor;
use crate::roll::{encode, EncodedScore, GridSpec, PianoRoll, VelocityRoll};

/// An aligned slice of input and target rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub input: Tensor,
    pub target: Tensor,
}

impl Window {
    pub fn steps(&self) -> usize {
        self.input.rows()
    }
}

/// Cuts consecutive non-overlapping windows of `window` steps; the last one
/// may be shorter. No state is carried from one window to the next.
pub fn make_windows(roll: &PianoRoll, velocities: &VelocityRoll, window: usize) -> Result<Vec<Window>, ModelError> {
    if roll.steps() != velocities.steps() {
        return Err(ModelError::Config(format!(
            "roll has {} steps but velocities have {}",
            roll.steps(),
            velocities.steps()
        )));
    }
    if window == 0 {
        return Err(ModelError::Config("window must be at least 1".into()));
    }
    let steps = roll.steps();
    Ok((0..steps)
        .step_by(window)
        .map(|start| {
            let end = (start + window).min(steps);
            Window { input: roll.data.slice_rows(start, end), target: velocities.data.slice_rows(start, end) }
        })
        .collect())
}

pub fn encode_file(file: &MidiFile) -> EncodedScore {
    encode(&extract_notes(file).spans, &GridSpec::new(file.division))
}

pub fn load_midi(path: &Path) -> Result<MidiFile, ModelError> {
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io { path: path.into(), source })?;
    Ok(parse_midi(&bytes)?)
}

/// Training and validation windows of one genre.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenreData {
    pub train: Vec<Window>,
    pub validation: Vec<Window>,
}

/// Loads and windows every accepted file in the manifest.
pub fn load_dataset(manifest: &DatasetManifest, window: usize) -> Result<BTreeMap<GenreLabel, GenreData>, ModelError> {
    let mut data = BTreeMap::new();
    for genre in manifest.genres() {
        let mut gd = GenreData::default();
        for (split, dest) in [(Split::Train, &mut gd.train), (Split::Validation, &mut gd.validation)] {
            for entry in manifest.files(&genre, split) {
                let enc = encode_file(&load_midi(&entry.path)?);
                dest.extend(make_windows(&enc.roll, &enc.velocities, window)?);
            }
        }
        if gd.train.is_empty() {
            return Err(ModelError::NoTrainingData(genre.to_string()));
        }
        data.insert(genre, gd);
    }
    Ok(data)
}
