use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{forward, make_windows, ModelError, StyleNetParams};
use crate::corpus::GenreLabel;
use crate::midi::{apply_velocities, extract_notes, MidiFile};
use crate::nn::Tensor;
use crate::roll::{decode_velocities, encode, GridSpec, VelocityRoll, NUM_KEYS};

/// Predicted velocity matrix for a whole score: the score is cut into
/// independent windows, each run in inference mode, and the outputs stacked.
pub fn predict_roll(
    params: &StyleNetParams,
    input: &Tensor,
    genre: &GenreLabel,
    window: usize,
) -> Result<VelocityRoll, ModelError> {
    if !params.branches.contains_key(genre) {
        return Err(ModelError::unknown_genre(genre, params));
    }
    let steps = input.rows();
    let placeholder = VelocityRoll { data: Tensor::zeros(&[steps, NUM_KEYS]) };
    let windows = make_windows(&crate::roll::PianoRoll { data: input.clone() }, &placeholder, window)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let parts = windows
        .iter()
        .map(|w| forward(params, genre, &w.input, 1.0, &mut rng, false).map(|(y, _)| y))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VelocityRoll { data: Tensor::concat_rows(&parts, NUM_KEYS)? })
}

/// Renders a performance of `file` in the style of `genre`: every note keeps
/// its timing and pitch and receives the predicted velocity at its onset,
/// clamped to `[1, 127]`.
pub fn predict_performance(
    params: &StyleNetParams,
    file: &MidiFile,
    genre: &GenreLabel,
    window: usize,
) -> Result<MidiFile, ModelError> {
    if !params.branches.contains_key(genre) {
        return Err(ModelError::unknown_genre(genre, params));
    }
    let notes = extract_notes(file);
    let grid = GridSpec::new(file.division);
    let encoded = encode(&notes.spans, &grid);
    if encoded.roll.steps() == 0 {
        return Ok(file.clone());
    }
    let predicted = predict_roll(params, &encoded.roll.data, genre, window)?;
    let velocities = decode_velocities(&encoded.roll, &predicted, &notes.spans, &grid)?;
    Ok(apply_velocities(file, &notes.spans, &velocities)?)
}
