//! Quantized piano-roll input and normalized velocity target matrices.
//!
//! One step is a sixteenth note. Each of the 88 piano keys (MIDI 21–108)
//! contributes two input bits per step, `(played, held)`: an onset is
//! `[1, 1]`, a sustained note `[0, 1]` and silence `[0, 0]`. The target
//! matrix carries `velocity / 127` at onset cells and zero everywhere else.

use std::fmt::Write as _;

use thiserror::Error;

use crate::midi::NoteSpan;
use crate::nn::Tensor;

pub const NUM_KEYS: usize = 88;
pub const LOWEST_PITCH: u8 = 21;
pub const INPUT_WIDTH: usize = 2 * NUM_KEYS;
pub const STEPS_PER_QUARTER: u64 = 4;
pub const MAX_VELOCITY: f64 = 127.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RollError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("span at step {step} lies outside a roll of {steps} steps")]
    SpanOutsideRoll { step: usize, steps: usize },
}

/// Sixteenth-note grid for a file with `division` ticks per quarter note.
/// A step is `division / 4` ticks, kept as an exact ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub division: u16,
    pub steps_per_quarter: u64,
    pub num_keys: usize,
    pub lowest_pitch: u8,
}

impl GridSpec {
    pub fn new(division: u16) -> Self {
        assert!(division > 0, "division must be positive");
        Self { division, steps_per_quarter: STEPS_PER_QUARTER, num_keys: NUM_KEYS, lowest_pitch: LOWEST_PITCH }
    }

    pub fn ticks_per_step(&self) -> f64 {
        self.division as f64 / self.steps_per_quarter as f64
    }

    /// `ticks / ticks_per_step` rounded to nearest, ties toward +∞, in exact integer arithmetic.
    pub fn ticks_to_steps(&self, ticks: u64) -> usize {
        let num = 2 * ticks as u128 * self.steps_per_quarter as u128 + self.division as u128;
        (num / (2 * self.division as u128)) as usize
    }

    /// Key index of a pitch, or `None` outside the piano range.
    pub fn key_index(&self, pitch: u8) -> Option<usize> {
        let k = (pitch as usize).checked_sub(self.lowest_pitch as usize)?;
        (k < self.num_keys).then_some(k)
    }
}

/// `(onset_step, duration_steps)`; the duration is at least one step.
pub fn quantize_span(span: &NoteSpan, grid: &GridSpec) -> (usize, usize) {
    (grid.ticks_to_steps(span.onset_tick), grid.ticks_to_steps(span.duration_ticks).max(1))
}

/// `T × 176` binary note-state matrix; key `k` owns columns `2k` (played) and `2k+1` (held).
#[derive(Debug, Clone, PartialEq)]
pub struct PianoRoll {
    pub data: Tensor,
}

/// `T × 88` velocities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityRoll {
    pub data: Tensor,
}

impl PianoRoll {
    pub fn steps(&self) -> usize {
        self.data.rows()
    }

    pub fn played(&self, step: usize, key: usize) -> bool {
        self.data.get(step, 2 * key) != 0.0
    }

    pub fn held(&self, step: usize, key: usize) -> bool {
        self.data.get(step, 2 * key + 1) != 0.0
    }

    /// `T × 88` indicator of keys sounding (held) at each step.
    pub fn sounding_mask(&self) -> Tensor {
        sounding_mask(&self.data)
    }

    pub fn to_csv(&self) -> String {
        matrix_csv(&self.data)
    }
}

impl VelocityRoll {
    pub fn steps(&self) -> usize {
        self.data.rows()
    }

    pub fn to_csv(&self) -> String {
        matrix_csv(&self.data)
    }
}

/// `T × 88` held-bit indicator of a `T × 176` input matrix.
pub fn sounding_mask(input: &Tensor) -> Tensor {
    let steps = input.rows();
    let mut mask = Tensor::zeros(&[steps, NUM_KEYS]);
    for t in 0..steps {
        let row = input.row(t);
        for (k, m) in mask.row_mut(t).iter_mut().enumerate() {
            *m = row[2 * k + 1];
        }
    }
    mask
}

/// One line per step, comma separated.
pub fn matrix_csv(m: &Tensor) -> String {
    let mut out = String::new();
    for t in 0..m.rows() {
        for (i, v) in m.row(t).iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedScore {
    pub roll: PianoRoll,
    pub velocities: VelocityRoll,
    /// Spans outside the 88-key range, left out of both matrices.
    pub dropped: usize,
}

/// Builds the input and target matrices. The number of steps is the latest
/// quantized note end. A re-struck key shows `[1, 1]` again at the new onset;
/// when two spans share a key and onset step, the later one sets the velocity.
pub fn encode(spans: &[NoteSpan], grid: &GridSpec) -> EncodedScore {
    let mut placed = Vec::with_capacity(spans.len());
    let mut dropped = 0;
    for span in spans {
        match grid.key_index(span.pitch) {
            Some(key) => {
                let (onset, duration) = quantize_span(span, grid);
                placed.push((key, onset, duration, span.velocity));
            }
            None => dropped += 1,
        }
    }
    let steps = placed.iter().map(|&(_, on, dur, _)| on + dur).max().unwrap_or(0);
    let mut roll = Tensor::zeros(&[steps, INPUT_WIDTH]);
    let mut vel = Tensor::zeros(&[steps, NUM_KEYS]);
    for &(key, onset, duration, velocity) in &placed {
        roll.set(onset, 2 * key, 1.0);
        for t in onset..onset + duration {
            roll.set(t, 2 * key + 1, 1.0);
        }
        vel.set(onset, key, velocity as f64 / MAX_VELOCITY);
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} notes outside the piano range");
    }
    EncodedScore { roll: PianoRoll { data: roll }, velocities: VelocityRoll { data: vel }, dropped }
}

/// Reverses the normalization: `round(v · 127)` clamped to `[1, 127]`.
pub fn denormalize_velocity(v: f64) -> u8 {
    if v.is_nan() {
        return 1;
    }
    (v * MAX_VELOCITY).round().clamp(1.0, MAX_VELOCITY) as u8
}

/// Reads each span's velocity from its onset cell. Spans outside the piano
/// range keep their original velocity.
pub fn decode_velocities(
    roll: &PianoRoll,
    velocities: &VelocityRoll,
    spans: &[NoteSpan],
    grid: &GridSpec,
) -> Result<Vec<u8>, RollError> {
    let steps = roll.steps();
    if roll.data.cols() != INPUT_WIDTH || velocities.data.cols() != NUM_KEYS || velocities.steps() != steps {
        return Err(RollError::Dimension(format!(
            "roll {:?} vs velocities {:?}",
            roll.data.shape(),
            velocities.data.shape()
        )));
    }
    spans
        .iter()
        .map(|span| match grid.key_index(span.pitch) {
            None => Ok(span.velocity),
            Some(key) => {
                let (onset, _) = quantize_span(span, grid);
                if onset >= steps {
                    return Err(RollError::SpanOutsideRoll { step: onset, steps });
                }
                Ok(denormalize_velocity(velocities.data.get(onset, key)))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::EventRef;

    fn span(pitch: u8, onset: u64, dur: u64, velocity: u8) -> NoteSpan {
        NoteSpan { pitch, onset_tick: onset, duration_ticks: dur, velocity, channel: 0, source: EventRef { track: 0, index: 0 } }
    }

    #[test]
    fn quantize_examples() {
        let g = GridSpec::new(480);
        assert_eq!(g.ticks_per_step(), 120.0);
        assert_eq!(quantize_span(&span(60, 240, 480, 1), &g), (2, 4));
        assert_eq!(quantize_span(&span(60, 0, 1, 1), &g), (0, 1));
        assert_eq!(quantize_span(&span(60, 179, 120, 1), &g), (1, 1));
        // exact half step rounds up
        assert_eq!(quantize_span(&span(60, 60, 180, 1), &g), (1, 2));
        // division not divisible by 4: 3 ticks/quarter, step = 0.75 ticks
        let g = GridSpec::new(3);
        assert_eq!(g.ticks_to_steps(3), 4);
        assert_eq!(g.ticks_to_steps(300), 400);
    }

    #[test]
    fn encode_single_note() {
        let g = GridSpec::new(480);
        let e = encode(&[span(60, 0, 240, 127)], &g);
        assert_eq!(e.roll.data.shape(), &[2, 176]);
        assert_eq!(e.velocities.data.shape(), &[2, 88]);
        assert_eq!(e.roll.data.get(0, 78), 1.0);
        assert_eq!(e.roll.data.get(0, 79), 1.0);
        assert_eq!(e.roll.data.get(1, 78), 0.0);
        assert_eq!(e.roll.data.get(1, 79), 1.0);
        assert_eq!(e.velocities.data.get(0, 39), 1.0);
        assert_eq!(e.velocities.data.get(1, 39), 0.0);
        assert_eq!(e.roll.data.data().iter().sum::<f64>(), 3.0);
    }

    #[test]
    fn velocity_one_normalizes() {
        let e = encode(&[span(21, 0, 120, 1)], &GridSpec::new(480));
        assert_eq!(e.velocities.data.get(0, 0), 1.0 / 127.0);
        assert!((e.velocities.data.get(0, 0) - 0.007874).abs() < 1e-6);
    }

    #[test]
    fn restrike_and_collision() {
        let g = GridSpec::new(4);
        let e = encode(&[span(60, 0, 4, 50), span(60, 2, 2, 90)], &g);
        let played: Vec<bool> = (0..4).map(|t| e.roll.played(t, 39)).collect();
        assert_eq!(played, [true, false, true, false]);
        assert!((0..4).all(|t| e.roll.held(t, 39)));
        // continuation of an earlier span never erases a later onset
        let e = encode(&[span(60, 2, 1, 90), span(60, 0, 4, 50)], &g);
        assert!(e.roll.played(2, 39));
        // same key and onset step: the later span sets the velocity
        let spans = [span(60, 0, 1, 10), span(60, 0, 2, 20)];
        let e = encode(&spans, &g);
        assert_eq!(decode_velocities(&e.roll, &e.velocities, &spans, &g).unwrap(), vec![20, 20]);
    }

    #[test]
    fn out_of_range_pitches_dropped() {
        let g = GridSpec::new(480);
        let spans = [span(20, 0, 120, 5), span(109, 0, 120, 6), span(108, 0, 120, 7)];
        let e = encode(&spans, &g);
        assert_eq!(e.dropped, 2);
        assert_eq!(decode_velocities(&e.roll, &e.velocities, &spans, &g).unwrap(), vec![5, 6, 7]);
    }

    #[test]
    fn empty_spans() {
        let e = encode(&[], &GridSpec::new(480));
        assert_eq!(e.roll.steps(), 0);
        assert_eq!(e.velocities.data.shape(), &[0, 88]);
    }

    #[test]
    fn denormalize_examples() {
        assert_eq!(denormalize_velocity(1.0), 127);
        assert_eq!(denormalize_velocity(0.0), 1);
        assert_eq!(denormalize_velocity(0.5), 64);
        assert_eq!(denormalize_velocity(-3.0), 1);
        assert_eq!(denormalize_velocity(9.0), 127);
        assert_eq!(denormalize_velocity(f64::NAN), 1);
        for v in 1..=127u8 {
            assert_eq!(denormalize_velocity(v as f64 / 127.0), v);
        }
    }

    #[test]
    fn decode_dimension_mismatch() {
        let g = GridSpec::new(480);
        let spans = [span(60, 0, 240, 100)];
        let e = encode(&spans, &g);
        let short = VelocityRoll { data: Tensor::zeros(&[1, 88]) };
        assert!(matches!(decode_velocities(&e.roll, &short, &spans, &g), Err(RollError::Dimension(_))));
        let late = [span(60, 4800, 240, 100)];
        assert!(matches!(
            decode_velocities(&e.roll, &e.velocities, &late, &g),
            Err(RollError::SpanOutsideRoll { .. })
        ));
    }

    #[test]
    fn csv_rows_match_steps() {
        let e = encode(&[span(60, 0, 480, 64)], &GridSpec::new(480));
        let csv = e.roll.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert_eq!(csv.lines().next().unwrap().split(',').count(), 176);
        assert_eq!(e.velocities.to_csv().lines().count(), 4);
    }
}
