//! Deterministic synthetic piano files for demos and tests.
//!
//! [`performance`] writes a two-hand piece whose velocities follow a phrase
//! curve with downbeat accents and per-note jitter, loosely imitating a
//! performed recording. [`score_with_velocities`] writes one note per
//! sixteenth with exactly the velocities given.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::midi::{EventKind, MidiEvent, MidiFile};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub seed: u64,
    pub division: u16,
    pub bars: usize,
    /// Written as a time signature event when `Some((numerator, denominator_power))`.
    pub time_signature: Option<(u8, u8)>,
    /// Maximum onset displacement in ticks, imitating unquantized playing.
    pub timing_jitter: u16,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self { seed: 0, division: 480, bars: 8, time_signature: Some((4, 2)), timing_jitter: 0 }
    }
}

const SCALE: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];

/// A two-hand piece: a stepwise melody in sixteenths and eighths over a bass
/// line on every beat, in C major.
pub fn performance(opts: &SynthOptions) -> MidiFile {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let step = (opts.division / 4).max(1) as u64;
    let steps_per_bar = 16u64;
    let total_steps = steps_per_bar * opts.bars as u64;
    let phrase_steps = (steps_per_bar * 4) as f64;
    let base = rng.gen_range(50.0..75.0);
    let swing = rng.gen_range(15.0..30.0);

    // (onset_tick, end_tick, pitch, velocity)
    let mut notes: Vec<(u64, u64, u8, u8)> = Vec::new();
    let mut degree: i32 = rng.gen_range(7..14);
    let mut t = 0u64;
    while t < total_steps {
        let len = if rng.gen_bool(0.6) { 2 } else { 1 };
        degree = (degree + rng.gen_range(-2..=2)).clamp(4, 20);
        let pitch = 48 + 12 * (degree / 7) as u8 + SCALE[(degree % 7) as usize];
        let phase = (t as f64 / phrase_steps) * std::f64::consts::TAU;
        let accent = if t % steps_per_bar == 0 { 12.0 } else if t % 4 == 0 { 5.0 } else { 0.0 };
        let v = base + swing * phase.sin() + accent + rng.gen_range(-4.0..4.0);
        notes.push((t * step, (t + len) * step, pitch, v.round().clamp(1.0, 127.0) as u8));
        t += len;
    }
    for beat in (0..total_steps).step_by(4) {
        let root = [36u8, 41, 43, 38][((beat / steps_per_bar) % 4) as usize];
        let pitch = if beat % 8 == 0 { root } else { root + 7 };
        let phase = (beat as f64 / phrase_steps) * std::f64::consts::TAU;
        let v = base - 12.0 + 0.6 * swing * phase.sin() + rng.gen_range(-3.0..3.0);
        notes.push((beat * step, (beat + 4) * step, pitch, v.round().clamp(1.0, 127.0) as u8));
    }
    if opts.timing_jitter > 0 {
        let j = opts.timing_jitter as i64;
        for n in &mut notes {
            let shift = rng.gen_range(-j..=j);
            n.0 = (n.0 as i64 + shift).max(0) as u64;
            n.1 = n.1.max(n.0 + 1);
        }
    }
    build(opts, notes)
}

/// One note per sixteenth step with the given velocities, cycling pitches
/// upward from middle C.
pub fn score_with_velocities(opts: &SynthOptions, velocities: &[u8]) -> MidiFile {
    let step = (opts.division / 4).max(1) as u64;
    let notes = velocities
        .iter()
        .enumerate()
        .map(|(i, &v)| (i as u64 * step, (i as u64 + 1) * step, 60 + (i % 24) as u8, v))
        .collect();
    build(opts, notes)
}

fn build(opts: &SynthOptions, notes: Vec<(u64, u64, u8, u8)>) -> MidiFile {
    // (tick, order, kind): offs sort before ons at the same tick
    let mut timed: Vec<(u64, u8, EventKind)> = Vec::new();
    for (on, off, pitch, velocity) in notes {
        timed.push((on, 1, EventKind::NoteOn { channel: 0, pitch, velocity }));
        timed.push((off, 0, EventKind::NoteOff { channel: 0, pitch, velocity: 64 }));
    }
    timed.sort_by_key(|(tick, order, kind)| {
        let pitch = match kind {
            EventKind::NoteOn { pitch, .. } | EventKind::NoteOff { pitch, .. } => *pitch,
            _ => 0,
        };
        (*tick, *order, pitch)
    });
    let mut events = vec![MidiEvent::new(0, EventKind::Tempo { usec_per_quarter: 500_000 })];
    if let Some((n, d)) = opts.time_signature {
        events.push(MidiEvent::time_signature(0, n, d));
    }
    let mut last = 0;
    for (tick, _, kind) in timed {
        events.push(MidiEvent::new((tick - last) as u32, kind));
        last = tick;
    }
    MidiFile::format0(opts.division, events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::{extract_notes, parse_midi, write_midi};

    #[test]
    fn performance_is_deterministic_and_valid() {
        let opts = SynthOptions { seed: 5, timing_jitter: 7, ..Default::default() };
        let a = performance(&opts);
        assert_eq!(a, performance(&opts));
        let bytes = write_midi(&a).unwrap();
        assert_eq!(parse_midi(&bytes).unwrap(), a);
        let spans = extract_notes(&a).spans;
        assert!(spans.len() > 100);
        let distinct: std::collections::BTreeSet<u8> = spans.iter().map(|s| s.velocity).collect();
        assert!(distinct.len() >= 20, "{}", distinct.len());
    }

    #[test]
    fn exact_velocities() {
        let f = score_with_velocities(&SynthOptions::default(), &[10, 20, 30]);
        let v: Vec<u8> = extract_notes(&f).spans.iter().map(|s| s.velocity).collect();
        assert_eq!(v, vec![10, 20, 30]);
    }
}
