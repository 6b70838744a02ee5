use std::collections::{HashMap, VecDeque};

use super::{EventKind, MidiError, MidiFile, Result};

/// Location of an event inside a [`MidiFile`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventRef {
    pub track: usize,
    pub index: usize,
}

/// A sounding note: the interval between a NoteOn and the NoteOff that closes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoteSpan {
    pub pitch: u8,
    pub onset_tick: u64,
    /// Always at least 1.
    pub duration_ticks: u64,
    /// Always at least 1.
    pub velocity: u8,
    pub channel: u8,
    /// The NoteOn event this span was extracted from.
    pub source: EventRef,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedNotes {
    pub spans: Vec<NoteSpan>,
    pub division: u16,
    /// NoteOffs that found no open note of their pitch and channel.
    pub dangling_note_offs: usize,
}

/// Pairs NoteOns with NoteOffs.
///
/// Tracks are merged by absolute tick. Overlapping notes of the same pitch and
/// channel are closed first-in first-out. A NoteOn with velocity 0 is a NoteOff.
/// Notes still open at the end are closed at the file's final tick. Sustain
/// pedal is not interpreted.
pub fn extract_notes(file: &MidiFile) -> ExtractedNotes {
    let mut timeline = Vec::new();
    for (track, events) in file.tracks.iter().enumerate() {
        let mut tick = 0u64;
        for (index, e) in events.iter().enumerate() {
            tick += e.delta_ticks as u64;
            timeline.push((tick, EventRef { track, index }));
        }
    }
    // stable: ties keep (track, index) order
    timeline.sort_by_key(|&(tick, r)| (tick, r));
    let final_tick = timeline.last().map_or(0, |&(t, _)| t);

    let mut open: HashMap<(u8, u8), VecDeque<(u64, u8, EventRef)>> = HashMap::new();
    let mut spans = Vec::new();
    let mut dangling = 0;
    let close = |spans: &mut Vec<NoteSpan>, ch: u8, pitch: u8, start: (u64, u8, EventRef), end: u64| {
        let (onset_tick, velocity, source) = start;
        spans.push(NoteSpan {
            pitch,
            onset_tick,
            duration_ticks: end.saturating_sub(onset_tick).max(1),
            velocity,
            channel: ch,
            source,
        });
    };

    for &(tick, r) in &timeline {
        match file.tracks[r.track][r.index].kind {
            EventKind::NoteOn { channel, pitch, velocity } if velocity > 0 => {
                open.entry((channel, pitch)).or_default().push_back((tick, velocity, r));
            }
            EventKind::NoteOn { channel, pitch, .. } | EventKind::NoteOff { channel, pitch, .. } => {
                match open.get_mut(&(channel, pitch)).and_then(VecDeque::pop_front) {
                    Some(start) => close(&mut spans, channel, pitch, start, tick),
                    None => dangling += 1,
                }
            }
            _ => {}
        }
    }
    let mut leftover: Vec<_> = open.into_iter().collect();
    leftover.sort_by_key(|&(key, _)| key);
    for ((channel, pitch), queue) in leftover {
        for start in queue {
            close(&mut spans, channel, pitch, start, final_tick);
        }
    }
    if dangling > 0 {
        log::warn!("ignored {dangling} NoteOff events with no open note");
    }
    spans.sort_by_key(|s| (s.onset_tick, s.pitch, s.source));
    ExtractedNotes { spans, division: file.division, dangling_note_offs: dangling }
}

/// Replaces the NoteOn velocity of each span's source event. Nothing else in
/// the file changes.
pub fn apply_velocities(file: &MidiFile, spans: &[NoteSpan], velocities: &[u8]) -> Result<MidiFile> {
    if spans.len() != velocities.len() {
        return Err(MidiError::SpanMismatch(format!(
            "{} spans but {} velocities",
            spans.len(),
            velocities.len()
        )));
    }
    let mut out = file.clone();
    for (span, &new_velocity) in spans.iter().zip(velocities) {
        if !(1..=127).contains(&new_velocity) {
            return Err(MidiError::FieldOutOfRange(format!("velocity {new_velocity}")));
        }
        let event = out
            .tracks
            .get_mut(span.source.track)
            .and_then(|t| t.get_mut(span.source.index))
            .ok_or_else(|| MidiError::SpanMismatch(format!("no event at {:?}", span.source)))?;
        match &mut event.kind {
            EventKind::NoteOn { channel, pitch, velocity }
                if *channel == span.channel && *pitch == span.pitch && *velocity > 0 =>
            {
                *velocity = new_velocity;
            }
            other => {
                return Err(MidiError::SpanMismatch(format!(
                    "event at {:?} is {other:?}, not a NoteOn for pitch {}",
                    span.source, span.pitch
                )))
            }
        }
    }
    Ok(out)
}
