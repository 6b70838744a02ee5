//! Standard MIDI File container, byte-level codec, and note extraction.
//!
//! The reader accepts running status and preserves every event it does not
//! interpret as [`EventKind::MetaOther`] or [`EventKind::Other`]; the writer
//! always emits an explicit status byte, so `write(parse(b))` is a canonical
//! form of `b`.

mod notes;
mod reader;
mod vlq;
mod writer;

pub use notes::{apply_velocities, extract_notes, EventRef, ExtractedNotes, NoteSpan};
pub use reader::parse_midi;
pub use vlq::{vlq_decode, vlq_encode, VLQ_MAX};
pub use writer::write_midi;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MidiError {
    #[error("not a standard MIDI file: missing MThd header")]
    BadMagic,
    #[error("unsupported header: {0}")]
    BadHeader(String),
    #[error("SMPTE time division is not supported")]
    SmpteDivision,
    #[error("truncated input at byte {0}")]
    Truncated(usize),
    #[error("malformed variable-length quantity at byte {0}")]
    MalformedVlq(usize),
    #[error("data byte {byte:#04x} at offset {offset} with no running status")]
    NoRunningStatus { offset: usize, byte: u8 },
    #[error("value {0} does not fit a variable-length quantity")]
    VlqOutOfRange(u32),
    #[error("event field out of range: {0}")]
    FieldOutOfRange(String),
    #[error("track {0} must end with exactly one End-of-Track event")]
    EndOfTrack(usize),
    #[error("span/velocity mismatch: {0}")]
    SpanMismatch(String),
}

pub type Result<T> = std::result::Result<T, MidiError>;

/// Meta event type bytes the codec interprets.
pub(crate) const META_END_OF_TRACK: u8 = 0x2F;
pub(crate) const META_TEMPO: u8 = 0x51;
pub(crate) const META_TIME_SIGNATURE: u8 = 0x58;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    NoteOn { channel: u8, pitch: u8, velocity: u8 },
    NoteOff { channel: u8, pitch: u8, velocity: u8 },
    /// Microseconds per quarter note.
    Tempo { usec_per_quarter: u32 },
    /// `denominator_power` is the exponent of two: 4/4 is (4, 2).
    TimeSignature {
        numerator: u8,
        denominator_power: u8,
        clocks_per_click: u8,
        notated_32nds_per_quarter: u8,
    },
    EndOfTrack,
    MetaOther { meta_type: u8, data: Vec<u8> },
    /// Any other channel message or a SysEx message. For SysEx (`0xF0`/`0xF7`)
    /// `data` is the payload after the length prefix.
    Other { status: u8, data: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MidiEvent {
    pub delta_ticks: u32,
    pub kind: EventKind,
}

impl MidiEvent {
    pub fn new(delta_ticks: u32, kind: EventKind) -> Self {
        Self { delta_ticks, kind }
    }

    pub fn note_on(delta_ticks: u32, channel: u8, pitch: u8, velocity: u8) -> Self {
        Self::new(delta_ticks, EventKind::NoteOn { channel, pitch, velocity })
    }

    pub fn note_off(delta_ticks: u32, channel: u8, pitch: u8) -> Self {
        Self::new(delta_ticks, EventKind::NoteOff { channel, pitch, velocity: 0 })
    }

    pub fn end_of_track(delta_ticks: u32) -> Self {
        Self::new(delta_ticks, EventKind::EndOfTrack)
    }

    pub fn time_signature(delta_ticks: u32, numerator: u8, denominator_power: u8) -> Self {
        Self::new(
            delta_ticks,
            EventKind::TimeSignature {
                numerator,
                denominator_power,
                clocks_per_click: 24,
                notated_32nds_per_quarter: 8,
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MidiFile {
    pub format: u16,
    /// Ticks per quarter note.
    pub division: u16,
    pub tracks: Vec<Vec<MidiEvent>>,
}

impl MidiFile {
    /// Single-track (format 0) file. An End-of-Track event is appended if the
    /// track does not already end with one.
    pub fn format0(division: u16, mut events: Vec<MidiEvent>) -> Self {
        if !matches!(events.last(), Some(MidiEvent { kind: EventKind::EndOfTrack, .. })) {
            events.push(MidiEvent::end_of_track(0));
        }
        Self { format: 0, division, tracks: vec![events] }
    }

    /// Every time signature event in the file as (numerator, denominator).
    pub fn time_signatures(&self) -> Vec<(u8, u32)> {
        self.tracks
            .iter()
            .flatten()
            .filter_map(|e| match e.kind {
                EventKind::TimeSignature { numerator, denominator_power, .. } => {
                    Some((numerator, 1u32.checked_shl(denominator_power as u32).unwrap_or(0)))
                }
                _ => None,
            })
            .collect()
    }

    /// True when every time signature is 4/4; a file without any counts as 4/4.
    pub fn is_four_four(&self) -> bool {
        self.time_signatures().iter().all(|&(n, d)| n == 4 && d == 4)
    }

    /// Absolute tick of the last event over all tracks.
    pub fn final_tick(&self) -> u64 {
        self.tracks
            .iter()
            .map(|t| t.iter().map(|e| e.delta_ticks as u64).sum::<u64>())
            .max()
            .unwrap_or(0)
    }

    /// Structural checks shared by the writer: ranges and End-of-Track placement.
    pub fn validate(&self) -> Result<()> {
        if self.format > 2 {
            return Err(MidiError::FieldOutOfRange(format!("format {}", self.format)));
        }
        if self.division == 0 || self.division & 0x8000 != 0 {
            return Err(MidiError::FieldOutOfRange(format!("division {}", self.division)));
        }
        if self.format == 0 && self.tracks.len() != 1 {
            return Err(MidiError::FieldOutOfRange(format!(
                "format 0 with {} tracks",
                self.tracks.len()
            )));
        }
        for (ti, track) in self.tracks.iter().enumerate() {
            let eot = track.iter().filter(|e| e.kind == EventKind::EndOfTrack).count();
            if eot != 1 || track.last().map(|e| &e.kind) != Some(&EventKind::EndOfTrack) {
                return Err(MidiError::EndOfTrack(ti));
            }
            for e in track {
                if e.delta_ticks > VLQ_MAX {
                    return Err(MidiError::VlqOutOfRange(e.delta_ticks));
                }
                validate_kind(&e.kind)?;
            }
        }
        Ok(())
    }
}

fn validate_kind(kind: &EventKind) -> Result<()> {
    let check = |what: &str, v: u32, max: u32| {
        if v > max {
            Err(MidiError::FieldOutOfRange(format!("{what} {v} > {max}")))
        } else {
            Ok(())
        }
    };
    match kind {
        EventKind::NoteOn { channel, pitch, velocity }
        | EventKind::NoteOff { channel, pitch, velocity } => {
            check("channel", *channel as u32, 15)?;
            check("pitch", *pitch as u32, 127)?;
            check("velocity", *velocity as u32, 127)
        }
        EventKind::Tempo { usec_per_quarter } => check("tempo", *usec_per_quarter, 0xFF_FFFF),
        EventKind::TimeSignature { .. } | EventKind::EndOfTrack => Ok(()),
        EventKind::MetaOther { meta_type, data } => {
            check("meta type", *meta_type as u32, 0x7F)?;
            check("meta length", data.len() as u32, VLQ_MAX)
        }
        EventKind::Other { status, data } => match status {
            0xF0 | 0xF7 => check("sysex length", data.len() as u32, VLQ_MAX),
            0x80..=0xEF => {
                let expected = channel_data_len(*status);
                if data.len() != expected {
                    return Err(MidiError::FieldOutOfRange(format!(
                        "status {status:#04x} expects {expected} data bytes, got {}",
                        data.len()
                    )));
                }
                match data.iter().find(|&&b| b > 0x7F) {
                    Some(b) => Err(MidiError::FieldOutOfRange(format!("data byte {b:#04x}"))),
                    None => Ok(()),
                }
            }
            _ => Err(MidiError::FieldOutOfRange(format!("status {status:#04x}"))),
        },
    }
}

/// Number of data bytes following a channel-voice status byte.
pub(crate) fn channel_data_len(status: u8) -> usize {
    match status & 0xF0 {
        0xC0 | 0xD0 => 1,
        _ => 2,
    }
}
