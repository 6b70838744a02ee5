use super::{
    channel_data_len, vlq_decode, EventKind, MidiError, MidiEvent, MidiFile, Result,
    META_END_OF_TRACK, META_TEMPO, META_TIME_SIGNATURE,
};

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(MidiError::Truncated(self.bytes.len())),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32> {
        let (v, n) = vlq_decode(self.bytes, self.pos)?;
        self.pos += n;
        Ok(v)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Parses a Standard MIDI File.
///
/// Chunks other than `MTrk` are skipped. A track chunk that ends without an
/// End-of-Track event gets one appended; bytes after End-of-Track are ignored.
pub fn parse_midi(bytes: &[u8]) -> Result<MidiFile> {
    let mut cur = Cursor { bytes, pos: 0 };
    if bytes.len() < 4 || &bytes[..4] != b"MThd" {
        return Err(MidiError::BadMagic);
    }
    cur.pos = 4;
    let header_len = cur.u32()? as usize;
    if header_len < 6 {
        return Err(MidiError::BadHeader(format!("header length {header_len}")));
    }
    let header = cur.take(header_len)?;
    let format = u16::from_be_bytes([header[0], header[1]]);
    let ntracks = u16::from_be_bytes([header[2], header[3]]) as usize;
    let division = u16::from_be_bytes([header[4], header[5]]);
    if format > 2 {
        return Err(MidiError::BadHeader(format!("format {format}")));
    }
    if division & 0x8000 != 0 {
        return Err(MidiError::SmpteDivision);
    }
    if division == 0 {
        return Err(MidiError::BadHeader("division 0".into()));
    }

    let mut tracks = Vec::with_capacity(ntracks);
    while tracks.len() < ntracks {
        if cur.remaining() < 8 {
            return Err(MidiError::Truncated(bytes.len()));
        }
        let id = cur.take(4)?;
        let len = cur.u32()? as usize;
        let start = cur.pos;
        let body = cur.take(len)?;
        if id == b"MTrk" {
            tracks.push(parse_track(body, start)?);
        }
    }
    Ok(MidiFile { format, division, tracks })
}

fn parse_track(body: &[u8], base: usize) -> Result<Vec<MidiEvent>> {
    let mut cur = Cursor { bytes: body, pos: 0 };
    let mut events = Vec::new();
    let mut running: Option<u8> = None;
    let truncated = |e: MidiError| match e {
        MidiError::Truncated(p) => MidiError::Truncated(base + p),
        MidiError::MalformedVlq(p) => MidiError::MalformedVlq(base + p),
        other => other,
    };

    while cur.remaining() > 0 {
        let delta = cur.vlq().map_err(truncated)?;
        let first = cur.u8().map_err(truncated)?;
        let kind = match first {
            0xFF => {
                running = None;
                let meta_type = cur.u8().map_err(truncated)?;
                let len = cur.vlq().map_err(truncated)? as usize;
                let data = cur.take(len).map_err(truncated)?;
                meta_kind(meta_type, data)
            }
            0xF0 | 0xF7 => {
                running = None;
                let len = cur.vlq().map_err(truncated)? as usize;
                let data = cur.take(len).map_err(truncated)?.to_vec();
                EventKind::Other { status: first, data }
            }
            0xF1..=0xFE => {
                return Err(MidiError::FieldOutOfRange(format!(
                    "system status {first:#04x} at offset {}",
                    base + cur.pos - 1
                )))
            }
            _ => {
                let (status, mut data) = if first & 0x80 != 0 {
                    running = Some(first);
                    (first, Vec::with_capacity(2))
                } else {
                    let status = running.ok_or(MidiError::NoRunningStatus {
                        offset: base + cur.pos - 1,
                        byte: first,
                    })?;
                    (status, vec![first])
                };
                while data.len() < channel_data_len(status) {
                    data.push(cur.u8().map_err(truncated)?);
                }
                channel_kind(status, data)
            }
        };
        let is_eot = kind == EventKind::EndOfTrack;
        events.push(MidiEvent { delta_ticks: delta, kind });
        if is_eot {
            return Ok(events);
        }
    }
    events.push(MidiEvent::end_of_track(0));
    Ok(events)
}

fn meta_kind(meta_type: u8, data: &[u8]) -> EventKind {
    match (meta_type, data.len()) {
        (META_END_OF_TRACK, 0) => EventKind::EndOfTrack,
        (META_TEMPO, 3) => EventKind::Tempo {
            usec_per_quarter: u32::from_be_bytes([0, data[0], data[1], data[2]]),
        },
        (META_TIME_SIGNATURE, 4) => EventKind::TimeSignature {
            numerator: data[0],
            denominator_power: data[1],
            clocks_per_click: data[2],
            notated_32nds_per_quarter: data[3],
        },
        _ => EventKind::MetaOther { meta_type, data: data.to_vec() },
    }
}

fn channel_kind(status: u8, data: Vec<u8>) -> EventKind {
    let channel = status & 0x0F;
    match status & 0xF0 {
        0x80 => EventKind::NoteOff { channel, pitch: data[0], velocity: data[1] },
        0x90 => EventKind::NoteOn { channel, pitch: data[0], velocity: data[1] },
        _ => EventKind::Other { status, data },
    }
}
