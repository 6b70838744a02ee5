use super::{
    vlq_encode, EventKind, MidiEvent, MidiFile, Result, META_END_OF_TRACK, META_TEMPO,
    META_TIME_SIGNATURE,
};

/// Serializes a file. Every channel event carries an explicit status byte.
pub fn write_midi(file: &MidiFile) -> Result<Vec<u8>> {
    file.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&file.format.to_be_bytes());
    out.extend_from_slice(&(file.tracks.len() as u16).to_be_bytes());
    out.extend_from_slice(&file.division.to_be_bytes());
    for track in &file.tracks {
        let mut body = Vec::new();
        for event in track {
            write_event(&mut body, event)?;
        }
        out.extend_from_slice(b"MTrk");
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
    }
    Ok(out)
}

fn write_meta(out: &mut Vec<u8>, meta_type: u8, data: &[u8]) -> Result<()> {
    out.push(0xFF);
    out.push(meta_type);
    out.extend(vlq_encode(data.len() as u32)?);
    out.extend_from_slice(data);
    Ok(())
}

fn write_event(out: &mut Vec<u8>, event: &MidiEvent) -> Result<()> {
    out.extend(vlq_encode(event.delta_ticks)?);
    match &event.kind {
        EventKind::NoteOn { channel, pitch, velocity } => {
            out.extend_from_slice(&[0x90 | channel, *pitch, *velocity])
        }
        EventKind::NoteOff { channel, pitch, velocity } => {
            out.extend_from_slice(&[0x80 | channel, *pitch, *velocity])
        }
        EventKind::Tempo { usec_per_quarter } => {
            write_meta(out, META_TEMPO, &usec_per_quarter.to_be_bytes()[1..])?
        }
        EventKind::TimeSignature {
            numerator,
            denominator_power,
            clocks_per_click,
            notated_32nds_per_quarter,
        } => write_meta(
            out,
            META_TIME_SIGNATURE,
            &[*numerator, *denominator_power, *clocks_per_click, *notated_32nds_per_quarter],
        )?,
        EventKind::EndOfTrack => write_meta(out, META_END_OF_TRACK, &[])?,
        EventKind::MetaOther { meta_type, data } => write_meta(out, *meta_type, data)?,
        EventKind::Other { status, data } => {
            out.push(*status);
            if matches!(status, 0xF0 | 0xF7) {
                out.extend(vlq_encode(data.len() as u32)?);
            }
            out.extend_from_slice(data);
        }
    }
    Ok(())
}
