use super::{MidiError, Result};

/// Largest value representable in four VLQ bytes.
pub const VLQ_MAX: u32 = 0x0FFF_FFFF;

/// Decodes a variable-length quantity starting at `offset`.
/// Returns the value and the number of bytes consumed.
pub fn vlq_decode(bytes: &[u8], offset: usize) -> Result<(u32, usize)> {
    let mut value: u32 = 0;
    for i in 0..4 {
        let byte = *bytes.get(offset + i).ok_or(MidiError::Truncated(offset + i))?;
        value = (value << 7) | (byte & 0x7F) as u32;
        if byte & 0x80 == 0 {
            return Ok((value, i + 1));
        }
    }
    Err(MidiError::MalformedVlq(offset))
}

/// Minimal-length encoding of `value`.
pub fn vlq_encode(value: u32) -> Result<Vec<u8>> {
    if value > VLQ_MAX {
        return Err(MidiError::VlqOutOfRange(value));
    }
    let mut out = vec![(value & 0x7F) as u8];
    let mut rest = value >> 7;
    while rest > 0 {
        out.push(0x80 | (rest & 0x7F) as u8);
        rest >>= 7;
    }
    out.reverse();
    Ok(out)
}
