//! Writes a synthetic performance, reads it back, and lists its notes.
//!
//! ```text
//! cargo run --example midi_round_trip -- [out.mid]
//! ```

use stylenet::midi::{extract_notes, parse_midi, write_midi};
use stylenet::synth::{performance, SynthOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "performance.mid".into());
    let file = performance(&SynthOptions { bars: 2, timing_jitter: 12, ..Default::default() });
    let bytes = write_midi(&file)?;
    std::fs::write(&path, &bytes)?;

    let back = parse_midi(&std::fs::read(&path)?)?;
    assert_eq!(back, file);
    let notes = extract_notes(&back);
    println!("{path}: {} bytes, format {}, division {}", bytes.len(), back.format, back.division);
    println!("{:>6} {:>6} {:>6} {:>4}", "pitch", "onset", "dur", "vel");
    for s in &notes.spans {
        println!("{:>6} {:>6} {:>6} {:>4}", s.pitch, s.onset_tick, s.duration_ticks, s.velocity);
    }
    Ok(())
}
