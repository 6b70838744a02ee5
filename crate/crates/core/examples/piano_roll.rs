//! Encodes a score into the binary note-state matrix and the velocity target,
//! then prints the first steps of a few keys.
//!
//! ```text
//! cargo run --example piano_roll
//! ```

use stylenet::midi::extract_notes;
use stylenet::roll::{decode_velocities, encode, GridSpec, LOWEST_PITCH};
use stylenet::synth::{performance, SynthOptions};

fn main() {
    let file = performance(&SynthOptions { bars: 1, ..Default::default() });
    let notes = extract_notes(&file);
    let grid = GridSpec::new(file.division);
    let enc = encode(&notes.spans, &grid);
    println!("{} notes -> {} steps x 176 input, {} x 88 target", notes.spans.len(), enc.roll.steps(), enc.velocities.steps());

    let keys: Vec<usize> = (0..88).filter(|&k| (0..enc.roll.steps()).any(|t| enc.roll.held(t, k))).take(8).collect();
    print!("step ");
    for &k in &keys {
        print!("{:>9}", LOWEST_PITCH as usize + k);
    }
    println!();
    for t in 0..enc.roll.steps() {
        print!("{t:>4} ");
        for &k in &keys {
            let cell = match (enc.roll.played(t, k), enc.roll.held(t, k)) {
                (true, _) => format!("on {:.2}", enc.velocities.data.get(t, k)),
                (false, true) => "  held".to_string(),
                _ => "     .".to_string(),
            };
            print!("{cell:>9}");
        }
        println!();
    }
    let decoded = decode_velocities(&enc.roll, &enc.velocities, &notes.spans, &grid).unwrap();
    assert!(decoded.iter().zip(&notes.spans).all(|(v, s)| *v == s.velocity));
    println!("decoding the target recovers every velocity");
}
