//! Builds a small two-genre corpus with a few ineligible files and prints
//! the resulting manifest.
//!
//! ```text
//! cargo run --example curate_corpus
//! ```

use stylenet::corpus::{curate, GenreLabel, Split};
use stylenet::midi::write_midi;
use stylenet::synth::{performance, score_with_velocities, SynthOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    for (genre, seed) in [("classical", 0), ("jazz", 100)] {
        let root = dir.path().join(genre);
        std::fs::create_dir(&root)?;
        for i in 0..6 {
            let file = performance(&SynthOptions { seed: seed + i, ..Default::default() });
            std::fs::write(root.join(format!("piece{i}.mid")), write_midi(&file)?)?;
        }
        // a waltz and a file played at one dynamic level
        let waltz = score_with_velocities(&SynthOptions { time_signature: Some((3, 2)), ..Default::default() }, &[70; 8]);
        std::fs::write(root.join("waltz.mid"), write_midi(&waltz)?)?;
        let flat = score_with_velocities(&SynthOptions::default(), &[64; 40]);
        std::fs::write(root.join("flat.mid"), write_midi(&flat)?)?;
    }
    let roots = [
        (GenreLabel::classical(), dir.path().join("classical")),
        (GenreLabel::jazz(), dir.path().join("jazz")),
    ];
    let manifest = curate(&roots, 20, 0.8, 7)?;
    for e in &manifest.entries {
        let name = e.path.file_name().unwrap().to_string_lossy();
        match (&e.split, &e.rejection_reason) {
            (Some(split), _) => println!("{:<10} {name:<12} {split:?} ({} velocities)", e.genre, e.distinct_velocity_count),
            (None, Some(reason)) => println!("{:<10} {name:<12} rejected: {reason}", e.genre),
            _ => unreachable!(),
        }
    }
    for g in manifest.genres() {
        println!("{g}: {} train, {} validation", manifest.files(&g, Split::Train).count(), manifest.files(&g, Split::Validation).count());
    }
    Ok(())
}
