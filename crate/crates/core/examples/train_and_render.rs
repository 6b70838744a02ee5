//! End to end: synthesize a corpus, curate it, train a small model for a
//! few epochs, save and reload the checkpoint, and render a score in each
//! genre's style. Supervising only sounding cells (`masked_loss`) gets a
//! corpus this small off the all-zero prediction within a few epochs.
//!
//! ```text
//! cargo run --release --example train_and_render -- [epochs]
//! ```

use stylenet::corpus::{curate, GenreLabel};
use stylenet::midi::{extract_notes, write_midi};
use stylenet::model::{load_checkpoint, loss_csv, predict_performance, save_checkpoint, train, TrainConfig};
use stylenet::synth::{performance, SynthOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let dir = tempfile::tempdir()?;
    for (genre, seed, jitter) in [("classical", 0, 0), ("jazz", 100, 15)] {
        let root = dir.path().join(genre);
        std::fs::create_dir(&root)?;
        for i in 0..5 {
            let file = performance(&SynthOptions { seed: seed + i, timing_jitter: jitter, ..Default::default() });
            std::fs::write(root.join(format!("{i}.mid")), write_midi(&file)?)?;
        }
    }
    let roots = [(GenreLabel::classical(), dir.path().join("classical")), (GenreLabel::jazz(), dir.path().join("jazz"))];
    let manifest = curate(&roots, 20, 0.8, 1)?;

    let config = TrainConfig { epochs, window: 64, interp_hidden: 16, genre_hidden: 16, batch_size: 2, masked_loss: true, ..Default::default() };
    let ck = train(&manifest, config)?;
    print!("{}", loss_csv(&ck.history));
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&ck, &path)?;
    let ck = load_checkpoint(&path)?;

    let score = performance(&SynthOptions { seed: 999, bars: 1, ..Default::default() });
    let original: Vec<u8> = extract_notes(&score).spans.iter().map(|s| s.velocity).collect();
    println!("score      {original:?}");
    for genre in ck.params.genres() {
        let performed = predict_performance(&ck.params, &score, &genre, ck.config.window)?;
        let v: Vec<u8> = extract_notes(&performed).spans.iter().map(|s| s.velocity).collect();
        println!("{:<10} {v:?}", genre.as_str());
    }
    Ok(())
}
