//! Overfits one 200-step window per genre with strict genre alternation and
//! reports the inference-mode training loss as it falls.
//!
//! ```text
//! cargo run --release --example overfit -- [steps] [interp_hidden] [genre_hidden]
//! ```

use std::time::Instant;

use stylenet::corpus::GenreLabel;
use stylenet::model::{encode_file, evaluate, make_windows, optimizer_step, Checkpoint, TrainConfig, Window};
use stylenet::nn::ParamSet;
use stylenet::synth::{performance, SynthOptions};

fn window(seed: u64) -> Window {
    let file = performance(&SynthOptions { seed, bars: 13, ..Default::default() });
    let enc = encode_file(&file);
    make_windows(&enc.roll, &enc.velocities, 200).unwrap().swap_remove(0)
}

fn main() {
    let arg = |i: usize, default: usize| std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    let (steps, interp_hidden, genre_hidden) = (arg(1, 2000), arg(2, 88), arg(3, 128));
    let config = TrainConfig { batch_size: 1, interp_hidden, genre_hidden, ..TrainConfig::default() };
    let genres = [GenreLabel::classical(), GenreLabel::jazz()];
    let data = [window(1), window(2)];
    let mut state = Checkpoint::fresh(config, &genres).unwrap();
    let mut grads = state.params.zeros_like();
    println!("{} parameters", state.params.num_params());
    let start = Instant::now();
    for step in 0..steps {
        let k = step % 2;
        optimizer_step(&mut state, &mut grads, &genres[k], &[&data[k]]).unwrap();
        if (step + 1) % 100 == 0 {
            let losses: Vec<f64> = (0..2)
                .map(|k| evaluate(&state.params, &genres[k], std::slice::from_ref(&data[k]), false).unwrap())
                .collect();
            println!("step {:>5}  classical {:.3e}  jazz {:.3e}  {:.1?}", step + 1, losses[0], losses[1], start.elapsed());
        }
    }
}
