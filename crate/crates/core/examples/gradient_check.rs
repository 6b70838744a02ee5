//! Finite-difference check of every layer and of a tiny two-genre StyleNet.
//!
//! ```text
//! cargo run --example gradient_check -- [seeds]
//! ```

use std::time::Instant;

use stylenet::model::{format_suite, run_gradcheck_suite};

fn main() {
    let seeds = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let start = Instant::now();
    let results = run_gradcheck_suite(0, seeds, false);
    print!("{}", format_suite(&results, 1e-4));
    println!("{seeds} seeds in {:.1?}", start.elapsed());
}
