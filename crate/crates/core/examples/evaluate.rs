//! Scores the graph against the generator's ground truth.
//!
//! cargo run --release --example evaluate -- 300

use std::time::Instant;

use typegraph::synth::corpus::recognition_corpus;
use typegraph::synth::evaluate;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let units = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(300);
    let m = recognition_corpus(8, 1, units).materialize()?;
    let started = Instant::now();
    let g = m.processed()?;
    println!("{} heap objects processed in {:?}", g.heap_count(), started.elapsed());
    println!("{}", evaluate(&g, &m.truth)?);
    Ok(())
}
