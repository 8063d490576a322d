//! Finds arrays of small lock-bearing structures that span several
//! coherence units, where unrelated locks share a line.
//!
//! cargo run --example findfalse -- 128

use typegraph::analyzers::{findfalse, render_findfalse, DEFAULT_GRANULARITY};
use typegraph::synth::corpus::false_sharing_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let granularity = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(DEFAULT_GRANULARITY);
    let m = false_sharing_corpus(8, 9).materialize()?;
    let g = m.processed()?;
    print!("{}", render_findfalse(&findfalse(&g, granularity)?));
    Ok(())
}
