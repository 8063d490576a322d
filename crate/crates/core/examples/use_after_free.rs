//! A credential still referenced, through a stale pointer, as the side
//! structure of a list element. The two interpretations surface as a type
//! conflict naming both types and both referrers.

use typegraph::analyzers::conflicts;
use typegraph::synth::corpus::use_after_free_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = use_after_free_corpus(8, 4, 3).materialize()?;
    let g = m.processed()?;
    for c in conflicts(&g) {
        println!("{c}");
    }
    for t in &m.truth.conflicts {
        println!("planted: {:x} is {}, stale {} pointer at {:x}", t.base, t.true_type, t.stale_type, t.referrer);
    }
    Ok(())
}
