//! Structs ending in a one-element array, allocated with extra trailing
//! elements. The graph sizes the trailing array from the allocation.

use typegraph::graph::ArrayVerdict;
use typegraph::synth::corpus::fam_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = fam_corpus(11).materialize()?;
    let g = m.processed()?;
    println!("{:>10} {:>5} {:>8} {:>8}", "ADDR", "SIZE", "TRUTH", "FOUND");
    for t in &m.truth.objects {
        let node = g.node(g.node_at(t.base).unwrap());
        let found = match node.verdict {
            ArrayVerdict::Fam { count, .. } => count.to_string(),
            other => format!("{other:?}"),
        };
        println!("{:>10x} {:>5} {:>8} {:>8}", t.base, node.size, t.count, found);
    }
    Ok(())
}
