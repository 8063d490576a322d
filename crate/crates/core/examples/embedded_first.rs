//! Objects whose first member is itself a struct, referenced both as the
//! outer and the inner type. Each is reported as a conflict rather than
//! being mistaken for an array of the smaller inner type.

use typegraph::analyzers::conflicts;
use typegraph::graph::ArrayVerdict;
use typegraph::synth::corpus::embedded_first_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = embedded_first_corpus(8, 2, 20).materialize()?;
    let g = m.processed()?;
    let found = conflicts(&g);
    for c in found.iter().take(3) {
        println!("{c}");
    }
    let arrays = g.heap_nodes().filter(|n| matches!(n.verdict, ArrayVerdict::Array { .. })).count();
    println!("{} conflicts, {arrays} arrays", found.len());
    Ok(())
}
