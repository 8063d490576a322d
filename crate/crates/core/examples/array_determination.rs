//! When is an oversized object an array of its inferred type? Prints the
//! decision for a few types against a Solaris-like size-class ladder, then
//! the verdicts the graph reached on a synthesized corpus.

use typegraph::dumpio::next_smaller;
use typegraph::graph::{check_array, ArrayVerdict};
use typegraph::synth::corpus::{recognition_corpus, solaris_ladder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ladder = solaris_ladder();
    println!("{:>6} {:>6} {:>8} {:>6}", "slot", "type", "smaller", "array");
    for (slot, ty) in [(224, 76), (224, 100), (160, 40), (2688, 40), (96, 40), (4096, 8)] {
        let smaller = next_smaller(&ladder, slot);
        let s = smaller.map_or("-".to_string(), |v| v.to_string());
        println!("{slot:>6} {ty:>6} {s:>8} {:>6}", check_array(slot, ty, smaller));
    }

    let m = recognition_corpus(8, 3, 40).materialize()?;
    let g = m.processed()?;
    let (mut arrays, mut fams, mut singles) = (0, 0, 0);
    for n in g.heap_nodes() {
        match n.verdict {
            ArrayVerdict::Array { .. } => arrays += 1,
            ArrayVerdict::Fam { .. } => fams += 1,
            _ => singles += 1,
        }
    }
    println!("\n{arrays} arrays, {fams} flexible-array structs, {singles} others");
    for n in g.heap_nodes().filter(|n| matches!(n.verdict, ArrayVerdict::Array { .. })).take(5) {
        println!("{}", g.whattype(n.base));
    }
    Ok(())
}
