//! A subtree reachable only through a `void *` stays unknown. The node with
//! the greatest reach is the one worth typing by hand; declaring its type
//! reprocesses the graph and identifies the subtree.

use typegraph::graph::StatsStyle;
use typegraph::synth::corpus::opaque_subgraph_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = opaque_subgraph_corpus(8, 6, 20, 200).materialize()?;
    let mut g = m.processed()?;
    let style = StatsStyle { timing: false };
    print!("{}", g.history().last().unwrap().render(style));

    let (id, reach) = g.greatest_reach().expect("an unknown subtree");
    let base = g.node(id).base;
    println!("greatest reach: {base:x}, {reach} unknown nodes");
    println!("{}", g.whattype(base));

    let xnode = g.catalog().require("struct xnode")?;
    let stats = g.istype(base, xnode)?;
    print!("{}", stats.last().unwrap().render(style));
    println!("{}", g.whattype(base));
    Ok(())
}
