//! A static list head, two list elements, a name string and a side
//! structure. Only the static is typed; everything else is inferred by
//! following its pointers.

use typegraph::graph::{render_all, StatsStyle};
use typegraph::synth::corpus::foo_list_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = foo_list_corpus(7).materialize()?;
    let mut g = m.graph()?;
    g.run();
    print!("{}", render_all(&g.history()[..2], StatsStyle { timing: false }));
    for sym in g.image().statics() {
        println!("{}", g.whattype(sym.base));
    }
    for obj in &m.truth.objects {
        println!("{}", g.whattype(obj.base));
    }
    // an interior address reports the containing object and offset
    let name = m.truth.by_name("name").unwrap();
    println!("{}", g.whattype(name.base + 3));
    Ok(())
}
