//! Lists held mutexes inside identified objects, with their owners.

use typegraph::analyzers::{findlocks, LockModel};
use typegraph::synth::corpus::locks_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = locks_corpus(8, 5, 12, 12).materialize()?;
    let g = m.processed()?;
    for rec in findlocks(&g, &LockModel::default())? {
        println!("{rec}");
    }
    Ok(())
}
