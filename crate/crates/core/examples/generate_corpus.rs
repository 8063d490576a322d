//! Writes a synthesized dump, catalog, cache table and ground truth to a
//! directory, ready for the `tg` binary.
//!
//! cargo run --example generate_corpus -- /tmp/corpus 300 42

use std::path::PathBuf;

use typegraph::synth::corpus::recognition_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "corpus".into()));
    let units: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(300);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(42);
    std::fs::create_dir_all(&dir)?;
    let files = recognition_corpus(8, seed, units).write_files(&dir, "kernel")?;
    println!("wrote {}", files.dump.display());
    println!(
        "tg {} --catalog {} --cache-table {} --eval {}",
        files.dump.display(),
        files.catalog.display(),
        files.cache_table.display(),
        files.truth.display()
    );
    Ok(())
}
