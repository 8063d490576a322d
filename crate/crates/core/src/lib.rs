//! Type identification for memory dumps.
//!
//! Given a dump of a heap (allocator caches and their objects), a few typed
//! roots (static symbols, single-type caches) and a compiler-style type
//! catalog, [`graph::TypeGraph`] infers a type for most heap objects by
//! following pointers from the known roots.

pub mod analyzers;
pub mod cli;
pub mod dumpio;
pub mod graph;
pub mod synth;
pub mod typecat;
