//! repodoc: a repository documentation engine.
//!
//! The library builds a typed knowledge graph from source code, clusters it
//! into a hierarchical module tree, generates multi-level cross-referenced
//! markdown documentation through a pluggable text-generation provider, and
//! keeps the documentation consistent under code changes via semantic impact
//! propagation and selective regeneration.

pub mod bench;
pub mod cli;
pub mod cluster;
pub mod config;
pub mod docgen;
pub mod enrich;
pub mod extract;
pub mod frontend;
pub mod graph;
pub mod incremental;
pub mod provider;
pub mod snapshot;
#[doc(hidden)]
pub mod testutil;
pub mod util;
