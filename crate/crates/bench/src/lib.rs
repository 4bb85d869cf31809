//! Benchmarks for the hot paths; see `benches/`.
