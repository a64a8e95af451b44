//! Criterion benchmarks for the search engine. See `benches/engine.rs`;
//! run them with `cargo bench -p regionzoom-bench`.
