//! Criterion benchmarks for the estimation routines and episode simulation;
//! see `benches/`. Run with `cargo bench -p altshift-bench`.
