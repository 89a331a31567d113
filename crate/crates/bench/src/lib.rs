//! Criterion benchmarks for the fracnet workspace live under `benches/`.
