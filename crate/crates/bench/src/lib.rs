//! Criterion benchmarks for `heatsrc`; see `benches/`.
