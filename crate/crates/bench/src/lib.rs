//! Criterion benchmarks for the ohtlab kernels; see `benches/`.
