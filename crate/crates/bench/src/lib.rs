//! Criterion benchmarks for synthcast live under `benches/`.
