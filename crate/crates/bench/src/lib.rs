//! Criterion benchmarks for boostpfn; see `benches/`.
