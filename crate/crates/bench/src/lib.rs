//! Criterion benchmarks for `fhn-waves`; see `benches/`.
