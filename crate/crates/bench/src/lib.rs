//! Benchmarks for `vq2d-core` live under `benches/`.
