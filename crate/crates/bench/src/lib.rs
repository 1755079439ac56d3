//! Criterion benchmarks for the decoder and the edit-distance metrics; see `benches/`.
