//! Criterion benchmarks for the gaze graph pipeline. The benchmarks live in
//! `benches/pipeline.rs`; run them with `cargo bench -p gazesparse-bench`.
