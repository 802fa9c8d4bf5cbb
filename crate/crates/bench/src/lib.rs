//! Criterion benchmarks for the evaluation engine; run with `cargo bench -p tvbench-bench`.
