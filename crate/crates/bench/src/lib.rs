//! Criterion benchmarks for the simulator, the passivity layer and the MLPs; see `benches/`.
