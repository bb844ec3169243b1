//! Fixtures shared by the benchmarks.

use jigsaw_core::pipeline::{generate_splits, RunConfig};
use jigsaw_core::Scene;

pub const BENCHMARK_CONFIG: &str = include_str!("../../../configs/benchmark.json");

/// The benchmark configuration with smaller splits.
pub fn config(train: usize, val: usize) -> RunConfig {
    let mut cfg = RunConfig::from_json(BENCHMARK_CONFIG).expect("bundled config is valid");
    cfg.splits.train = train;
    cfg.splits.val = val;
    cfg
}

pub fn scenes(cfg: &RunConfig) -> (Vec<Scene>, Vec<Scene>) {
    generate_splits(cfg).expect("bundled config generates")
}
