//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use jdcc_core::harness::{synthetic_corpus, CorpusConfig, FrameTask};
use jdcc_core::synth::ShapeKind;
use jdcc_core::{ObjectiveConfig, TransitionParams};

/// One rectangle frame task on a `size × size` grid.
pub fn frame(size: usize, delta: f64) -> FrameTask {
    let corpus_cfg = CorpusConfig { kinds: vec![ShapeKind::Rectangle], width: size, height: size, sequences: 1, delta, seed: 3 };
    synthetic_corpus(&corpus_cfg).expect("corpus").remove(0)
}

pub fn config(task: &FrameTask, lambda: f64) -> ObjectiveConfig {
    let params = TransitionParams::new(0.1, 0.5, 0.4).expect("params");
    let mut cfg = ObjectiveConfig::new(params.costs(), Arc::clone(&task.model), task.bounds);
    cfg.lambda = lambda;
    cfg
}
