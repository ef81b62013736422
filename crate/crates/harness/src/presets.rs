//! Named instances used by the demo, the documentation and the acceptance run.

use serde_json::{json, Value};

use crate::config::{merge, ExperimentConfig};
use crate::HarnessError;

/// Linear teacher, linear model on action counts (misspecified), uniform
/// behavior, argmax over 8 fixed random deterministic candidates.
pub fn winners_curse() -> Value {
    json!({
        "name": "winners-curse",
        "env": {"k": 4, "h": 2, "stochasticity": 0.3, "teacher": "linear", "teacher_seed": 27},
        "predictor": {"kind": "linear-ridge", "features": "counts", "ridge": 1e-6},
        "policy": {"kind": "argmax-candidates", "candidates": 8, "candidate_seed": 0},
    })
}

/// Deterministic chain whose 8 candidates are close in value, so the reusing
/// term of a single dataset is positive most of the time.
pub fn near_tie() -> Value {
    json!({
        "name": "near-tie",
        "env": {"k": 4, "h": 2, "stochasticity": 0.0, "teacher": "linear", "teacher_seed": 112},
        "predictor": {"kind": "linear-ridge", "features": "counts", "ridge": 1e-6},
        "policy": {"kind": "argmax-candidates", "candidates": 8, "candidate_seed": 3},
    })
}

/// [`near_tie`] with the softmax policy-gradient learner in place of argmax.
pub fn softmax_policy() -> Value {
    merge(near_tie(), json!({"name": "softmax", "policy": {"kind": "softmax-gradient", "candidates": null}}))
}

/// Builds a config from `preset` with `overrides` merged on top.
pub fn config(preset: Value, overrides: Value) -> Result<ExperimentConfig, HarnessError> {
    ExperimentConfig::from_value(merge(merge(ExperimentConfig::default().to_value(), preset), overrides))
}
