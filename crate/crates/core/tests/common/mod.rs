#![allow(dead_code)]

use serde_json::{json, Value};
use valid_core::harness::RunConfig;

/// Two 10-cliques, clique means `±separation·e₁` in two dimensions, `K = 10`.
pub fn two_clique(separation: f64, rounds: usize) -> Value {
    json!({
        "graph": {"kind": "two_clique_bridge"},
        "loss": {"kind": "clique_quadratic", "dim": 2, "separation": separation, "noise_std": 1.0},
        "batch": 10,
        "rounds": rounds,
    })
}

pub fn config(mut value: Value, patch: Value) -> RunConfig {
    let (Value::Object(base), Value::Object(extra)) = (&mut value, patch) else {
        panic!("configs are objects");
    };
    base.extend(extra);
    RunConfig::from_value(value).expect("valid test config")
}

pub fn with_seed(c: &RunConfig, seed: u64) -> RunConfig {
    let mut c = c.clone();
    c.seed = seed;
    c
}

pub const ULP: f64 = 1.0 / 4294967296.0;
