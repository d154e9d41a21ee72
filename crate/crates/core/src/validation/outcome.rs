//! Classification of a finished run into the outcomes A, B, C or FAIL.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numerics::{check_admissible, global_minimizer, LossModel, ModelVec};
use crate::validation::calibrate::mean_sq_distance;
use crate::validation::ValidationState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    /// No Byzantine agents, everyone ⊤ and close to the minimizer.
    A,
    /// Some honest agents ⊤ and their consensus is admissible.
    B,
    /// Every honest agent ⊥.
    C,
    #[serde(rename = "FAIL")]
    Fail,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::A => "A",
            Outcome::B => "B",
            Outcome::C => "C",
            Outcome::Fail => "FAIL",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub outcome: Outcome,
    /// Mean squared distance of the ⊤ honest models to the reference point
    /// (the minimizer without Byzantine agents, their mean otherwise).
    pub error: Option<f64>,
    /// Mean of the ⊤ honest models.
    pub candidate: Option<Vec<f64>>,
    pub admissible: Option<bool>,
}

/// `models` are every agent's round-`T` models; only honest ones are read.
pub fn classify_outcome(
    byzantine: &[usize],
    states: &[ValidationState],
    models: &[ModelVec],
    loss: &LossModel,
    delta: f64,
    tolerance: f64,
) -> Result<Classification> {
    let n = states.len();
    let honest: Vec<usize> = (0..n).filter(|v| !byzantine.contains(v)).collect();
    let top: Vec<usize> = honest.iter().copied().filter(|&v| states[v].is_top()).collect();
    let top_models = || top.iter().map(|&v| models[v].to_f64());
    let candidate = (!top.is_empty()).then(|| {
        let d = models[top[0]].dim();
        let mut mean = vec![0.0; d];
        for x in top_models() {
            for (acc, v) in mean.iter_mut().zip(x) {
                *acc += v;
            }
        }
        mean.into_iter().map(|v| v / top.len() as f64).collect::<Vec<_>>()
    });

    if byzantine.is_empty() {
        let xstar = global_minimizer(loss)?;
        let error = mean_sq_distance(honest.iter().map(|&v| models[v].to_f64()), &xstar);
        let outcome = if top.len() == n && error < tolerance { Outcome::A } else { Outcome::Fail };
        return Ok(Classification { outcome, error: Some(error), candidate, admissible: None });
    }
    let Some(candidate) = candidate else {
        return Ok(Classification { outcome: Outcome::C, error: None, candidate: None, admissible: None });
    };
    let error = mean_sq_distance(top_models(), &candidate);
    let admissible = check_admissible(&candidate, &top, loss, delta, tolerance)?.admissible;
    let outcome = if admissible && error < tolerance { Outcome::B } else { Outcome::Fail };
    Ok(Classification { outcome, error: Some(error), candidate: Some(candidate), admissible: Some(admissible) })
}
