//! Calibration of iterate bounds, the estimation discount and check slack
//! from honest runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::LearningRun;
use crate::numerics::{norm, norm_sq, Fixed};
use crate::topology::Graph;
use crate::validation::global::{global_statistics, sender_estimates, GlobalStats};

/// Grid resolution for the discount `γ`.
pub const GAMMA_STEPS: u32 = 64;

/// Per-round limits `B_t` on model norms and `C_t` on gradient norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSchedule {
    pub model: Vec<f64>,
    pub gradient: Vec<f64>,
}

impl BoundSchedule {
    pub fn uniform(model: f64, gradient: f64, rounds: usize) -> Self {
        BoundSchedule { model: vec![model; rounds + 1], gradient: vec![gradient; rounds + 1] }
    }

    pub fn rounds(&self) -> usize {
        self.model.len().saturating_sub(1)
    }

    /// Whether a round-`t` message respects the bounds.
    pub fn admits(&self, t: usize, x: &[Fixed], g: &[Fixed]) -> bool {
        let (b, c) = (self.model[t], self.gradient[t]);
        norm_sq(x) <= b * b && norm_sq(g) <= c * c
    }
}

/// `margin ×` the per-round maximum norm over runs and agents.
pub fn calibrate_bounds(runs: &[LearningRun], margin: f64) -> Result<BoundSchedule> {
    let Some(first) = runs.first() else {
        return Err(Error::CalibrationFailed("no calibration runs".into()));
    };
    if !(margin >= 1.0 && margin.is_finite()) {
        return Err(Error::InvalidParameter(format!("bound margin {margin} must be ≥ 1")));
    }
    let rounds = first.states.len() - 1;
    let mut model = vec![0.0f64; rounds + 1];
    let mut gradient = vec![0.0f64; rounds + 1];
    for run in runs {
        if run.states.len() != rounds + 1 {
            return Err(Error::CalibrationFailed("runs disagree on the round count".into()));
        }
        for t in 0..=rounds {
            for (x, g) in run.states[t].iter().zip(&run.gradients[t]) {
                model[t] = model[t].max(norm(x));
                gradient[t] = gradient[t].max(norm(g));
            }
        }
    }
    Ok(BoundSchedule {
        model: model.into_iter().map(|v| v * margin).collect(),
        gradient: gradient.into_iter().map(|v| v * margin).collect(),
    })
}

/// Global statistics of an honest run at discount `gamma`.
pub fn honest_statistics(graph: &Graph, run: &LearningRun, gamma: f64) -> Result<GlobalStats> {
    Ok(global_statistics(&sender_estimates(graph, &run.transcript, gamma)?))
}

fn gamma_at(k: u32) -> f64 {
    k as f64 / GAMMA_STEPS as f64
}

/// Largest `γ = k/64` at which every run passes the heterogeneity check.
pub fn calibrate_gamma_max(runs: &[(Graph, LearningRun)], delta: f64, epsilon: f64) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::CalibrationFailed("no calibration runs".into()));
    }
    let passes = |k: u32| -> Result<bool> {
        for (graph, run) in runs {
            if honest_statistics(graph, run, gamma_at(k))?.heterogeneity > delta + epsilon {
                return Ok(false);
            }
        }
        Ok(true)
    };
    if !passes(0)? {
        return Err(Error::CalibrationFailed(
            "honest runs fail the heterogeneity check even at gamma = 0".into(),
        ));
    }
    let (mut lo, mut hi) = (0, GAMMA_STEPS);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if passes(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(gamma_at(lo))
}

/// `margin ×` the largest honest check statistic: the optimality statistic
/// over the whole `γ` grid and the heterogeneity excess over `δ` at `γ = 0`.
pub fn calibrate_epsilon(runs: &[(Graph, LearningRun)], delta: f64, margin: f64) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::CalibrationFailed("no calibration runs".into()));
    }
    let mut worst = 0.0f64;
    for (graph, run) in runs {
        let at_zero = honest_statistics(graph, run, 0.0)?;
        worst = worst.max(at_zero.heterogeneity - delta);
        for k in 0..GAMMA_STEPS {
            worst = worst.max(honest_statistics(graph, run, gamma_at(k))?.optimality);
        }
    }
    Ok(margin * worst.max(0.0))
}

/// `margin ×` the largest final mean squared distance to `xstar`.
pub fn calibrate_tolerance(runs: &[LearningRun], xstar: &[f64], margin: f64) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::CalibrationFailed("no calibration runs".into()));
    }
    let worst = runs
        .iter()
        .map(|r| mean_sq_distance(r.states.last().expect("nonempty").iter().map(|x| x.to_f64()), xstar))
        .fold(0.0, f64::max);
    Ok(margin * worst)
}

/// `(1/m) Σ ‖x_i − c‖²` over the given models.
pub fn mean_sq_distance(models: impl Iterator<Item = Vec<f64>>, center: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for x in models {
        total += x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}
