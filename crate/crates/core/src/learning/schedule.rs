//! Decaying step sizes `α^(t) = α₀/(t+1)` and `η^(t) = η₀/√(t+1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Fixed;

/// Default `α₀` as a fraction of `min(1, μ/β²)`.
const DEFAULT_ALPHA_FRACTION: f64 = 0.3;
/// Fraction of the admissible `η^(1)` used by default.
const DEFAULT_ETA_FRACTION: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub alpha0: f64,
    pub eta0: f64,
    pub rounds: usize,
}

impl StepSchedule {
    pub fn new(alpha0: f64, eta0: f64, rounds: usize) -> Result<Self> {
        if !(alpha0 > 0.0 && alpha0.is_finite()) {
            return Err(Error::Schedule(format!("alpha0 must be positive, got {alpha0}")));
        }
        if !(eta0 > 0.0 && eta0.is_finite()) {
            return Err(Error::Schedule(format!("eta0 must be positive, got {eta0}")));
        }
        if rounds == 0 {
            return Err(Error::Schedule("at least one round".into()));
        }
        Ok(StepSchedule { alpha0, eta0, rounds })
    }

    /// Defaults that satisfy [`StepSchedule::check`] for the given constants.
    pub fn defaults(beta: f64, mu: f64, max_degree: usize, rounds: usize) -> Result<Self> {
        let alpha0 = DEFAULT_ALPHA_FRACTION * alpha_cap(beta, mu);
        let eta0 = DEFAULT_ETA_FRACTION * std::f64::consts::SQRT_2 / max_degree.max(1) as f64;
        StepSchedule::new(alpha0, eta0, rounds)
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha0 / (t as f64 + 1.0)
    }

    pub fn eta(&self, t: usize) -> f64 {
        self.eta0 / (t as f64 + 1.0).sqrt()
    }

    pub fn alpha_fixed(&self, t: usize) -> Result<Fixed> {
        Fixed::from_f64(self.alpha(t))
    }

    pub fn eta_fixed(&self, t: usize) -> Result<Fixed> {
        Fixed::from_f64(self.eta(t))
    }

    /// Requires `α^(t) < min(1, μ/β²)` for every round and `η^(1)·maxdeg < 1`.
    pub fn check(&self, beta: f64, mu: f64, max_degree: usize) -> Result<()> {
        let cap = alpha_cap(beta, mu);
        if self.alpha(1) >= cap {
            return Err(Error::Schedule(format!(
                "alpha^(1) = {} must be below min(1, mu/beta^2) = {cap}",
                self.alpha(1)
            )));
        }
        if self.eta(1) * max_degree as f64 >= 1.0 {
            return Err(Error::Schedule(format!(
                "eta^(1) * max_degree = {} must be below 1",
                self.eta(1) * max_degree as f64
            )));
        }
        Ok(())
    }

    /// `max_t √(1 + α²β² − αμ)` over rounds `1..=T`.
    pub fn contraction_factor(&self, beta: f64, mu: f64) -> f64 {
        (1..=self.rounds)
            .map(|t| {
                let a = self.alpha(t);
                (1.0 + a * a * beta * beta - a * mu).sqrt()
            })
            .fold(0.0, f64::max)
    }
}

fn alpha_cap(beta: f64, mu: f64) -> f64 {
    1.0f64.min(mu / (beta * beta))
}
