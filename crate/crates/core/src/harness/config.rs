//! JSON run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversary::AttackSpec;
use crate::error::{Error, Result};
use crate::hashing::{PrimeField, MERSENNE_61};
use crate::numerics::{Logistic, LossModel};
use crate::topology::GraphSpec;
use crate::validation::BoundSchedule;

/// A field that is either given or computed from honest calibration runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Setting<T, K> {
    Value(T),
    Auto(K),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibrate {
    Calibrate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Oracle {
    Oracle,
}

pub type Calibrated<T> = Setting<T, Calibrate>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossSpec {
    /// Explicit per-agent means.
    Quadratic { means: Vec<Vec<f64>>, noise_std: f64 },
    /// Agents below `n/2` centered at `+separation·e₁`, the rest at `−separation·e₁`.
    CliqueQuadratic { dim: usize, separation: f64, noise_std: f64 },
    /// Synthetic logistic regression, one feature center per agent.
    Logistic { reg: f64, centers: Vec<Vec<f64>>, truth: Vec<f64>, points_per_agent: usize, data_seed: u64 },
}

impl LossSpec {
    pub fn build(&self, n: usize) -> Result<LossModel> {
        match self {
            LossSpec::Quadratic { means, noise_std } => LossModel::quadratic(means.clone(), *noise_std),
            LossSpec::CliqueQuadratic { dim, separation, noise_std } => {
                if *dim == 0 {
                    return Err(Error::InvalidParameter("dim must be positive".into()));
                }
                let means = (0..n)
                    .map(|v| {
                        let mut m = vec![0.0; *dim];
                        m[0] = if v < n / 2 { *separation } else { -*separation };
                        m
                    })
                    .collect();
                LossModel::quadratic(means, *noise_std)
            }
            LossSpec::Logistic { reg, centers, truth, points_per_agent, data_seed } => {
                LossModel::logistic(Logistic::synthetic(*reg, centers, truth, *points_per_agent, *data_seed)?)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    #[default]
    None,
    CoordinateMedian,
}

/// How calibration runs are drawn and how much slack is added.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSpec {
    pub runs: usize,
    /// Calibration run `i` uses seed `seed + i`.
    pub seed: u64,
    pub bound_margin: f64,
    pub epsilon_margin: f64,
    pub tolerance_margin: f64,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        CalibrationSpec { runs: 8, seed: 1 << 32, bound_margin: 2.0, epsilon_margin: 1.5, tolerance_margin: 2.0 }
    }
}

fn default_field() -> u64 {
    MERSENNE_61
}

fn calibrate<T>() -> Calibrated<T> {
    Setting::Auto(Calibrate::Calibrate)
}

fn oracle() -> Setting<f64, Oracle> {
    Setting::Auto(Oracle::Oracle)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub graph: GraphSpec,
    /// Seed for random graph families; the run seed when absent.
    #[serde(default)]
    pub graph_seed: Option<u64>,
    pub loss: LossSpec,
    /// Mini-batch size `K`.
    pub batch: usize,
    /// Number of learning rounds `T`.
    pub rounds: usize,
    #[serde(default)]
    pub alpha0: Option<f64>,
    #[serde(default)]
    pub eta0: Option<f64>,
    #[serde(default = "calibrate")]
    pub gamma: Calibrated<f64>,
    #[serde(default = "calibrate")]
    pub epsilon: Calibrated<f64>,
    #[serde(default = "oracle")]
    pub delta: Setting<f64, Oracle>,
    #[serde(default = "calibrate")]
    pub bounds: Calibrated<BoundSchedule>,
    /// Classification tolerance on mean squared distances.
    #[serde(default = "calibrate")]
    pub tolerance: Calibrated<f64>,
    #[serde(default)]
    pub calibration: CalibrationSpec,
    #[serde(default)]
    pub attack: AttackSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub baseline: Baseline,
    #[serde(default = "default_field")]
    pub field_modulus: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { String::new() } else { path }, e.inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let config: RunConfig = serde_path_to_error::deserialize(value)
            .map_err(|e| Error::config(e.path().to_string(), e.inner().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn field(&self) -> Result<PrimeField> {
        PrimeField::new(self.field_modulus).map_err(|e| Error::config("field_modulus", e.to_string()))
    }

    fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::config("batch", "must be positive"));
        }
        if self.rounds < 2 {
            return Err(Error::config("rounds", "validation needs at least two rounds"));
        }
        if let Setting::Value(g) = self.gamma {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::config("gamma", format!("{g} not in [0, 1)")));
            }
        }
        for (name, v) in [("epsilon", &self.epsilon), ("tolerance", &self.tolerance)] {
            if let Setting::Value(v) = v {
                if !(*v >= 0.0 && v.is_finite()) {
                    return Err(Error::config(name, format!("{v} must be finite and ≥ 0")));
                }
            }
        }
        if let Setting::Value(d) = self.delta {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::config("delta", format!("{d} must be finite and ≥ 0")));
            }
        }
        if let Setting::Value(b) = &self.bounds {
            if b.model.len() != self.rounds + 1 || b.gradient.len() != self.rounds + 1 {
                return Err(Error::config("bounds", format!("need {} entries per list", self.rounds + 1)));
            }
        }
        let c = &self.calibration;
        if c.runs == 0 {
            return Err(Error::config("calibration.runs", "must be positive"));
        }
        if !(c.bound_margin >= 1.0 && c.epsilon_margin >= 1.0 && c.tolerance_margin >= 1.0) {
            return Err(Error::config("calibration", "margins must be ≥ 1"));
        }
        self.field()?;
        Ok(())
    }

    /// Whether any parameter needs honest calibration runs.
    pub fn needs_calibration(&self) -> bool {
        matches!(self.gamma, Setting::Auto(_))
            || matches!(self.epsilon, Setting::Auto(_))
            || matches!(self.bounds, Setting::Auto(_))
            || matches!(self.tolerance, Setting::Auto(_))
    }
}
