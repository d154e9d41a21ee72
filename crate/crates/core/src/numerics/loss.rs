//! Loss families and per-agent data distributions.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::fixed::{Fixed, ModelVec};
use crate::rng::{self, Purpose, Stream};

/// One labelled example for the logistic family. Labels are ±1.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPoint {
    pub features: Vec<f64>,
    pub label: f64,
}

/// One draw from an agent's distribution.
#[derive(Clone, Debug, PartialEq)]
pub enum Sample {
    Point(Vec<f64>),
    Labeled(LabeledPoint),
}

/// `f(x, D) = ½‖x − D‖²` with `D ~ Normal(mean_v, noise_std² I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    pub means: Vec<Vec<f64>>,
    pub noise_std: f64,
}

/// `f(x, (a, b)) = log(1 + exp(−b aᵀx)) + (reg/2)‖x‖²`, with `P_v` uniform
/// over the agent's dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Logistic {
    pub reg: f64,
    pub datasets: Vec<Vec<LabeledPoint>>,
}

impl Logistic {
    /// Synthetic datasets: features `Normal(centers_v, I)`, labels drawn from a
    /// logistic model with weights `truth`. Deterministic in `data_seed`.
    pub fn synthetic(
        reg: f64,
        centers: &[Vec<f64>],
        truth: &[f64],
        points_per_agent: usize,
        data_seed: u64,
    ) -> Result<Self> {
        if points_per_agent == 0 {
            return Err(Error::InvalidParameter("logistic dataset is empty".into()));
        }
        let datasets = centers
            .iter()
            .enumerate()
            .map(|(v, center)| {
                if center.len() != truth.len() {
                    return Err(Error::InvalidParameter(format!(
                        "center of agent {v} has dimension {}, expected {}",
                        center.len(),
                        truth.len()
                    )));
                }
                let mut rng = rng::stream(data_seed, v as u64, 0, Purpose::Dataset);
                Ok((0..points_per_agent)
                    .map(|_| {
                        let features: Vec<f64> = center
                            .iter()
                            .map(|c| c + rng.sample::<f64, _>(StandardNormal))
                            .collect();
                        let p = sigmoid(dot(truth, &features));
                        let label = if rng.random::<f64>() < p { 1.0 } else { -1.0 };
                        LabeledPoint { features, label }
                    })
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Logistic { reg, datasets })
    }

    fn point_gradient(&self, point: &LabeledPoint, x: &[f64]) -> Vec<f64> {
        let margin = point.label * dot(&point.features, x);
        let coeff = -point.label * sigmoid(-margin);
        point
            .features
            .iter()
            .zip(x)
            .map(|(a, xi)| coeff * a + self.reg * xi)
            .collect()
    }

    fn point_loss(&self, point: &LabeledPoint, x: &[f64]) -> f64 {
        let margin = point.label * dot(&point.features, x);
        softplus(-margin) + 0.5 * self.reg * dot(x, x)
    }
}

/// A user-supplied family with sampling but no analytic oracle.
pub trait GradientSampler: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;
    fn n_agents(&self) -> usize;
    fn beta(&self) -> f64;
    fn mu(&self) -> f64;
    fn sample(&self, agent: usize, rng: &mut Stream) -> Sample;
    fn gradient(&self, sample: &Sample, x: &[f64]) -> Vec<f64>;
}

#[derive(Clone, Debug)]
pub enum LossModel {
    Quadratic(Quadratic),
    Logistic(Logistic),
    Custom(Arc<dyn GradientSampler>),
}

/// Replacement distribution for one agent.
#[derive(Clone, Debug, PartialEq)]
pub enum AgentDistribution {
    Gaussian { mean: Vec<f64> },
    Dataset(Vec<LabeledPoint>),
}

impl LossModel {
    pub fn quadratic(means: Vec<Vec<f64>>, noise_std: f64) -> Result<Self> {
        let model = LossModel::Quadratic(Quadratic { means, noise_std });
        model.validate()?;
        Ok(model)
    }

    pub fn logistic(logistic: Logistic) -> Result<Self> {
        let model = LossModel::Logistic(logistic);
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if self.n_agents() == 0 {
            return Err(Error::InvalidParameter("loss model has no agents".into()));
        }
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        match self {
            LossModel::Quadratic(q) => {
                if !(q.noise_std >= 0.0 && q.noise_std.is_finite()) {
                    return Err(Error::InvalidParameter("noise_std must be finite and ≥ 0".into()));
                }
                if q.means.iter().any(|m| m.len() != d || m.iter().any(|v| !v.is_finite())) {
                    return Err(Error::InvalidParameter(
                        "agent means must be finite and share one dimension".into(),
                    ));
                }
            }
            LossModel::Logistic(l) => {
                if !(l.reg > 0.0 && l.reg.is_finite()) {
                    return Err(Error::InvalidParameter("reg must be positive".into()));
                }
                for (v, data) in l.datasets.iter().enumerate() {
                    if data.is_empty() {
                        return Err(Error::InvalidParameter(format!("agent {v} has no data")));
                    }
                    if data.iter().any(|p| p.features.len() != d || p.label.abs() != 1.0) {
                        return Err(Error::InvalidParameter(format!(
                            "agent {v} has malformed points"
                        )));
                    }
                }
            }
            LossModel::Custom(_) => {}
        }
        let (beta, mu) = (self.beta(), self.mu());
        if !(mu > 0.0 && beta >= mu) {
            return Err(Error::InvalidParameter(format!(
                "need beta ≥ mu > 0, got beta={beta}, mu={mu}"
            )));
        }
        Ok(())
    }

    pub fn n_agents(&self) -> usize {
        match self {
            LossModel::Quadratic(q) => q.means.len(),
            LossModel::Logistic(l) => l.datasets.len(),
            LossModel::Custom(c) => c.n_agents(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            LossModel::Quadratic(q) => q.means.first().map_or(0, Vec::len),
            LossModel::Logistic(l) => l
                .datasets
                .first()
                .and_then(|d| d.first())
                .map_or(0, |p| p.features.len()),
            LossModel::Custom(c) => c.dim(),
        }
    }

    /// Smoothness constant.
    pub fn beta(&self) -> f64 {
        match self {
            LossModel::Quadratic(_) => 1.0,
            LossModel::Logistic(l) => {
                let max_sq = l
                    .datasets
                    .iter()
                    .flatten()
                    .map(|p| dot(&p.features, &p.features))
                    .fold(0.0, f64::max);
                l.reg + max_sq / 4.0
            }
            LossModel::Custom(c) => c.beta(),
        }
    }

    /// Strong-convexity constant.
    pub fn mu(&self) -> f64 {
        match self {
            LossModel::Quadratic(_) => 1.0,
            LossModel::Logistic(l) => l.reg,
            LossModel::Custom(c) => c.mu(),
        }
    }

    pub fn has_oracle(&self) -> bool {
        !matches!(self, LossModel::Custom(_))
    }

    /// Bound on `E‖∇f(x, D) − E∇f(x)‖²` for a single sample.
    pub fn gradient_variance_bound(&self) -> Result<f64> {
        match self {
            LossModel::Quadratic(q) => Ok(self.dim() as f64 * q.noise_std * q.noise_std),
            // Per-point logistic gradients differ from their mean by at most
            // 2 max‖a‖, since |σ| ≤ 1.
            LossModel::Logistic(l) => {
                let max_sq = l
                    .datasets
                    .iter()
                    .flatten()
                    .map(|p| dot(&p.features, &p.features))
                    .fold(0.0, f64::max);
                Ok(4.0 * max_sq)
            }
            LossModel::Custom(_) => Err(Error::UnsupportedOracle),
        }
    }

    /// Variance of `f(x, D)` for one sample at `x`.
    pub fn loss_variance(&self, agent: usize, x: &[f64]) -> Result<f64> {
        match self {
            LossModel::Quadratic(q) => {
                let s2 = q.noise_std * q.noise_std;
                let dist_sq = sq_dist(x, &q.means[agent]);
                Ok(0.5 * x.len() as f64 * s2 * s2 + s2 * dist_sq)
            }
            LossModel::Logistic(l) => {
                let data = &l.datasets[agent];
                let losses: Vec<f64> = data.iter().map(|p| l.point_loss(p, x)).collect();
                let mean = losses.iter().sum::<f64>() / losses.len() as f64;
                Ok(losses.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / losses.len() as f64)
            }
            LossModel::Custom(_) => Err(Error::UnsupportedOracle),
        }
    }

    /// Draws one sample from `P_v`.
    pub fn draw(&self, agent: usize, rng: &mut Stream) -> Sample {
        match self {
            LossModel::Quadratic(q) => Sample::Point(
                q.means[agent]
                    .iter()
                    .map(|m| m + q.noise_std * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            ),
            LossModel::Logistic(l) => {
                let data = &l.datasets[agent];
                Sample::Labeled(data[rng.random_range(0..data.len())].clone())
            }
            LossModel::Custom(c) => c.sample(agent, rng),
        }
    }

    /// `∇_x f(x, D)` for one sample.
    pub fn gradient(&self, sample: &Sample, x: &[f64]) -> Vec<f64> {
        match (self, sample) {
            (LossModel::Quadratic(_), Sample::Point(d)) => {
                x.iter().zip(d).map(|(xi, di)| xi - di).collect()
            }
            (LossModel::Logistic(l), Sample::Labeled(p)) => l.point_gradient(p, x),
            (LossModel::Custom(c), s) => c.gradient(s, x),
            _ => panic!("sample kind does not match loss family"),
        }
    }

    /// Averaged gradient over a mini-batch, rounded to fixed point.
    pub fn minibatch_gradient(&self, samples: &[Sample], x: &[Fixed]) -> Result<ModelVec> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter("empty mini-batch".into()));
        }
        let xf: Vec<f64> = x.iter().map(|v| v.to_f64()).collect();
        let mut sum = vec![0.0; xf.len()];
        for s in samples {
            for (acc, g) in sum.iter_mut().zip(self.gradient(s, &xf)) {
                *acc += g;
            }
        }
        let k = samples.len() as f64;
        let avg: Vec<f64> = sum.into_iter().map(|v| v / k).collect();
        ModelVec::from_f64(&avg)
    }

    /// `E_{D∼P_v} ∇f(x, D)`.
    pub fn expected_gradient(&self, agent: usize, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            LossModel::Quadratic(q) => Ok(x.iter().zip(&q.means[agent]).map(|(a, m)| a - m).collect()),
            LossModel::Logistic(l) => {
                let data = &l.datasets[agent];
                let mut sum = vec![0.0; x.len()];
                for p in data {
                    for (acc, g) in sum.iter_mut().zip(l.point_gradient(p, x)) {
                        *acc += g;
                    }
                }
                Ok(sum.into_iter().map(|v| v / data.len() as f64).collect())
            }
            LossModel::Custom(_) => Err(Error::UnsupportedOracle),
        }
    }

    /// The same family with agent `agent` drawing from `dist` instead.
    pub fn with_agent_distribution(&self, agent: usize, dist: AgentDistribution) -> Result<Self> {
        if agent >= self.n_agents() {
            return Err(Error::InvalidParameter(format!("agent {agent} out of range")));
        }
        let mut model = self.clone();
        match (&mut model, dist) {
            (LossModel::Quadratic(q), AgentDistribution::Gaussian { mean }) => {
                q.means[agent] = mean;
            }
            (LossModel::Logistic(l), AgentDistribution::Dataset(data)) => {
                l.datasets[agent] = data;
            }
            _ => {
                return Err(Error::InvalidParameter(
                    "replacement distribution does not match the loss family".into(),
                ))
            }
        }
        model.validate()?;
        Ok(model)
    }
}

/// Mini-batch sampler for one agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AgentDataSource {
    pub agent: usize,
    pub batch: usize,
    pub seed: u64,
}

impl AgentDataSource {
    /// The round-`t` mini-batch. Same `(seed, agent, t)` gives the same batch.
    pub fn minibatch(&self, loss: &LossModel, t: usize) -> Result<Vec<Sample>> {
        if t < 1 {
            return Err(Error::InvalidParameter("rounds start at 1".into()));
        }
        let mut rng = rng::stream(self.seed, self.agent as u64, t as u64, Purpose::Minibatch);
        Ok((0..self.batch).map(|_| loss.draw(self.agent, &mut rng)).collect())
    }

    pub fn stochastic_gradient(&self, loss: &LossModel, x: &[Fixed], t: usize) -> Result<ModelVec> {
        let batch = self.minibatch(loss, t)?;
        loss.minibatch_gradient(&batch, x)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}
