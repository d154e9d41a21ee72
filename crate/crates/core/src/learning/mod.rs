//! The learning phase: gossip mixing, a local SGD step, and message exchange.

pub mod schedule;
pub mod transcript;

pub use schedule::StepSchedule;
pub use transcript::{Transcript, View};

use crate::error::{Error, Result};
use crate::numerics::fixed::round_shift;
use crate::numerics::{AgentDataSource, Fixed, LossModel, ModelVec};
use crate::topology::Graph;

/// `y = x_v + Σ_u [round(η x_u) − round(η x_v)]`.
pub fn mix_step(x_v: &[Fixed], neighbors: &[&[Fixed]], eta: Fixed) -> Result<ModelVec> {
    let own = crate::numerics::fixed::scale(x_v, eta)?;
    let mut y = ModelVec::from_fixed(x_v.to_vec());
    for &x_u in neighbors {
        let theirs = crate::numerics::fixed::scale(x_u, eta)?;
        y = y.checked_add(&theirs)?.checked_sub(&own)?;
    }
    Ok(y)
}

/// Returns `(y − round(α g), round(α g))`.
pub fn sgd_step(y: &[Fixed], g: &[Fixed], alpha: Fixed) -> Result<(ModelVec, ModelVec)> {
    let step = crate::numerics::fixed::scale(g, alpha)?;
    let x = ModelVec::from_fixed(y.to_vec()).checked_sub(&step)?;
    Ok((x, step))
}

/// Coordinate-wise median of `values`; even counts average the middle pair.
pub fn coordinate_median(values: &[&[Fixed]]) -> Result<ModelVec> {
    let Some(first) = values.first() else {
        return Err(Error::InvalidParameter("median of nothing".into()));
    };
    let mut out = Vec::with_capacity(first.len());
    let mut column = Vec::with_capacity(values.len());
    for i in 0..first.len() {
        column.clear();
        column.extend(values.iter().map(|v| v[i].raw()));
        column.sort_unstable();
        let m = column.len();
        let raw = if m % 2 == 1 {
            column[m / 2]
        } else {
            round_shift(column[m / 2 - 1] as i128 + column[m / 2] as i128, 1) as i64
        };
        out.push(Fixed::from_raw(raw)?);
    }
    Ok(ModelVec::from_fixed(out))
}

/// How an agent combines its model with its neighbors' before the SGD step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Aggregator {
    #[default]
    Gossip,
    CoordinateMedian,
}

/// What an honest agent would do in round `t`.
#[derive(Clone, Debug)]
pub struct HonestStep {
    pub t: usize,
    pub alpha: Fixed,
    pub previous: ModelVec,
    pub mixed: ModelVec,
    pub gradient: ModelVec,
    pub next: ModelVec,
}

/// A Byzantine agent's replacement for its honest step.
#[derive(Clone, Debug)]
pub struct Deviation {
    /// The state the agent keeps for the next round.
    pub state: ModelVec,
    /// `(x, g)` sent to each neighbor, in neighbor id order.
    pub sent: Vec<(ModelVec, ModelVec)>,
}

/// Per-agent behavior during learning. Everything defaults to honest.
pub trait LearningBehavior: Sync {
    fn is_byzantine(&self, _agent: usize) -> bool {
        false
    }

    /// Distribution the agent samples from instead of its own.
    fn data_model(&self, _agent: usize) -> Option<&LossModel> {
        None
    }

    /// Called for Byzantine agents after the honest step is computed, with
    /// read access to every message sent so far.
    fn deviate(
        &self,
        _graph: &Graph,
        _history: &Transcript,
        _agent: usize,
        _step: &HonestStep,
    ) -> Result<Option<Deviation>> {
        Ok(None)
    }
}

/// No deviations.
#[derive(Clone, Copy, Debug, Default)]
pub struct Honest;

impl LearningBehavior for Honest {}

/// Output of the learning phase.
#[derive(Clone, Debug)]
pub struct LearningRun {
    pub transcript: Transcript,
    /// `states[t][v]`: the model agent `v` holds after round `t`.
    pub states: Vec<Vec<ModelVec>>,
    /// `gradients[t][v]`: the gradient agent `v` computed in round `t`.
    pub gradients: Vec<Vec<ModelVec>>,
}

#[derive(Clone, Copy, Debug)]
pub struct LearningSetup<'a> {
    pub graph: &'a Graph,
    pub loss: &'a LossModel,
    pub schedule: &'a StepSchedule,
    pub batch: usize,
    pub seed: u64,
    pub aggregator: Aggregator,
}

/// Runs rounds `1..=T` from all-zero models.
pub fn run_learning(setup: LearningSetup<'_>, behavior: &dyn LearningBehavior) -> Result<LearningRun> {
    let LearningSetup { graph, loss, schedule, batch, seed, aggregator } = setup;
    let n = graph.n();
    let d = loss.dim();
    let rounds = schedule.rounds;
    if loss.n_agents() != n {
        return Err(Error::InvalidParameter(format!(
            "loss model has {} agents but the graph has {n} nodes",
            loss.n_agents()
        )));
    }
    if batch == 0 {
        return Err(Error::InvalidParameter("mini-batch size must be positive".into()));
    }
    let mut transcript = Transcript::new(graph, d, rounds);
    let mut states = vec![vec![ModelVec::zeros(d); n]];
    let mut gradients = vec![vec![ModelVec::zeros(d); n]];
    for t in 1..=rounds {
        let alpha = schedule.alpha_fixed(t)?;
        let eta = schedule.eta_fixed(t)?;
        let prev = &states[t - 1];
        let mut next_states = Vec::with_capacity(n);
        let mut next_grads = Vec::with_capacity(n);
        let mut outgoing = Vec::with_capacity(n);
        for v in 0..n {
            let received: Vec<&[Fixed]> = graph
                .neighbors(v)
                .iter()
                .map(|&u| transcript.x(transcript.edge(u, v).expect("edge exists"), t - 1))
                .collect();
            let mixed = match aggregator {
                Aggregator::Gossip => mix_step(&prev[v], &received, eta)?,
                Aggregator::CoordinateMedian => {
                    let mut all = received.clone();
                    all.push(&prev[v]);
                    coordinate_median(&all)?
                }
            };
            let data = behavior.data_model(v).unwrap_or(loss);
            let source = AgentDataSource { agent: v, batch, seed };
            let gradient = source.stochastic_gradient(data, &mixed, t)?;
            let (next, _) = sgd_step(&mixed, &gradient, alpha)?;
            let step = HonestStep { t, alpha, previous: prev[v].clone(), mixed, gradient, next };
            let deviation = if behavior.is_byzantine(v) {
                behavior.deviate(graph, &transcript, v, &step)?
            } else {
                None
            };
            match deviation {
                Some(dev) => {
                    if dev.sent.len() != graph.degree(v) {
                        return Err(Error::InvalidParameter(format!(
                            "agent {v} deviation sends {} messages to {} neighbors",
                            dev.sent.len(),
                            graph.degree(v)
                        )));
                    }
                    outgoing.push(dev.sent);
                    next_states.push(dev.state);
                }
                None => {
                    outgoing.push(vec![(step.next.clone(), step.gradient.clone()); graph.degree(v)]);
                    next_states.push(step.next);
                }
            }
            next_grads.push(step.gradient);
        }
        for (v, sent) in outgoing.into_iter().enumerate() {
            for (&u, (x, g)) in graph.neighbors(v).iter().zip(sent) {
                let e = transcript.edge(v, u).expect("edge exists");
                transcript.record(e, t, &x, &g)?;
            }
        }
        states.push(next_states);
        gradients.push(next_grads);
    }
    Ok(LearningRun { transcript, states, gradients })
}
