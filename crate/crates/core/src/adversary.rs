//! Byzantine strategies. An [`Adversary`] plays the Byzantine agents in both
//! the learning and the validation phase and may read every message sent so
//! far.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::{Deviation, HonestStep, LearningBehavior, StepSchedule, Transcript};
use crate::numerics::{global_minimizer, heterogeneity, AgentDistribution, Fixed, LossModel, ModelVec};
use crate::rng::{self, Purpose};
use crate::topology::{check_source_component, Graph};
use crate::validation::global::estimate_weights;
use crate::validation::{Payload, Phase, ValidationBehavior};

/// Which part of a message an equivocating agent alters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    #[default]
    Model,
    Gradient,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    #[default]
    None,
    /// Adds `N(0, σ²)` noise to the model every round and folds it into the
    /// reported gradient so the transcript stays consistent.
    Gaussian { sigma: f64 },
    /// Runs the honest protocol on data with these means (quadratic losses),
    /// one per Byzantine agent.
    Benign { means: Vec<Vec<f64>> },
    /// Sends `x + magnitude·e₁` (or `g + magnitude·e₁`) to the lowest-id
    /// neighbor in the given rounds.
    Equivocate {
        rounds: Vec<usize>,
        magnitude: f64,
        #[serde(default)]
        channel: Channel,
    },
    /// Relays altered copies of every validated-broadcast payload.
    BroadcastTamper,
    /// Reports ⊥ to `targets` in agreement round `round` only.
    LateAlarm { round: usize, targets: Vec<usize> },
    /// Adds `vector` to the model once, in round `round`, folded into the
    /// reported gradient like the Gaussian attack.
    Perturb { round: usize, vector: Vec<f64> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    #[serde(default)]
    pub byzantine: Vec<usize>,
    #[serde(default)]
    pub strategy: Strategy,
    /// Accept Byzantine sets that disconnect the honest agents, and benign
    /// distributions outside the heterogeneity budget.
    #[serde(default)]
    pub allow_assumption_violation: bool,
}

impl AttackSpec {
    pub fn none() -> Self {
        AttackSpec::default()
    }

    pub fn is_none(&self) -> bool {
        self.byzantine.is_empty() || self.strategy == Strategy::None
    }
}

/// The Byzantine agents of one run.
#[derive(Clone, Debug)]
pub struct Adversary {
    byzantine: Vec<bool>,
    strategy: Strategy,
    seed: u64,
    data: Option<LossModel>,
}

impl Adversary {
    /// Checks `spec` against the graph and loss model.
    pub fn new(spec: &AttackSpec, graph: &Graph, loss: &LossModel, delta: f64, seed: u64) -> Result<Self> {
        let n = graph.n();
        let mut byzantine = vec![false; n];
        for &b in &spec.byzantine {
            if b >= n {
                return Err(Error::InvalidParameter(format!("byzantine agent {b} out of range")));
            }
            if std::mem::replace(&mut byzantine[b], true) {
                return Err(Error::InvalidParameter(format!("byzantine agent {b} listed twice")));
            }
        }
        if spec.byzantine.len() >= n {
            return Err(Error::InvalidParameter("at least one agent must be honest".into()));
        }
        if !spec.allow_assumption_violation && !check_source_component(graph, &spec.byzantine) {
            return Err(Error::InvalidParameter(
                "removing the byzantine agents disconnects the honest agents".into(),
            ));
        }
        let d = loss.dim();
        let mut data = None;
        match &spec.strategy {
            Strategy::None | Strategy::BroadcastTamper => {}
            Strategy::Gaussian { sigma } => {
                if !(*sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::InvalidParameter(format!("sigma {sigma} must be finite and ≥ 0")));
                }
            }
            Strategy::Equivocate { magnitude, rounds, .. } => {
                if !(*magnitude >= 0.0 && magnitude.is_finite()) {
                    return Err(Error::InvalidParameter(format!("magnitude {magnitude} must be finite and ≥ 0")));
                }
                if rounds.contains(&0) {
                    return Err(Error::InvalidParameter("rounds start at 1".into()));
                }
            }
            Strategy::LateAlarm { round, targets } => {
                if *round == 0 {
                    return Err(Error::InvalidParameter("agreement rounds start at 1".into()));
                }
                if let Some(t) = targets.iter().find(|&&t| t >= n) {
                    return Err(Error::InvalidParameter(format!("alarm target {t} out of range")));
                }
            }
            Strategy::Perturb { round, vector } => {
                if *round == 0 || vector.len() != d {
                    return Err(Error::InvalidParameter(format!(
                        "perturbation needs a round ≥ 1 and a {d}-vector"
                    )));
                }
            }
            Strategy::Benign { means } => {
                if means.len() != spec.byzantine.len() {
                    return Err(Error::InvalidParameter(format!(
                        "benign attack needs {} means, got {}",
                        spec.byzantine.len(),
                        means.len()
                    )));
                }
                let mut q = loss.clone();
                for (&b, mean) in spec.byzantine.iter().zip(means) {
                    q = q.with_agent_distribution(b, AgentDistribution::Gaussian { mean: mean.clone() })?;
                }
                let het = heterogeneity(&q, &global_minimizer(&q)?)?;
                if het > delta && !spec.allow_assumption_violation {
                    return Err(Error::InvalidParameter(format!(
                        "benign distributions have heterogeneity {het} above delta {delta}"
                    )));
                }
                data = Some(q);
            }
        }
        let strategy = if spec.byzantine.is_empty() { Strategy::None } else { spec.strategy.clone() };
        Ok(Adversary { byzantine, strategy, seed, data })
    }

    pub fn honest(n: usize) -> Self {
        Adversary { byzantine: vec![false; n], strategy: Strategy::None, seed: 0, data: None }
    }

    pub fn byzantine(&self) -> Vec<usize> {
        (0..self.byzantine.len()).filter(|&v| self.byzantine[v]).collect()
    }

    pub fn strategy(&self) -> &Strategy {
        &self.strategy
    }

    /// Loss model with every Byzantine distribution swapped in, for benign attacks.
    pub fn attacked_loss(&self) -> Option<&LossModel> {
        self.data.as_ref()
    }

    fn gaussian_noise(&self, agent: usize, t: usize, d: usize, sigma: f64) -> Result<ModelVec> {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut rng = rng::stream(self.seed, agent as u64, t as u64, Purpose::Attack);
        let z: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
        ModelVec::from_f64(&z)
    }
}

/// Keeps `next + z` and reports a gradient `g̃` with
/// `round(α g̃) = round(α g) − z`, so the linear update identity still holds.
pub fn fold_perturbation(graph: &Graph, agent: usize, step: &HonestStep, z: &[Fixed]) -> Result<Deviation> {
    let state = step.next.checked_add(z)?;
    let scaled = crate::numerics::fixed::scale(&step.gradient, step.alpha)?;
    let mut reported = Vec::with_capacity(z.len());
    for ((&g, &s), &zi) in step.gradient.iter().zip(scaled.iter()).zip(z) {
        reported.push(if zi == Fixed::ZERO {
            g
        } else {
            Fixed::mul_preimage(step.alpha, s.checked_sub(zi)?)?
        });
    }
    let reported = ModelVec::from_fixed(reported);
    Ok(Deviation { sent: vec![(state.clone(), reported); graph.degree(agent)], state })
}

impl LearningBehavior for Adversary {
    fn is_byzantine(&self, agent: usize) -> bool {
        self.byzantine[agent]
    }

    fn data_model(&self, agent: usize) -> Option<&LossModel> {
        self.data.as_ref().filter(|_| self.byzantine[agent])
    }

    fn deviate(
        &self,
        graph: &Graph,
        _history: &Transcript,
        agent: usize,
        step: &HonestStep,
    ) -> Result<Option<Deviation>> {
        let d = step.next.dim();
        match &self.strategy {
            Strategy::Gaussian { sigma } if *sigma > 0.0 => {
                let z = self.gaussian_noise(agent, step.t, d, *sigma)?;
                if z.iter().all(|&v| v == Fixed::ZERO) {
                    return Ok(None);
                }
                fold_perturbation(graph, agent, step, &z).map(Some)
            }
            Strategy::Perturb { round, vector } if *round == step.t => {
                let z = ModelVec::from_f64(vector)?;
                fold_perturbation(graph, agent, step, &z).map(Some)
            }
            Strategy::Equivocate { rounds, magnitude, channel } if rounds.contains(&step.t) => {
                let bump = Fixed::from_f64(*magnitude)?;
                if bump == Fixed::ZERO {
                    return Ok(None);
                }
                let mut sent = vec![(step.next.clone(), step.gradient.clone()); graph.degree(agent)];
                let target = match channel {
                    Channel::Model => &mut sent[0].0,
                    Channel::Gradient => &mut sent[0].1,
                };
                let mut e1 = vec![Fixed::ZERO; d];
                e1[0] = bump;
                *target = target.checked_add(&e1)?;
                Ok(Some(Deviation { state: step.next.clone(), sent }))
            }
            _ => Ok(None),
        }
    }
}

impl ValidationBehavior for Adversary {
    fn is_byzantine(&self, agent: usize) -> bool {
        self.byzantine[agent]
    }

    fn relay(&self, _phase: Phase, _round: usize, _from: usize, _to: usize, held: Option<&Payload>) -> Option<Payload> {
        match self.strategy {
            Strategy::BroadcastTamper => held.map(Payload::altered),
            _ => held.cloned(),
        }
    }

    fn report_bottom(&self, round: usize, _from: usize, to: usize, own_bottom: bool) -> bool {
        match &self.strategy {
            // Benign agents follow the protocol to the letter.
            Strategy::Benign { .. } | Strategy::None => own_bottom,
            Strategy::LateAlarm { round: r, targets } => *r == round && targets.contains(&to),
            // Attackers never raise alarms that would expose them.
            _ => false,
        }
    }
}

/// Smallest Gaussian σ whose expected injected gradient mass alone pushes the
/// heterogeneity statistic past `δ + ε`: `σ √d Σ_i w_i/α_i = √(n(δ+ε))`.
pub fn gaussian_sigma(n: usize, d: usize, delta: f64, epsilon: f64, schedule: &StepSchedule, gamma: f64) -> Result<f64> {
    let weights = estimate_weights(schedule.rounds, gamma)?;
    let spread: f64 = weights.iter().enumerate().map(|(i, w)| w / schedule.alpha(i + 1)).sum();
    if spread <= 0.0 {
        return Err(Error::InvalidParameter("empty estimate window".into()));
    }
    Ok((n as f64 * (delta + epsilon)).sqrt() / ((d as f64).sqrt() * spread))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::{run_learning, Aggregator, Honest, LearningSetup};
    use crate::topology::{complete, ring};

    fn setup<'a>(g: &'a Graph, loss: &'a LossModel, s: &'a StepSchedule) -> LearningSetup<'a> {
        LearningSetup { graph: g, loss, schedule: s, batch: 4, seed: 9, aggregator: Aggregator::Gossip }
    }

    fn quad(n: usize) -> LossModel {
        LossModel::quadratic((0..n).map(|v| vec![v as f64 * 0.1, -0.2]).collect(), 1.0).unwrap()
    }

    fn spec(byz: Vec<usize>, strategy: Strategy) -> AttackSpec {
        AttackSpec { byzantine: byz, strategy, allow_assumption_violation: false }
    }

    #[test]
    fn zero_strength_attacks_are_honest() {
        let g = ring(5).unwrap();
        let loss = quad(5);
        let s = StepSchedule::new(0.3, 0.3, 20).unwrap();
        let honest = run_learning(setup(&g, &loss, &s), &Honest).unwrap();
        for strategy in [
            Strategy::Gaussian { sigma: 0.0 },
            Strategy::Equivocate { rounds: vec![3], magnitude: 0.0, channel: Channel::Model },
            Strategy::Benign { means: vec![vec![0.2, -0.2]] },
        ] {
            let adv = Adversary::new(&spec(vec![2], strategy), &g, &loss, 10.0, 1).unwrap();
            let run = run_learning(setup(&g, &loss, &s), &adv).unwrap();
            assert_eq!(run.transcript, honest.transcript);
        }
    }

    #[test]
    fn folded_noise_keeps_the_update_identity() {
        let g = complete(4).unwrap();
        let loss = quad(4);
        let s = StepSchedule::new(0.3, 0.3, 30).unwrap();
        let adv = Adversary::new(&spec(vec![1], Strategy::Gaussian { sigma: 0.01 }), &g, &loss, 1.0, 4).unwrap();
        let run = run_learning(setup(&g, &loss, &s), &adv).unwrap();
        let e = run.transcript.edge(1, 0).unwrap();
        let mut differs = false;
        for t in 1..=30 {
            // x^(t) = y^(t) − round(α g̃), where y mixes the previous round.
            let prev: Vec<&[Fixed]> = g.neighbors(1).iter().map(|&u| run.transcript.x(run.transcript.edge(u, 1).unwrap(), t - 1)).collect();
            let y = crate::learning::mix_step(run.transcript.x(e, t - 1), &prev, s.eta_fixed(t).unwrap()).unwrap();
            let (x, _) = crate::learning::sgd_step(&y, run.transcript.g(e, t), s.alpha_fixed(t).unwrap()).unwrap();
            assert_eq!(&x[..], run.transcript.x(e, t));
            differs |= run.transcript.g(e, t) != &run.gradients[t][1][..];
        }
        assert!(differs);
    }

    #[test]
    fn equivocation_hits_lowest_neighbor_only() {
        let g = ring(5).unwrap();
        let loss = quad(5);
        let s = StepSchedule::new(0.3, 0.3, 10).unwrap();
        let strategy = Strategy::Equivocate { rounds: vec![4], magnitude: Fixed::ULP.to_f64(), channel: Channel::Model };
        let adv = Adversary::new(&spec(vec![2], strategy), &g, &loss, 1.0, 0).unwrap();
        let run = run_learning(setup(&g, &loss, &s), &adv).unwrap();
        let tr = &run.transcript;
        let (to1, to3) = (tr.edge(2, 1).unwrap(), tr.edge(2, 3).unwrap());
        assert_eq!(tr.x(to1, 4)[0].raw(), tr.x(to3, 4)[0].raw() + 1);
        assert_eq!(tr.x(to1, 5), tr.x(to3, 5));
    }

    #[test]
    fn benign_budget_is_enforced() {
        let g = complete(4).unwrap();
        let loss = LossModel::quadratic(vec![vec![0.0]; 4], 1.0).unwrap();
        let far = spec(vec![0], Strategy::Benign { means: vec![vec![10.0]] });
        assert!(Adversary::new(&far, &g, &loss, 1.0, 0).is_err());
        let mut allowed = far.clone();
        allowed.allow_assumption_violation = true;
        assert!(Adversary::new(&allowed, &g, &loss, 1.0, 0).is_ok());
        // Mean 1 among zeros: x* = 1/4, heterogeneity (9/16 + 3/16)/4 = 3/16.
        let near = spec(vec![0], Strategy::Benign { means: vec![vec![1.0]] });
        assert!(Adversary::new(&near, &g, &loss, 0.19, 0).is_ok());
        assert!(Adversary::new(&near, &g, &loss, 0.18, 0).is_err());
    }

    #[test]
    fn rejects_disconnecting_byzantine_sets() {
        let g = ring(5).unwrap();
        let loss = quad(5);
        assert!(Adversary::new(&spec(vec![0, 2], Strategy::BroadcastTamper), &g, &loss, 1.0, 0).is_err());
        assert!(Adversary::new(&spec(vec![0, 1], Strategy::BroadcastTamper), &g, &loss, 1.0, 0).is_ok());
        assert!(Adversary::new(&spec(vec![7], Strategy::None), &g, &loss, 1.0, 0).is_err());
    }

    #[test]
    fn sigma_helper_matches_single_window() {
        let s = StepSchedule::new(0.3, 0.3, 100).unwrap();
        // γ = 0 weighs only round T−1, so σ √d / α(T−1) = √(n(δ+ε)).
        let sigma = gaussian_sigma(20, 2, 1.0, 0.5, &s, 0.0).unwrap();
        let expected = (20.0f64 * 1.5).sqrt() * s.alpha(99) / 2f64.sqrt();
        assert!((sigma - expected).abs() < 1e-12);
        // Spreading weight onto earlier, larger steps needs more noise.
        assert!(gaussian_sigma(20, 2, 1.0, 0.5, &s, 0.9).unwrap() > sigma);
    }

    #[test]
    fn spec_round_trips_through_json() {
        let a = spec(vec![3], Strategy::Equivocate { rounds: vec![1, 2], magnitude: 1.0, channel: Channel::Gradient });
        let text = serde_json::to_string(&a).unwrap();
        assert_eq!(serde_json::from_str::<AttackSpec>(&text).unwrap(), a);
        let parsed: AttackSpec = serde_json::from_str(r#"{"byzantine":[1],"strategy":{"kind":"gaussian","sigma":0.1}}"#).unwrap();
        assert_eq!(parsed.strategy, Strategy::Gaussian { sigma: 0.1 });
    }
}
