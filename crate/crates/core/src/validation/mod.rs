//! The validation phase: validated broadcast, local transcript checks,
//! global gradient checks, state agreement and outcome classification.

pub mod agreement;
pub mod broadcast;
pub mod calibrate;
pub mod global;
pub mod local;
pub mod outcome;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use agreement::state_agreement;
pub use broadcast::{validated_broadcast, BroadcastOutcome, BroadcastRun, HonestRelay, RelayBehavior};
pub use calibrate::{
    calibrate_bounds, calibrate_epsilon, calibrate_gamma_max, calibrate_tolerance, mean_sq_distance, BoundSchedule,
};
pub use global::{estimate_final_gradients, global_validate, GlobalStats, GradientEstimate};
pub use local::local_validate;
pub use outcome::{classify_outcome, Classification, Outcome};

use crate::error::{Error, Result};
use crate::hashing::{HashKey, PrimeField, ViewHashes};
use crate::learning::{LearningRun, StepSchedule};
use crate::numerics::ModelVec;
use crate::topology::Graph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Top,
    Bot,
}

/// Which check put an agent into ⊥.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    None,
    BoundViolation,
    BroadcastConflict,
    HashInconsistency,
    ConsistencyCheck,
    OptimalityCheck,
    HeterogeneityCheck,
    AgreementPropagation,
}

impl Cause {
    pub fn name(self) -> &'static str {
        match self {
            Cause::None => "none",
            Cause::BoundViolation => "bound_violation",
            Cause::BroadcastConflict => "broadcast_conflict",
            Cause::HashInconsistency => "hash_inconsistency",
            Cause::ConsistencyCheck => "consistency_check",
            Cause::OptimalityCheck => "optimality_check",
            Cause::HeterogeneityCheck => "heterogeneity_check",
            Cause::AgreementPropagation => "agreement_propagation",
        }
    }

    /// Causes raised by the global gradient checks.
    pub fn is_global(self) -> bool {
        matches!(self, Cause::OptimalityCheck | Cause::HeterogeneityCheck)
    }
}

/// An agent's flag with the first cause that set it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ValidationState {
    pub flag: Flag,
    pub cause: Cause,
}

impl Default for ValidationState {
    fn default() -> Self {
        ValidationState { flag: Flag::Top, cause: Cause::None }
    }
}

impl ValidationState {
    pub fn is_top(&self) -> bool {
        self.flag == Flag::Top
    }

    /// Moves to ⊥. A second call keeps the first cause.
    pub fn set_bottom(&mut self, cause: Cause) {
        if self.flag == Flag::Top {
            self.flag = Flag::Bot;
            self.cause = cause;
        }
    }
}

/// Per-agent states plus every `(agent, cause)` that fired.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Verdicts {
    pub states: Vec<ValidationState>,
    pub fired: BTreeSet<(usize, Cause)>,
}

impl Verdicts {
    pub fn new(n: usize) -> Self {
        Verdicts { states: vec![ValidationState::default(); n], fired: BTreeSet::new() }
    }

    pub fn flag(&mut self, agent: usize, cause: Cause) {
        self.states[agent].set_bottom(cause);
        self.fired.insert((agent, cause));
    }

    pub fn causes(&self) -> BTreeSet<Cause> {
        self.fired.iter().map(|&(_, c)| c).collect()
    }
}

/// Everything sent through validated broadcast during validation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Payload {
    /// A reporter's hashes of its incoming edges under its own key.
    Commit(Arc<Vec<ViewHashes>>),
    Key(HashKey),
    /// A reporter's hashes of its incoming edges under every key, by key owner.
    Cross(Arc<Vec<Vec<ViewHashes>>>),
    /// A reporter's estimates for its incoming edges.
    Estimates(Arc<Vec<GradientEstimate>>),
}

impl Payload {
    /// A copy that differs from `self` in one entry.
    pub fn altered(&self) -> Payload {
        fn bump(h: &mut ViewHashes, field: PrimeField) {
            h.out = field.add(h.out, field.element(1));
        }
        let field = PrimeField::default();
        match self {
            Payload::Commit(h) => {
                let mut h = (**h).clone();
                if let Some(first) = h.first_mut() {
                    bump(first, field);
                }
                Payload::Commit(Arc::new(h))
            }
            Payload::Key(k) => Payload::Key(field.add(*k, field.element(1))),
            Payload::Cross(h) => {
                let mut h = (**h).clone();
                if let Some(first) = h.first_mut().and_then(|v| v.first_mut()) {
                    bump(first, field);
                }
                Payload::Cross(Arc::new(h))
            }
            Payload::Estimates(e) => {
                let mut e = (**e).clone();
                if let Some(first) = e.first_mut() {
                    first.ell_hat = crate::numerics::Fixed::from_raw(first.ell_hat.raw() + 1)
                        .unwrap_or(first.ell_hat);
                }
                Payload::Estimates(Arc::new(e))
            }
        }
    }
}

/// Validation sub-phase, passed to behavior hooks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Commit,
    Keys,
    Cross,
    Estimates,
}

/// How Byzantine agents act during validation. Defaults are honest.
pub trait ValidationBehavior: Sync {
    fn is_byzantine(&self, _agent: usize) -> bool {
        false
    }

    /// Message a Byzantine relay forwards during validated broadcast.
    fn relay(
        &self,
        _phase: Phase,
        _round: usize,
        _from: usize,
        _to: usize,
        held: Option<&Payload>,
    ) -> Option<Payload> {
        held.cloned()
    }

    /// Whether a Byzantine agent reports ⊥ to `to` in agreement round `round`.
    fn report_bottom(&self, _round: usize, _from: usize, _to: usize, own_bottom: bool) -> bool {
        own_bottom
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct HonestValidation;

impl ValidationBehavior for HonestValidation {}

pub(crate) struct PhaseRelay<'a> {
    pub behavior: &'a dyn ValidationBehavior,
    pub phase: Phase,
}

impl RelayBehavior<Payload> for PhaseRelay<'_> {
    fn relay(&mut self, round: usize, from: usize, to: usize, held: Option<&Payload>) -> Option<Payload> {
        self.behavior.relay(self.phase, round, from, to, held)
    }
}

pub(crate) fn byzantine_set(n: usize, behavior: &dyn ValidationBehavior) -> Vec<usize> {
    (0..n).filter(|&v| behavior.is_byzantine(v)).collect()
}

/// Inputs shared by the validation sub-protocols.
#[derive(Clone, Copy, Debug)]
pub struct ValidationParams<'a> {
    pub schedule: &'a StepSchedule,
    pub bounds: &'a BoundSchedule,
    pub field: PrimeField,
    /// Run seed; hash keys are drawn from it.
    pub seed: u64,
    pub gamma: f64,
    pub epsilon: f64,
    pub delta: f64,
}

/// Result of the full validation phase.
#[derive(Clone, Debug)]
pub struct ValidationReport {
    /// Flags before agreement, with every cause that fired.
    pub local: Verdicts,
    /// Flags after agreement.
    pub states: Vec<ValidationState>,
    /// Round-`T` model of each agent that ended ⊤.
    pub final_models: Vec<Option<ModelVec>>,
    /// Global statistics as seen by the lowest-id honest agent.
    pub stats: Option<GlobalStats>,
}

impl ValidationReport {
    /// Every cause that fired before or during agreement.
    pub fn causes(&self) -> BTreeSet<Cause> {
        let mut c = self.local.causes();
        c.extend(self.states.iter().filter(|s| !s.is_top()).map(|s| s.cause));
        c
    }
}

/// Local checks, global checks and agreement, in that order.
pub fn validate_model(
    graph: &Graph,
    run: &LearningRun,
    params: &ValidationParams<'_>,
    behavior: &dyn ValidationBehavior,
) -> Result<ValidationReport> {
    if run.transcript.rounds() < 2 {
        return Err(Error::InvalidParameter("validation needs at least two rounds".into()));
    }
    let mut verdicts = local_validate(graph, &run.transcript, params, behavior)?;
    let estimates = estimate_final_gradients(graph, &run.transcript, params.gamma)?;
    let stats = global_validate(graph, &estimates, params.delta, params.epsilon, behavior, &mut verdicts);
    let states = state_agreement(graph, &verdicts.states, behavior);
    let last = run.states.last().expect("at least one round");
    let final_models = states
        .iter()
        .zip(last)
        .map(|(s, x)| s.is_top().then(|| x.clone()))
        .collect();
    Ok(ValidationReport { local: verdicts, states, final_models, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_cause_sticks() {
        let mut v = Verdicts::new(2);
        v.flag(0, Cause::HashInconsistency);
        v.flag(0, Cause::HeterogeneityCheck);
        assert_eq!(v.states[0].cause, Cause::HashInconsistency);
        assert!(v.states[1].is_top());
        assert_eq!(v.causes().len(), 2);
    }

    #[test]
    fn altered_payloads_differ() {
        let p = Payload::Commit(Arc::new(vec![ViewHashes::default()]));
        assert_ne!(p.altered(), p);
        let k = Payload::Key(PrimeField::default().element(5));
        assert_ne!(k.altered(), k);
    }
}
