//! Local validation: iterate bounds and keyed hash consistency of transcripts.

use std::sync::Arc;

use crate::error::Result;
use crate::hashing::{EdgeViews, FieldElement, HashKey, PrimeField, ViewHashes};
use crate::learning::{Transcript, View};
use crate::rng::{self, Purpose};
use crate::topology::Graph;
use crate::validation::{
    byzantine_set, validated_broadcast, BroadcastOutcome, Cause, Payload, Phase, PhaseRelay,
    ValidationBehavior, ValidationParams, Verdicts,
};

/// The key agent `v` draws for a run.
pub fn agent_key(field: PrimeField, seed: u64, v: usize) -> HashKey {
    field.random_key(&mut rng::stream(seed, v as u64, 0, Purpose::HashKey))
}

pub fn local_validate(
    graph: &Graph,
    tr: &Transcript,
    params: &ValidationParams<'_>,
    behavior: &dyn ValidationBehavior,
) -> Result<Verdicts> {
    let n = graph.n();
    let field = params.field;
    let mut verdicts = Verdicts::new(n);
    check_bounds(graph, tr, params, &mut verdicts);

    // views[w][j]: the edge N(w)[j] → w, as seen by its receiver w.
    let views: Vec<Vec<EdgeViews>> = (0..n)
        .map(|w| {
            graph
                .neighbors(w)
                .iter()
                .map(|&u| EdgeViews::new(tr, tr.edge(u, w).expect("edge exists"), params.schedule))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let keys: Vec<HashKey> = (0..n).map(|v| agent_key(field, params.seed, v)).collect();
    let byz = byzantine_set(n, behavior);
    let broadcast_all = |phase: Phase, payloads: Vec<Payload>| -> Vec<BroadcastOutcome<Payload>> {
        payloads
            .into_iter()
            .enumerate()
            .map(|(w, p)| validated_broadcast(graph, w, p, &byz, &mut PhaseRelay { behavior, phase }))
            .collect()
    };

    let commits = broadcast_all(
        Phase::Commit,
        (0..n)
            .map(|w| Payload::Commit(Arc::new(views[w].iter().map(|ev| ev.hash(field, keys[w])).collect())))
            .collect(),
    );
    let key_copies = broadcast_all(Phase::Keys, keys.iter().map(|&k| Payload::Key(k)).collect());
    let cross = broadcast_all(
        Phase::Cross,
        (0..n)
            .map(|w| {
                let under: Vec<Vec<ViewHashes>> = (0..n)
                    .map(|k| {
                        let key = match key_copies[k].received[w] {
                            Some(Payload::Key(s)) => s,
                            _ => FieldElement::default(),
                        };
                        views[w].iter().map(|ev| ev.hash(field, key)).collect()
                    })
                    .collect();
                Payload::Cross(Arc::new(under))
            })
            .collect(),
    );
    for outcome in commits.iter().chain(&key_copies).chain(&cross) {
        flag_broadcast(outcome, &mut verdicts);
    }

    for checker in 0..n {
        let mut commit_of = Vec::with_capacity(n);
        let mut cross_of = Vec::with_capacity(n);
        for w in 0..n {
            match (&commits[w].received[checker], &cross[w].received[checker]) {
                (Some(Payload::Commit(c)), Some(Payload::Cross(x))) if x.len() == n => {
                    commit_of.push(c.clone());
                    cross_of.push(x.clone());
                }
                _ => {
                    verdicts.flag(checker, Cause::BroadcastConflict);
                    break;
                }
            }
        }
        if cross_of.len() < n {
            continue;
        }
        let consistent = (0..n).all(|w| cross_of[w][w] == *commit_of[w])
            && (0..n).all(|k| hashes_consistent(graph, field, |w| &cross_of[w][k]));
        if !consistent {
            verdicts.flag(checker, Cause::HashInconsistency);
        }
    }
    Ok(verdicts)
}

fn check_bounds(graph: &Graph, tr: &Transcript, params: &ValidationParams<'_>, verdicts: &mut Verdicts) {
    let b = params.bounds;
    for v in 0..graph.n() {
        'edges: for &u in graph.neighbors(v) {
            let e = tr.edge(u, v).expect("edge exists");
            for t in 1..=tr.rounds() {
                if !b.admits(t, tr.x(e, t), tr.g(e, t)) {
                    verdicts.flag(v, Cause::BoundViolation);
                    break 'edges;
                }
            }
        }
    }
}

fn flag_broadcast(outcome: &BroadcastOutcome<Payload>, verdicts: &mut Verdicts) {
    for (v, (msg, flagged)) in outcome.received.iter().zip(&outcome.flagged).enumerate() {
        if *flagged || msg.is_none() {
            verdicts.flag(v, Cause::BroadcastConflict);
        }
    }
}

/// Checks the per-view agreement across each node's outgoing edges and the
/// linear update identity, for hashes under one key. `reports(w)` lists the
/// hashes of `w`'s incoming edges in neighbor order.
pub fn hashes_consistent<'a>(
    graph: &Graph,
    field: PrimeField,
    reports: impl Fn(usize) -> &'a Vec<ViewHashes>,
) -> bool {
    let pos = |w: usize, v: usize| graph.neighbors(w).binary_search(&v).expect("edge exists");
    for v in 0..graph.n() {
        let receivers = graph.neighbors(v);
        let first = reports(receivers[0])[pos(receivers[0], v)];
        if receivers[1..].iter().any(|&w| reports(w)[pos(w, v)] != first) {
            return false;
        }
        let mut rhs = field.sub(first.inn, first.gamma);
        for (j, _) in receivers.iter().enumerate() {
            let incoming = reports(v)[j].get(View::InEta);
            rhs = field.add(rhs, field.sub(incoming, first.in_eta));
        }
        if rhs != first.out {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::{run_learning, Aggregator, Honest, LearningSetup, StepSchedule};
    use crate::numerics::LossModel;
    use crate::topology::ring;
    use crate::validation::{BoundSchedule, HonestValidation};

    fn honest_run() -> (Graph, StepSchedule, crate::learning::LearningRun) {
        let g = ring(5).unwrap();
        let loss = LossModel::quadratic((0..5).map(|v| vec![v as f64, -1.0]).collect(), 1.0).unwrap();
        let s = StepSchedule::new(0.3, 0.4, 30).unwrap();
        let run = run_learning(
            LearningSetup { graph: &g, loss: &loss, schedule: &s, batch: 3, seed: 1, aggregator: Aggregator::Gossip },
            &Honest,
        )
        .unwrap();
        (g, s, run)
    }

    fn params<'a>(s: &'a StepSchedule, b: &'a BoundSchedule) -> ValidationParams<'a> {
        ValidationParams {
            schedule: s,
            bounds: b,
            field: PrimeField::default(),
            seed: 3,
            gamma: 0.5,
            epsilon: 1.0,
            delta: 1.0,
        }
    }

    #[test]
    fn honest_transcripts_pass() {
        let (g, s, run) = honest_run();
        let b = BoundSchedule::uniform(1e6, 1e6, 30);
        let v = local_validate(&g, &run.transcript, &params(&s, &b), &HonestValidation).unwrap();
        assert!(v.states.iter().all(|s| s.is_top()), "{:?}", v.fired);
    }

    #[test]
    fn oversized_message_trips_bounds() {
        let (g, s, mut run) = honest_run();
        let b = BoundSchedule::uniform(50.0, 1e6, 30);
        let e = run.transcript.edge(2, 3).unwrap();
        let x = crate::numerics::ModelVec::from_f64(&[100.0, 0.0]).unwrap();
        let gr = run.transcript.g(e, 7).to_vec();
        run.transcript.record(e, 7, &x, &gr).unwrap();
        let v = local_validate(&g, &run.transcript, &params(&s, &b), &HonestValidation).unwrap();
        assert!(v.fired.contains(&(3, Cause::BoundViolation)));
        assert!(!v.fired.contains(&(1, Cause::BoundViolation)));
        // The altered message also breaks hash consistency for everyone.
        assert!((0..5).all(|c| v.fired.contains(&(c, Cause::HashInconsistency))));
    }
}
