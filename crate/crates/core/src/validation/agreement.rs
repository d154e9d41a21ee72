//! Validation-state agreement: `|E|` rounds of ⊥ flooding.

use crate::topology::Graph;
use crate::validation::{Cause, ValidationBehavior, ValidationState};

/// States after every round; entry 0 is the input.
pub fn agreement_trace(
    graph: &Graph,
    initial: &[ValidationState],
    behavior: &dyn ValidationBehavior,
) -> Vec<Vec<ValidationState>> {
    let n = graph.n();
    let rounds = graph.edge_count();
    let mut trace = Vec::with_capacity(rounds + 1);
    trace.push(initial.to_vec());
    for r in 1..=rounds {
        let prev = &trace[r - 1];
        let mut next = prev.clone();
        for to in 0..n {
            let alarmed = graph.neighbors(to).iter().any(|&from| {
                let own = !prev[from].is_top();
                if behavior.is_byzantine(from) {
                    behavior.report_bottom(r, from, to, own)
                } else {
                    own
                }
            });
            if alarmed {
                next[to].set_bottom(Cause::AgreementPropagation);
            }
        }
        trace.push(next);
    }
    trace
}

pub fn state_agreement(
    graph: &Graph,
    initial: &[ValidationState],
    behavior: &dyn ValidationBehavior,
) -> Vec<ValidationState> {
    agreement_trace(graph, initial, behavior).pop().expect("trace is nonempty")
}
