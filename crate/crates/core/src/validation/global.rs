//! Global validation: discounted final-gradient estimates and the
//! consistency, optimality and heterogeneity checks.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::Transcript;
use crate::numerics::{norm, Fixed, ModelVec};
use crate::topology::Graph;
use crate::validation::{
    byzantine_set, validated_broadcast, Cause, Payload, Phase, PhaseRelay, ValidationBehavior,
    Verdicts,
};

/// `(ĝ, ℓ̂)` for one directed edge.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub g_hat: ModelVec,
    pub ell_hat: Fixed,
}

/// Normalized weights `w_i = γ^{T−1−i}(1−γ)/(1−γ^{T−1})` for `i = 1..T−1`.
pub fn estimate_weights(rounds: usize, gamma: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!("gamma {gamma} not in [0, 1)")));
    }
    if rounds < 2 {
        return Err(Error::InvalidParameter("estimates need at least two rounds".into()));
    }
    let m = rounds - 1;
    if gamma == 0.0 {
        let mut w = vec![0.0; m];
        w[m - 1] = 1.0;
        return Ok(w);
    }
    let norm = (1.0 - gamma) / (1.0 - gamma.powi(m as i32));
    Ok((1..=m).map(|i| gamma.powi((m - i) as i32) * norm).collect())
}

/// Weighted estimate from the gradient sequence `g^(1..T−1)`.
pub fn estimate_from_sequence(gradients: &[&[Fixed]], weights: &[f64]) -> Result<GradientEstimate> {
    let d = gradients.first().map_or(0, |g| g.len());
    let mut g_hat = vec![0.0; d];
    let mut ell_hat = 0.0;
    for (g, &w) in gradients.iter().zip(weights) {
        for (acc, v) in g_hat.iter_mut().zip(g.iter()) {
            *acc += w * v.to_f64();
        }
        ell_hat += w * norm(g);
    }
    Ok(GradientEstimate { g_hat: ModelVec::from_f64(&g_hat)?, ell_hat: Fixed::from_f64(ell_hat)? })
}

fn edge_estimate(tr: &Transcript, edge: usize, weights: &[f64]) -> Result<GradientEstimate> {
    let seq: Vec<&[Fixed]> = (1..tr.rounds()).map(|t| tr.g(edge, t)).collect();
    estimate_from_sequence(&seq, weights)
}

/// Estimates each receiver computes for its incoming edges:
/// `result[w][j]` is for the edge `N(w)[j] → w`.
pub fn estimate_final_gradients(
    graph: &Graph,
    tr: &Transcript,
    gamma: f64,
) -> Result<Vec<Vec<GradientEstimate>>> {
    let weights = estimate_weights(tr.rounds(), gamma)?;
    (0..graph.n())
        .map(|w| {
            graph
                .neighbors(w)
                .iter()
                .map(|&u| edge_estimate(tr, tr.edge(u, w).expect("edge exists"), &weights))
                .collect()
        })
        .collect()
}

/// One estimate per sender, read off its first outgoing edge. For honest
/// transcripts every outgoing edge gives the same value.
pub fn sender_estimates(graph: &Graph, tr: &Transcript, gamma: f64) -> Result<Vec<GradientEstimate>> {
    let weights = estimate_weights(tr.rounds(), gamma)?;
    (0..graph.n())
        .map(|u| edge_estimate(tr, tr.edge(u, graph.neighbors(u)[0]).expect("edge exists"), &weights))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalStats {
    /// `‖(1/|V|) Σ_u ĝ*_u‖`.
    pub optimality: f64,
    /// `(1/|V|) Σ_u (ℓ̂*_u)²`.
    pub heterogeneity: f64,
}

pub fn global_statistics(star: &[GradientEstimate]) -> GlobalStats {
    let n = star.len() as f64;
    let d = star.first().map_or(0, |e| e.g_hat.dim());
    let mut mean = vec![0.0; d];
    let mut het = 0.0;
    for e in star {
        for (acc, v) in mean.iter_mut().zip(e.g_hat.iter()) {
            *acc += v.to_f64();
        }
        let l = e.ell_hat.to_f64();
        het += l * l;
    }
    let opt = mean.iter().map(|v| (v / n) * (v / n)).sum::<f64>().sqrt();
    GlobalStats { optimality: opt, heterogeneity: het / n }
}

/// Causes raised by the optimality and heterogeneity checks.
pub fn failed_checks(stats: &GlobalStats, delta: f64, epsilon: f64) -> Vec<Cause> {
    let mut out = Vec::new();
    if stats.optimality > epsilon {
        out.push(Cause::OptimalityCheck);
    }
    if stats.heterogeneity > delta + epsilon {
        out.push(Cause::HeterogeneityCheck);
    }
    out
}

/// Broadcasts every receiver's estimates, then runs the three checks at every
/// agent. Returns the statistics seen by the lowest-id honest agent that
/// could compute them.
pub fn global_validate(
    graph: &Graph,
    estimates: &[Vec<GradientEstimate>],
    delta: f64,
    epsilon: f64,
    behavior: &dyn ValidationBehavior,
    verdicts: &mut Verdicts,
) -> Option<GlobalStats> {
    let n = graph.n();
    let byz = byzantine_set(n, behavior);
    let outcomes: Vec<_> = (0..n)
        .map(|w| {
            let payload = Payload::Estimates(Arc::new(estimates[w].clone()));
            validated_broadcast(graph, w, payload, &byz, &mut PhaseRelay { behavior, phase: Phase::Estimates })
        })
        .collect();
    let mut reported = None;
    for checker in 0..n {
        let mut bundles = Vec::with_capacity(n);
        for o in &outcomes {
            match &o.received[checker] {
                Some(Payload::Estimates(e)) if !o.flagged[checker] && e.len() == graph.degree(bundles.len()) => {
                    bundles.push(e.clone())
                }
                _ => break,
            }
        }
        if bundles.len() < n {
            verdicts.flag(checker, Cause::BroadcastConflict);
            continue;
        }
        let pos = |w: usize, u: usize| graph.neighbors(w).binary_search(&u).expect("edge exists");
        let mut star = Vec::with_capacity(n);
        for u in 0..n {
            let receivers = graph.neighbors(u);
            let first = &bundles[receivers[0]][pos(receivers[0], u)];
            if receivers[1..].iter().any(|&w| bundles[w][pos(w, u)] != *first) {
                break;
            }
            star.push(first.clone());
        }
        if star.len() < n {
            verdicts.flag(checker, Cause::ConsistencyCheck);
            continue;
        }
        let stats = global_statistics(&star);
        for cause in failed_checks(&stats, delta, epsilon) {
            verdicts.flag(checker, cause);
        }
        if reported.is_none() && !behavior.is_byzantine(checker) {
            reported = Some(stats);
        }
    }
    reported
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validation::HonestValidation;

    fn fx(v: &[f64]) -> ModelVec {
        ModelVec::from_f64(v).unwrap()
    }

    #[test]
    fn weights_examples() {
        assert_eq!(estimate_weights(5, 0.0).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
        let w = estimate_weights(3, 0.5).unwrap();
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-15 && (w[1] - 2.0 / 3.0).abs() < 1e-15);
        let w = estimate_weights(200, 0.97).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(estimate_weights(5, 1.0).is_err());
        assert!(estimate_weights(5, -0.1).is_err());
        assert!(estimate_weights(1, 0.5).is_err());
    }

    #[test]
    fn estimate_examples() {
        let (g1, g2) = (fx(&[3.0, 0.0]), fx(&[0.0, 3.0]));
        let e = estimate_from_sequence(&[&g1, &g2], &estimate_weights(3, 0.5).unwrap()).unwrap();
        assert!((e.g_hat[0].to_f64() - 1.0).abs() < 1e-9);
        assert!((e.g_hat[1].to_f64() - 2.0).abs() < 1e-9);
        let c = fx(&[0.6, -0.8]);
        let seq = vec![&c[..]; 9];
        let e = estimate_from_sequence(&seq, &estimate_weights(10, 0.8).unwrap()).unwrap();
        assert!((e.g_hat[0].to_f64() - 0.6).abs() < 1e-9);
        assert!((e.ell_hat.to_f64() - 1.0).abs() < 1e-9);
        let e = estimate_from_sequence(&[&g1, &g2], &estimate_weights(3, 0.0).unwrap()).unwrap();
        assert_eq!(e.g_hat, g2);
    }

    #[test]
    fn zero_sum_estimates_pass_optimality() {
        let est = |v: f64| GradientEstimate { g_hat: fx(&[v]), ell_hat: Fixed::from_f64(v.abs()).unwrap() };
        let stats = global_statistics(&[est(1.0), est(-1.0)]);
        assert_eq!(stats.optimality, 0.0);
        assert_eq!(stats.heterogeneity, 1.0);
        assert!(failed_checks(&stats, 1.0, 1e-9).is_empty());
        assert_eq!(failed_checks(&stats, 0.5, 0.1), vec![Cause::HeterogeneityCheck]);
    }

    #[test]
    fn inconsistent_reports_fail_consistency() {
        let g = crate::topology::ring(4).unwrap();
        let ok = GradientEstimate { g_hat: fx(&[0.0]), ell_hat: Fixed::ZERO };
        let mut est = vec![vec![ok.clone(); 2]; 4];
        let mut verdicts = Verdicts::new(4);
        assert!(global_validate(&g, &est, 0.0, 0.0, &HonestValidation, &mut verdicts).is_some());
        assert!(verdicts.states.iter().all(|s| s.is_top()));
        // Receiver 1 disagrees with receiver 3 about node 0.
        est[1][0].ell_hat = Fixed::ULP;
        let mut verdicts = Verdicts::new(4);
        assert!(global_validate(&g, &est, 0.0, 0.0, &HonestValidation, &mut verdicts).is_none());
        assert!((0..4).all(|v| verdicts.fired.contains(&(v, Cause::ConsistencyCheck))));
    }
}
