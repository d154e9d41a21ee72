//! The ten acceptance criteria, each at its stated tolerance. Prints one
//! PASS/FAIL line per criterion and exits nonzero if any fails.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::Rng;
use serde_json::json;
use valid_core::adversary::{gaussian_sigma, Adversary, AttackSpec, Strategy};
use valid_core::harness::{
    emit_metrics, resolve_parameters, run_experiment, run_with_parameters, Baseline, Instance, Parameters, RunConfig,
    RunRecord,
};
use valid_core::hashing::{hash_transcript_views, PrimeField, ViewHashes, MERSENNE_61};
use valid_core::learning::{Aggregator, LearningRun};
use valid_core::numerics::{check_admissible, global_minimizer};
use valid_core::rng::{stream, Purpose};
use valid_core::topology::{check_source_component, Graph};
use valid_core::validation::broadcast::BroadcastRun;
use valid_core::validation::local::hashes_consistent;
use valid_core::validation::{state_agreement, Cause, Flag, Outcome, ValidationBehavior, ValidationState};

use common::{config, two_clique, with_seed, ULP};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn seeds(n: u64) -> impl Iterator<Item = u64> {
    0..n
}

fn run_all(c: &RunConfig, params: &Parameters, n: u64) -> Vec<RunRecord> {
    seeds(n).map(|s| run_with_parameters(&with_seed(c, s), Some(params)).expect("run succeeds")).collect()
}

fn honest_learning(c: &RunConfig, seed: u64) -> (Instance, LearningRun) {
    let inst = Instance::new(c, seed).unwrap();
    let run = inst.learn(c, seed, Aggregator::Gossip, &Adversary::honest(inst.graph.n())).unwrap();
    (inst, run)
}

fn mse(run: &LearningRun, xstar: &[f64]) -> f64 {
    let last = run.states.last().unwrap();
    last.iter()
        .map(|x| x.to_f64().iter().zip(xstar).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum::<f64>()
        / last.len() as f64
}

fn criterion_1() -> Verdict {
    let started = Instant::now();
    let mut errors = Vec::new();
    for t in [250, 500, 1000, 2000] {
        let c = config(two_clique(1.0, t), json!({}));
        let total: f64 = seeds(10)
            .map(|s| {
                let (inst, run) = honest_learning(&c, s);
                mse(&run, &global_minimizer(&inst.loss).unwrap())
            })
            .sum();
        errors.push(total / 10.0);
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[1] / w[0]).collect();
    let elapsed = started.elapsed().as_secs_f64();
    ensure(
        ratios.iter().all(|&r| r <= 0.7) && elapsed < 120.0,
        format!("errors {errors:.4?}, ratios {ratios:.3?}, {elapsed:.1}s"),
    )
}

fn criterion_2() -> Verdict {
    let c = config(two_clique(1.0, 500), json!({}));
    let params = resolve_parameters(&c).unwrap();
    let records = run_all(&c, &params, 50);
    let a = records
        .iter()
        .filter(|r| r.outcome() == Some(Outcome::A) && r.flags.iter().all(|f| f.flag == Flag::Top))
        .count();
    ensure(
        a == 50,
        format!("{a}/50 outcome A with all agents TOP (gamma {:.4}, epsilon {:.4})", params.gamma, params.epsilon),
    )
}

fn criterion_3() -> Verdict {
    let rounds = 500;
    let base = config(two_clique(1.0, rounds), json!({}));
    let params = resolve_parameters(&base).unwrap();
    let mut hits = 0;
    for s in seeds(50) {
        let round = 1 + (s as usize * 97) % rounds;
        let mut c = with_seed(&base, s);
        c.attack = AttackSpec {
            byzantine: vec![(s % 20) as usize],
            strategy: Strategy::Equivocate { rounds: vec![round], magnitude: ULP, channel: Default::default() },
            allow_assumption_violation: false,
        };
        let r = run_with_parameters(&c, Some(&params)).unwrap();
        hits += usize::from(r.outcome() == Some(Outcome::C) && r.fired(Cause::HashInconsistency));
    }
    // Per honest key a nonzero degree-(dT) difference polynomial has at most
    // dT roots; a union over the |V| checked identities gives the bound.
    let bound = (2.0 * rounds as f64 * 20.0) / MERSENNE_61 as f64;
    ensure(hits == 50 && bound < 1e-12, format!("{hits}/50 outcome C via hash_inconsistency, bound {bound:.2e}"))
}

fn criterion_4() -> Verdict {
    let base = config(two_clique(1.0, 500), json!({}));
    let params = resolve_parameters(&base).unwrap();
    let gamma_max = params.gamma_max.expect("gamma is calibrated");
    let sigma_star = {
        let inst = Instance::new(&base, 0).unwrap();
        gaussian_sigma(20, 2, params.delta, params.epsilon, &inst.schedule, params.gamma).unwrap()
    };
    let strong = 1.5 * sigma_star;
    let weak = 0.5 * sigma_star;
    let mut cache: HashMap<(u64, u64), f64> = HashMap::new();
    let mut rate = |sigma: f64, gamma: f64| -> f64 {
        *cache.entry((sigma.to_bits(), gamma.to_bits())).or_insert_with(|| {
            let p = Parameters { gamma, ..params.clone() };
            let mut c = base.clone();
            c.attack = AttackSpec {
                byzantine: vec![3],
                strategy: Strategy::Gaussian { sigma },
                allow_assumption_violation: false,
            };
            let detected = run_all(&c, &p, 50)
                .iter()
                .filter(|r| {
                    r.outcome() == Some(Outcome::C)
                        && (r.fired(Cause::HeterogeneityCheck) || r.fired(Cause::OptimalityCheck))
                })
                .count();
            detected as f64 / 50.0
        })
    };
    let main = rate(strong, params.gamma);
    let by_sigma = [rate(0.0, params.gamma), rate(weak, params.gamma), main];
    let by_gamma = [rate(strong, 0.0), rate(strong, gamma_max / 2.0), rate(strong, gamma_max)];
    let monotone = |r: &[f64]| r.windows(2).all(|w| w[0] <= w[1]);
    ensure(
        main >= 0.95 && monotone(&by_sigma) && monotone(&by_gamma),
        format!(
            "strong sigma {strong:.5}: rate {main:.2}; sigma sweep {by_sigma:?}; gamma sweep {:?} over gamma {:?}",
            by_gamma,
            [0.0, gamma_max / 2.0, gamma_max]
        ),
    )
}

fn criterion_5() -> Verdict {
    let rounds = 500;
    let tolerance = 10.0 / rounds as f64;
    let c = config(
        two_clique(0.1, rounds),
        json!({
            "alpha0": 1.0,
            "delta": 0.03,
            "tolerance": tolerance,
            "attack": {"byzantine": [3], "strategy": {"kind": "benign", "means": [[0.1, 0.5]]}},
        }),
    );
    let params = resolve_parameters(&c).unwrap();
    let inst = Instance::new(&c, 0).unwrap();
    let adv = Adversary::new(&c.attack, &inst.graph, &inst.loss, params.delta, 0).unwrap();
    let xq = global_minimizer(adv.attacked_loss().unwrap()).unwrap();
    let mut ok = 0;
    let mut worst: f64 = 0.0;
    for r in run_all(&c, &params, 50) {
        let Some(cls) = &r.classification else { continue };
        let Some(candidate) = &cls.candidate else { continue };
        let top: Vec<usize> = r.flags.iter().filter(|f| !f.byzantine && f.flag == Flag::Top).map(|f| f.agent).collect();
        let admissible = check_admissible(candidate, &top, &inst.loss, params.delta, tolerance).unwrap().admissible;
        let dist = candidate.iter().zip(&xq).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        worst = worst.max(dist);
        ok += usize::from(cls.outcome == Outcome::B && admissible && dist <= tolerance);
    }
    ensure(ok >= 48, format!("{ok}/50 outcome B, admissible and within {tolerance} of x*(P_H x Q); worst distance {worst:.4}"))
}

fn criterion_6() -> Verdict {
    let field = PrimeField::default();
    let mut rng = stream(6, 0, 0, Purpose::Attack);
    let mut linear = 0;
    for _ in 0..1000 {
        let len = rng.random_range(1..64);
        let a: Vec<i64> = (0..len).map(|_| rng.random_range(-(1i64 << 62)..(1i64 << 62))).collect();
        let b: Vec<i64> = (0..len).map(|_| rng.random_range(-(1i64 << 62)..(1i64 << 62))).collect();
        let sum: Vec<i64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let s = field.random_key(&mut rng);
        linear += usize::from(field.add(field.hash(s, &a), field.hash(s, &b)) == field.hash(s, &sum));
    }
    let c = config(two_clique(1.0, 200), json!({}));
    let mut identity = 0;
    for seed in seeds(10) {
        let (inst, run) = honest_learning(&c, seed);
        let tr = &run.transcript;
        for _ in 0..100 {
            let s = field.random_key(&mut rng);
            let reports: Vec<Vec<ViewHashes>> = (0..inst.graph.n())
                .map(|w| {
                    inst.graph
                        .neighbors(w)
                        .iter()
                        .map(|&u| hash_transcript_views(field, s, tr, tr.edge(u, w).unwrap(), &inst.schedule).unwrap())
                        .collect()
                })
                .collect();
            identity += usize::from(hashes_consistent(&inst.graph, field, |w| &reports[w]));
        }
    }
    ensure(linear == 1000 && identity == 1000, format!("linearity {linear}/1000, honest identity {identity}/1000"))
}

/// Every connected labeled graph on `n` nodes.
fn connected_graphs(n: usize) -> Vec<Graph> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    (0u32..1 << pairs.len())
        .filter_map(|mask| {
            let chosen: Vec<_> = pairs.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &p)| p).collect();
            Graph::new(n, &chosen).ok()
        })
        .collect()
}

struct Silent(usize);

impl ValidationBehavior for Silent {
    fn is_byzantine(&self, v: usize) -> bool {
        v == self.0
    }
    fn report_bottom(&self, _: usize, _: usize, _: usize, _: bool) -> bool {
        false
    }
}

#[derive(Default)]
struct Exhaustive {
    cases: usize,
    end_states: usize,
    raw_violations: usize,
    violations: usize,
    example: Option<String>,
}

type Key = (usize, Vec<Option<u8>>, Vec<bool>);

/// Explores every per-round, per-neighbor choice in {nothing, 0, 1, 2} of
/// Byzantine relay `b`, merging identical broadcast states.
fn explore(
    run: &BroadcastRun<'_, u8>,
    g: &Graph,
    source: usize,
    b: usize,
    seen: &mut std::collections::HashSet<Key>,
    stats: &mut Exhaustive,
) {
    let n = g.n();
    let key: Key = (run.round(), (0..n).map(|v| run.held(v).copied()).collect(), (0..n).map(|v| run.flagged(v)).collect());
    if !seen.insert(key) {
        return;
    }
    if run.is_done() {
        stats.end_states += 1;
        let honest = (0..n).filter(|&v| v != b);
        let raw_ok = honest.clone().all(|v| run.flagged(v) || run.held(v) == Some(&0));
        stats.raw_violations += usize::from(!raw_ok);
        if !raw_ok && stats.example.is_none() {
            let fooled: Vec<usize> = honest.clone().filter(|&v| !run.flagged(v) && run.held(v) != Some(&0)).collect();
            let flagged: Vec<usize> = honest.clone().filter(|&v| run.flagged(v)).collect();
            stats.example = Some(format!(
                "edges {:?}, source {source}, relay {b}, unflagged wrong {fooled:?}, flagged {flagged:?}",
                g.edges()
            ));
        }
        // A flagged or empty-handed honest agent enters agreement as ⊥.
        let init: Vec<ValidationState> = (0..n)
            .map(|v| {
                let mut s = ValidationState::default();
                if v != b && (run.flagged(v) || run.held(v).is_none()) {
                    s.set_bottom(Cause::BroadcastConflict);
                }
                s
            })
            .collect();
        let end = state_agreement(g, &init, &Silent(b));
        let ok = honest.clone().all(|v| !end[v].is_top() || run.held(v) == Some(&0));
        stats.violations += usize::from(!ok);
        return;
    }
    let nb = g.neighbors(b);
    let choices = 4usize.pow(nb.len() as u32);
    for code in 0..choices {
        let mut next = run.clone();
        let mut relay = |_: usize, _: usize, to: usize, _: Option<&u8>| -> Option<u8> {
            let j = nb.binary_search(&to).unwrap();
            match (code / 4usize.pow(j as u32)) % 4 {
                3 => None,
                m => Some(m as u8),
            }
        };
        next.step(&mut relay);
        explore(&next, g, source, b, seen, stats);
    }
}

fn criterion_7() -> Verdict {
    let mut stats = Exhaustive::default();
    for n in 2..=5 {
        for g in connected_graphs(n) {
            for source in 0..n {
                for b in (0..n).filter(|&b| b != source) {
                    if !check_source_component(&g, &[b]) {
                        continue;
                    }
                    stats.cases += 1;
                    let run = BroadcastRun::new(&g, source, 0u8, &[b]);
                    explore(&run, &g, source, b, &mut Default::default(), &mut stats);
                }
            }
        }
    }
    ensure(
        stats.violations == 0 && stats.cases > 0,
        format!(
            "{} (graph, source, relay) cases, {} terminal states, {} violations after agreement ({} fooled-without-flag states before agreement, first: {})",
            stats.cases,
            stats.end_states,
            stats.violations,
            stats.raw_violations,
            stats.example.as_deref().unwrap_or("none")
        ),
    )
}

fn criterion_8() -> Verdict {
    let tau = 50;
    let c = config(two_clique(1.0, 300), json!({}));
    let mut worst_ratio: f64 = 0.0;
    let mut checked = 0;
    for seed in seeds(5) {
        let (inst, clean) = honest_learning(&c, seed);
        let (beta, mu) = (inst.loss.beta(), inst.loss.mu());
        assert!((1..=inst.schedule.rounds).all(|t| inst.schedule.alpha(t) < mu / (beta * beta)));
        let gbar = inst.schedule.contraction_factor(beta, mu);
        let spec = AttackSpec {
            byzantine: vec![(seed * 7 % 20) as usize],
            strategy: Strategy::Perturb { round: tau, vector: vec![0.6, 0.8] },
            allow_assumption_violation: false,
        };
        let adv = Adversary::new(&spec, &inst.graph, &inst.loss, 1.0, seed).unwrap();
        let perturbed = inst.learn(&c, seed, Aggregator::Gossip, &adv).unwrap();
        for t in tau + 1..=inst.schedule.rounds {
            let diff: f64 = clean.states[t]
                .iter()
                .zip(&perturbed.states[t])
                .map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x.to_f64() - y.to_f64()).powi(2)).sum::<f64>())
                .sum::<f64>()
                .sqrt();
            worst_ratio = worst_ratio.max(diff / gbar.powi((t - tau) as i32));
            checked += 1;
        }
    }
    ensure(worst_ratio <= 1.05, format!("max ||dX||_F / gbar^(t-tau) = {worst_ratio:.4} over {checked} rounds"))
}

fn criterion_9() -> Verdict {
    let c = config(two_clique(1.0, 500), json!({}));
    let params = resolve_parameters(&c).unwrap();
    let mut wins = 0;
    let mut pairs = Vec::new();
    for s in seeds(10) {
        let valid = run_with_parameters(&with_seed(&c, s), Some(&params)).unwrap().final_mse().unwrap();
        let mut b = with_seed(&c, s);
        b.baseline = Baseline::CoordinateMedian;
        let median = run_experiment(&b).unwrap().final_mse().unwrap();
        wins += usize::from(valid < median);
        pairs.push((valid, median));
    }
    let (v, m) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / 10.0, b + y / 10.0));
    ensure(wins == 10, format!("{wins}/10 seeds lower; mean mse {v:.4} vs median baseline {m:.4}"))
}

fn files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn criterion_10() -> Verdict {
    let base = two_clique(1.0, 300);
    let configs = [
        config(base.clone(), json!({"seed": 11})),
        config(base.clone(), json!({"seed": 12, "attack": {"byzantine": [3], "strategy": {"kind": "gaussian", "sigma": 0.004}}})),
        config(base.clone(), json!({"seed": 13, "attack": {"byzantine": [5], "strategy": {"kind": "equivocate", "rounds": [40], "magnitude": ULP}}})),
        config(two_clique(0.1, 300), json!({"seed": 14, "alpha0": 1.0, "delta": 0.03, "attack": {"byzantine": [3], "strategy": {"kind": "benign", "means": [[0.1, 0.5]]}}})),
        config(base, json!({"seed": 15, "baseline": "coordinate_median"})),
    ];
    let tmp = tempfile::tempdir().unwrap();
    let mut identical = 0;
    for (i, c) in configs.iter().enumerate() {
        let dirs = [tmp.path().join(format!("{i}a")), tmp.path().join(format!("{i}b"))];
        for d in &dirs {
            emit_metrics(&run_experiment(c).unwrap(), d).unwrap();
        }
        let (a, b) = (files(&dirs[0]), files(&dirs[1]));
        identical += usize::from(a == b && a.len() == 4);
    }
    ensure(identical == configs.len(), format!("{identical}/{} configs byte-identical on repeat", configs.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("O(1/T) convergence", criterion_1),
        ("completeness", criterion_2),
        ("equivocation soundness", criterion_3),
        ("gaussian-attack detection", criterion_4),
        ("benign-attack admissibility", criterion_5),
        ("hash properties", criterion_6),
        ("broadcast agreement", criterion_7),
        ("perturbation contraction", criterion_8),
        ("median baseline trend", criterion_9),
        ("determinism", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let label = format!("criterion {} ({name})", i + 1);
        if !filter.is_empty() && !filter.iter().any(|p| label.contains(p.as_str())) {
            continue;
        }
        let started = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS {label}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {label}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
