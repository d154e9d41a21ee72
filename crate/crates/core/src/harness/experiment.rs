//! One seeded run: calibration, learning, validation and classification.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::Adversary;
use crate::error::{Error, Result};
use crate::harness::config::{Baseline, RunConfig, Setting};
use crate::harness::record::{round_metrics, AgentFlag, GraphSummary, RunRecord};
use crate::learning::{run_learning, Aggregator, Honest, LearningRun, LearningSetup, StepSchedule};
use crate::numerics::{global_minimizer, heterogeneity, LossModel};
use crate::rng::{self, Purpose, GLOBAL};
use crate::topology::{make_graph, Graph};
use crate::validation::calibrate::calibrate_epsilon;
use crate::validation::{
    calibrate_bounds, calibrate_gamma_max, calibrate_tolerance, classify_outcome, validate_model, BoundSchedule,
    ValidationParams,
};

/// Graph, loss model and step sizes for one seed.
#[derive(Clone, Debug)]
pub struct Instance {
    pub graph: Graph,
    pub loss: LossModel,
    pub schedule: StepSchedule,
}

impl Instance {
    pub fn new(config: &RunConfig, seed: u64) -> Result<Self> {
        let graph_seed = config.graph_seed.unwrap_or(seed);
        let graph = make_graph(&config.graph, &mut rng::stream(graph_seed, GLOBAL, 0, Purpose::Graph))?;
        let loss = config.loss.build(graph.n())?;
        let (beta, mu, maxdeg) = (loss.beta(), loss.mu(), graph.max_degree());
        let defaults = StepSchedule::defaults(beta, mu, maxdeg, config.rounds)?;
        let schedule = StepSchedule::new(
            config.alpha0.unwrap_or(defaults.alpha0),
            config.eta0.unwrap_or(defaults.eta0),
            config.rounds,
        )?;
        schedule.check(beta, mu, maxdeg)?;
        Ok(Instance { graph, loss, schedule })
    }

    pub fn learn(&self, config: &RunConfig, seed: u64, aggregator: Aggregator, adversary: &Adversary) -> Result<LearningRun> {
        let setup = LearningSetup {
            graph: &self.graph,
            loss: &self.loss,
            schedule: &self.schedule,
            batch: config.batch,
            seed,
            aggregator,
        };
        if adversary.byzantine().is_empty() {
            run_learning(setup, &Honest)
        } else {
            run_learning(setup, adversary)
        }
    }
}

/// Validation parameters after calibration, recorded with every run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub delta: f64,
    pub epsilon: f64,
    pub gamma: f64,
    /// Largest discount passing the honest heterogeneity check, when calibrated.
    pub gamma_max: Option<f64>,
    /// `γ̄ = max_t √(1 + α_t²β² − α_t μ)`.
    pub contraction_factor: f64,
    pub tolerance: f64,
    pub bounds: BoundSchedule,
    /// Seeds of the honest calibration runs, empty if nothing was calibrated.
    pub calibration_seeds: Vec<u64>,
}

/// Honest learning runs used for calibration.
pub fn calibration_runs(config: &RunConfig) -> Result<Vec<(Graph, LearningRun)>> {
    let c = &config.calibration;
    (0..c.runs as u64)
        .into_par_iter()
        .map(|i| {
            let seed = c.seed + i;
            let inst = Instance::new(config, seed)?;
            let run = inst.learn(config, seed, Aggregator::Gossip, &Adversary::honest(inst.graph.n()))?;
            Ok((inst.graph, run))
        })
        .collect()
}

/// Fills in every calibrated or oracle-derived parameter.
pub fn resolve_parameters(config: &RunConfig) -> Result<Parameters> {
    let reference = Instance::new(config, config.calibration.seed)?;
    let loss = &reference.loss;
    let xstar = global_minimizer(loss)?;
    let delta = match config.delta {
        Setting::Value(d) => d,
        Setting::Auto(_) => heterogeneity(loss, &xstar)?,
    };
    let contraction_factor = reference.schedule.contraction_factor(loss.beta(), loss.mu());
    let runs = if config.needs_calibration() { calibration_runs(config)? } else { Vec::new() };
    let learning: Vec<LearningRun> = runs.iter().map(|(_, r)| r.clone()).collect();
    let bounds = match &config.bounds {
        Setting::Value(b) => b.clone(),
        Setting::Auto(_) => calibrate_bounds(&learning, config.calibration.bound_margin)?,
    };
    let epsilon = match config.epsilon {
        Setting::Value(e) => e,
        Setting::Auto(_) => calibrate_epsilon(&runs, delta, config.calibration.epsilon_margin)?,
    };
    let (gamma, gamma_max) = match config.gamma {
        Setting::Value(g) => (g, None),
        Setting::Auto(_) => {
            let g = calibrate_gamma_max(&runs, delta, epsilon)?;
            (g.min(contraction_factor), Some(g))
        }
    };
    let tolerance = match config.tolerance {
        Setting::Value(t) => t,
        Setting::Auto(_) => calibrate_tolerance(&learning, &xstar, config.calibration.tolerance_margin)?,
    };
    let calibration_seeds = (0..runs.len() as u64).map(|i| config.calibration.seed + i).collect();
    Ok(Parameters { delta, epsilon, gamma, gamma_max, contraction_factor, tolerance, bounds, calibration_seeds })
}

/// Runs `config` at its own seed.
pub fn run_experiment(config: &RunConfig) -> Result<RunRecord> {
    let params = match config.baseline {
        Baseline::None => Some(resolve_parameters(config)?),
        Baseline::CoordinateMedian => None,
    };
    run_with_parameters(config, params.as_ref())
}

/// Runs `config` with parameters resolved beforehand; `None` runs the
/// coordinate-median baseline without validation.
pub fn run_with_parameters(config: &RunConfig, params: Option<&Parameters>) -> Result<RunRecord> {
    let started = Instant::now();
    let seed = config.seed;
    let inst = Instance::new(config, seed)?;
    let delta = match (params, config.delta) {
        (Some(p), _) => p.delta,
        (None, Setting::Value(d)) => d,
        (None, Setting::Auto(_)) => heterogeneity(&inst.loss, &global_minimizer(&inst.loss)?)?,
    };
    let adversary = Adversary::new(&config.attack, &inst.graph, &inst.loss, delta, seed)?;
    let byzantine = adversary.byzantine();
    let aggregator = match (config.baseline, params) {
        (Baseline::CoordinateMedian, _) | (_, None) => Aggregator::CoordinateMedian,
        (Baseline::None, Some(_)) => Aggregator::Gossip,
    };
    let run = inst.learn(config, seed, aggregator, &adversary)?;
    let xstar = global_minimizer(&inst.loss).ok();
    let rounds = round_metrics(&run, &byzantine, xstar.as_deref());

    let mut record = RunRecord {
        config_hash: config_hash(config),
        config: config.clone(),
        seed,
        graph: GraphSummary::new(&inst.graph),
        schedule: inst.schedule,
        byzantine: byzantine.clone(),
        x_star: xstar,
        parameters: params.cloned(),
        rounds,
        flags: Vec::new(),
        fired: Vec::new(),
        stats: None,
        classification: None,
        wall_clock: Default::default(),
    };
    if let (Aggregator::Gossip, Some(p)) = (aggregator, params) {
        if p.bounds.rounds() != config.rounds {
            return Err(Error::config("bounds", "bound schedule length does not match rounds"));
        }
        let vparams = ValidationParams {
            schedule: &inst.schedule,
            bounds: &p.bounds,
            field: config.field()?,
            seed,
            gamma: p.gamma,
            epsilon: p.epsilon,
            delta: p.delta,
        };
        let report = validate_model(&inst.graph, &run, &vparams, &adversary)?;
        let last = run.states.last().expect("rounds ≥ 1");
        record.classification =
            Some(classify_outcome(&byzantine, &report.states, last, &inst.loss, p.delta, p.tolerance)?);
        record.flags = report
            .states
            .iter()
            .enumerate()
            .map(|(v, s)| AgentFlag { agent: v, byzantine: byzantine.contains(&v), flag: s.flag, cause: s.cause })
            .collect();
        record.fired = report.local.fired.iter().copied().collect();
        record.stats = report.stats;
    }
    record.wall_clock = started.elapsed();
    Ok(record)
}

/// Hex SHA-256 of the canonical JSON form of `config`.
pub fn config_hash(config: &RunConfig) -> String {
    use sha2::{Digest, Sha256};
    let bytes = serde_json::to_vec(&config.to_value()).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}
