//! Run records, per-round metrics and their file formats.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::harness::experiment::Parameters;
use crate::learning::{LearningRun, StepSchedule};
use crate::numerics::norm;
use crate::topology::Graph;
use crate::validation::{Cause, Classification, Flag, GlobalStats, Outcome};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub n: usize,
    pub max_degree: usize,
    pub edges: Vec<(usize, usize)>,
}

impl GraphSummary {
    pub fn new(g: &Graph) -> Self {
        GraphSummary { n: g.n(), max_degree: g.max_degree(), edges: g.edges().to_vec() }
    }
}

/// Metrics over the honest agents after round `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub t: usize,
    /// `(1/|H|) Σ_v ‖x_v − x*‖²`, when the minimizer is known.
    pub mse: Option<f64>,
    /// `Σ_v ‖x_v − x̄‖²`.
    pub dispersion: f64,
    pub grad_norm_mean: f64,
    pub grad_norm_max: f64,
}

pub fn round_metrics(run: &LearningRun, byzantine: &[usize], xstar: Option<&[f64]>) -> Vec<RoundMetrics> {
    let n = run.states[0].len();
    let honest: Vec<usize> = (0..n).filter(|v| !byzantine.contains(v)).collect();
    let h = honest.len() as f64;
    run.states
        .iter()
        .zip(&run.gradients)
        .enumerate()
        .map(|(t, (states, grads))| {
            let models: Vec<Vec<f64>> = honest.iter().map(|&v| states[v].to_f64()).collect();
            let d = models[0].len();
            let mut mean = vec![0.0; d];
            for x in &models {
                for (m, v) in mean.iter_mut().zip(x) {
                    *m += v / h;
                }
            }
            let sq = |x: &[f64], c: &[f64]| x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            let dispersion = models.iter().map(|x| sq(x, &mean)).sum();
            let mse = xstar.map(|c| models.iter().map(|x| sq(x, c)).sum::<f64>() / h);
            let norms: Vec<f64> = honest.iter().map(|&v| norm(&grads[v])).collect();
            RoundMetrics {
                t,
                mse,
                dispersion,
                grad_norm_mean: norms.iter().sum::<f64>() / h,
                grad_norm_max: norms.iter().copied().fold(0.0, f64::max),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentFlag {
    pub agent: usize,
    pub byzantine: bool,
    pub flag: Flag,
    pub cause: Cause,
}

/// Everything a run produced. Identical `(config, seed)` give identical records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub config_hash: String,
    pub seed: u64,
    pub graph: GraphSummary,
    pub schedule: StepSchedule,
    pub byzantine: Vec<usize>,
    pub x_star: Option<Vec<f64>>,
    /// Validation parameters; absent for baseline runs.
    pub parameters: Option<Parameters>,
    /// Rounds `0..=T`.
    pub rounds: Vec<RoundMetrics>,
    /// Flags after agreement.
    pub flags: Vec<AgentFlag>,
    /// Every `(agent, cause)` raised before agreement.
    pub fired: Vec<(usize, Cause)>,
    pub stats: Option<GlobalStats>,
    pub classification: Option<Classification>,
    /// Not serialized, so records stay byte-identical across repeats.
    #[serde(skip)]
    pub wall_clock: Duration,
}

impl RunRecord {
    pub fn outcome(&self) -> Option<Outcome> {
        self.classification.as_ref().map(|c| c.outcome)
    }

    pub fn final_metrics(&self) -> &RoundMetrics {
        self.rounds.last().expect("round 0 is always recorded")
    }

    pub fn final_mse(&self) -> Option<f64> {
        self.final_metrics().mse
    }

    /// Whether any agent raised `cause` before agreement.
    pub fn fired(&self, cause: Cause) -> bool {
        self.fired.iter().any(|&(_, c)| c == cause)
    }

    /// Distinct causes raised before agreement, in order.
    pub fn causes(&self) -> Vec<Cause> {
        let mut c: Vec<Cause> = self.fired.iter().map(|&(_, c)| c).collect();
        c.sort();
        c.dedup();
        c
    }

    pub fn honest_top(&self) -> usize {
        self.flags.iter().filter(|f| !f.byzantine && f.flag == Flag::Top).count()
    }

    pub fn summary_row(&self) -> SummaryRow {
        let last = self.final_metrics();
        SummaryRow {
            seed: self.seed,
            outcome: self.outcome().map(|o| o.to_string()).unwrap_or_default(),
            final_mse: last.mse,
            final_dispersion: last.dispersion,
            honest: self.graph.n - self.byzantine.len(),
            honest_top: self.honest_top(),
            causes: self.causes().iter().map(|c| c.name()).collect::<Vec<_>>().join(";"),
            config_hash: self.config_hash.clone(),
        }
    }
}

/// One line of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub seed: u64,
    pub outcome: String,
    pub final_mse: Option<f64>,
    pub final_dispersion: f64,
    pub honest: usize,
    pub honest_top: usize,
    pub causes: String,
    pub config_hash: String,
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

#[derive(Serialize)]
struct ConvergenceRow {
    t: usize,
    mse: Option<f64>,
    dispersion: f64,
}

/// Writes `record.json`, `rounds.jsonl`, `summary.csv` and `convergence.csv`
/// into `dir`.
pub fn emit_metrics(record: &RunRecord, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("record.json");
    let mut json = serde_json::to_vec_pretty(record).expect("record serializes");
    json.push(b'\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;

    let path = dir.join("rounds.jsonl");
    let mut out = Vec::new();
    for r in &record.rounds {
        serde_json::to_writer(&mut out, r).expect("metrics serialize");
        out.write_all(b"\n").expect("in-memory write");
    }
    fs::write(&path, out).map_err(|e| Error::io(&path, e))?;

    write_csv(&dir.join("summary.csv"), &[record.summary_row()])?;
    let curve: Vec<ConvergenceRow> = record
        .rounds
        .iter()
        .map(|r| ConvergenceRow { t: r.t, mse: r.mse, dispersion: r.dispersion })
        .collect();
    write_csv(&dir.join("convergence.csv"), &curve)
}
