//! Parameter sweeps over a config field and a seed list.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::adversary::AttackSpec;
use crate::error::{Error, Result};
use crate::harness::config::{Baseline, RunConfig};
use crate::harness::experiment::{resolve_parameters, run_with_parameters, Parameters};
use crate::harness::record::{emit_metrics, write_csv, RunRecord};
use crate::validation::Outcome;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "VALID_THREADS";

/// Reads a CLI value: JSON if it parses, a plain string otherwise.
pub fn parse_value(text: &str) -> Value {
    serde_json::from_str(text.trim()).unwrap_or_else(|_| Value::String(text.trim().to_string()))
}

/// Sets the dot-separated `path` of `config` to `value`. Every segment must
/// already exist; array elements are addressed by index.
pub fn set_field(config: &RunConfig, path: &str, value: Value) -> Result<RunConfig> {
    let mut root = config.to_value();
    let mut slot = &mut root;
    for seg in path.split('.') {
        slot = match slot {
            Value::Object(map) => map.get_mut(seg),
            Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::config(path, "no such field"))?;
    }
    *slot = value;
    RunConfig::from_value(root)
}

#[derive(Clone, Debug)]
pub struct SweepCell {
    pub value: Value,
    pub seed: u64,
    pub record: RunRecord,
}

/// Key under which calibration results can be shared between cells.
fn calibration_key(config: &RunConfig) -> String {
    let mut c = config.clone();
    c.seed = 0;
    c.attack = AttackSpec::none();
    c.baseline = Baseline::None;
    serde_json::to_string(&c.to_value()).expect("config serializes")
}

/// Thread pool sized by [`THREADS_ENV`], or rayon's default.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .parse::<usize>()
            .map_err(|_| Error::InvalidParameter(format!("{THREADS_ENV}={v} is not a thread count")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))
}

/// Runs every `(value, seed)` pair. Cells share calibration when they differ
/// only in seed, attack or baseline.
pub fn run_sweep(base: &RunConfig, vary: &str, values: &[Value], seeds: &[u64]) -> Result<Vec<SweepCell>> {
    let mut configs = Vec::with_capacity(values.len() * seeds.len());
    for value in values {
        let at_value = set_field(base, vary, value.clone())?;
        for &seed in seeds {
            let mut c = at_value.clone();
            c.seed = seed;
            configs.push((value.clone(), c));
        }
    }
    let mut keyed: BTreeMap<String, RunConfig> = BTreeMap::new();
    for (_, c) in &configs {
        if c.baseline == Baseline::None {
            keyed.entry(calibration_key(c)).or_insert_with(|| c.clone());
        }
    }
    let pool = thread_pool()?;
    pool.install(|| {
        let resolved: BTreeMap<String, Parameters> = keyed
            .into_par_iter()
            .map(|(k, c)| resolve_parameters(&c).map(|p| (k, p)))
            .collect::<Result<_>>()?;
        configs
            .into_par_iter()
            .map(|(value, c)| {
                let params = match c.baseline {
                    Baseline::None => Some(&resolved[&calibration_key(&c)]),
                    Baseline::CoordinateMedian => None,
                };
                let record = run_with_parameters(&c, params)?;
                Ok(SweepCell { value, seed: c.seed, record })
            })
            .collect()
    })
}

/// Fraction of cells with honest agents all ⊥ (outcome C).
pub fn detection_rate<'a>(cells: impl IntoIterator<Item = &'a SweepCell>) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for c in cells {
        total += 1;
        hit += usize::from(c.record.outcome() == Some(Outcome::C));
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

#[derive(Serialize)]
struct CellRow {
    value: String,
    seed: u64,
    outcome: String,
    final_mse: Option<f64>,
    final_dispersion: f64,
    honest_top: usize,
    causes: String,
}

#[derive(Serialize)]
struct ValueRow {
    value: String,
    runs: usize,
    detection_rate: f64,
    mean_final_mse: Option<f64>,
    outcome_a: usize,
    outcome_b: usize,
    outcome_c: usize,
    outcome_fail: usize,
}

fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Writes one directory per cell plus `summary.csv` (one row per cell) and
/// `rates.csv` (one row per value).
pub fn write_sweep(cells: &[SweepCell], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rows = Vec::with_capacity(cells.len());
    for (i, cell) in cells.iter().enumerate() {
        emit_metrics(&cell.record, &dir.join(format!("cell_{i:04}")))?;
        let s = cell.record.summary_row();
        rows.push(CellRow {
            value: value_label(&cell.value),
            seed: cell.seed,
            outcome: s.outcome,
            final_mse: s.final_mse,
            final_dispersion: s.final_dispersion,
            honest_top: s.honest_top,
            causes: s.causes,
        });
    }
    write_csv(&dir.join("summary.csv"), &rows)?;

    let mut order: Vec<&Value> = Vec::new();
    for c in cells {
        if !order.contains(&&c.value) {
            order.push(&c.value);
        }
    }
    let rates: Vec<ValueRow> = order
        .into_iter()
        .map(|v| {
            let group: Vec<&SweepCell> = cells.iter().filter(|c| &c.value == v).collect();
            let count = |o: Outcome| group.iter().filter(|c| c.record.outcome() == Some(o)).count();
            let mses: Vec<f64> = group.iter().filter_map(|c| c.record.final_mse()).collect();
            ValueRow {
                value: value_label(v),
                runs: group.len(),
                detection_rate: detection_rate(group.iter().copied()),
                mean_final_mse: (!mses.is_empty()).then(|| mses.iter().sum::<f64>() / mses.len() as f64),
                outcome_a: count(Outcome::A),
                outcome_b: count(Outcome::B),
                outcome_c: count(Outcome::C),
                outcome_fail: count(Outcome::Fail),
            }
        })
        .collect();
    write_csv(&dir.join("rates.csv"), &rates)
}
