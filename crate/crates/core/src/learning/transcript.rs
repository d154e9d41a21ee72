//! Per-edge message histories and their stacked views.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::learning::schedule::StepSchedule;
use crate::numerics::{Fixed, ModelVec};
use crate::topology::Graph;

/// One of the four stacked views of a directed edge, each of length `d·T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum View {
    /// `x^(1..T)`.
    Out,
    /// `x^(0..T−1)`.
    In,
    /// `round(η^(t) x^(t−1))` for `t = 1..T`.
    InEta,
    /// `round(α^(t) g^(t))` for `t = 1..T`.
    Gamma,
}

impl View {
    pub const ALL: [View; 4] = [View::Out, View::In, View::InEta, View::Gamma];
}

/// Messages `(x, g)` on every directed edge for rounds `0..=T`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcript {
    dim: usize,
    rounds: usize,
    /// Directed edges `(from, to)`, grouped by `from` in neighbor order.
    directed: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    neighbors: Vec<Vec<usize>>,
    x: Vec<Vec<Fixed>>,
    g: Vec<Vec<Fixed>>,
}

impl Transcript {
    /// All-zero transcript, which is also the round-0 initialization.
    pub fn new(graph: &Graph, dim: usize, rounds: usize) -> Self {
        let mut directed = Vec::new();
        let mut offsets = Vec::with_capacity(graph.n() + 1);
        let mut neighbors = Vec::with_capacity(graph.n());
        for v in 0..graph.n() {
            offsets.push(directed.len());
            neighbors.push(graph.neighbors(v).to_vec());
            directed.extend(graph.neighbors(v).iter().map(|&u| (v, u)));
        }
        offsets.push(directed.len());
        let len = (rounds + 1) * dim;
        Transcript {
            dim,
            rounds,
            x: vec![vec![Fixed::ZERO; len]; directed.len()],
            g: vec![vec![Fixed::ZERO; len]; directed.len()],
            directed,
            offsets,
            neighbors,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn directed_edges(&self) -> &[(usize, usize)] {
        &self.directed
    }

    /// Index of the directed edge `from → to`.
    pub fn edge(&self, from: usize, to: usize) -> Option<usize> {
        let pos = self.neighbors.get(from)?.binary_search(&to).ok()?;
        Some(self.offsets[from] + pos)
    }

    fn slot(&self, t: usize) -> std::ops::Range<usize> {
        t * self.dim..(t + 1) * self.dim
    }

    pub fn x(&self, edge: usize, t: usize) -> &[Fixed] {
        &self.x[edge][self.slot(t)]
    }

    pub fn g(&self, edge: usize, t: usize) -> &[Fixed] {
        &self.g[edge][self.slot(t)]
    }

    pub fn record(&mut self, edge: usize, t: usize, x: &[Fixed], g: &[Fixed]) -> Result<()> {
        if t == 0 || t > self.rounds {
            return Err(Error::InvalidParameter(format!("round {t} outside 1..={}", self.rounds)));
        }
        if x.len() != self.dim || g.len() != self.dim {
            return Err(Error::InvalidParameter("message dimension mismatch".into()));
        }
        let slot = self.slot(t);
        self.x[edge][slot.clone()].copy_from_slice(x);
        self.g[edge][slot].copy_from_slice(g);
        Ok(())
    }

    /// The flattened view of one directed edge.
    pub fn view(&self, edge: usize, view: View, schedule: &StepSchedule) -> Result<Vec<Fixed>> {
        let d = self.dim;
        let t_max = self.rounds;
        let x = &self.x[edge];
        match view {
            View::Out => Ok(x[d..(t_max + 1) * d].to_vec()),
            View::In => Ok(x[..t_max * d].to_vec()),
            View::InEta => {
                let mut out = Vec::with_capacity(t_max * d);
                for t in 1..=t_max {
                    let eta = schedule.eta_fixed(t)?;
                    for &v in self.x(edge, t - 1) {
                        out.push(eta.mul(v)?);
                    }
                }
                Ok(out)
            }
            View::Gamma => {
                let mut out = Vec::with_capacity(t_max * d);
                for t in 1..=t_max {
                    let alpha = schedule.alpha_fixed(t)?;
                    for &v in self.g(edge, t) {
                        out.push(alpha.mul(v)?);
                    }
                }
                Ok(out)
            }
        }
    }

    /// Text dump: one `t from to x:<raws> g:<raws>` line per round and edge.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.neighbors.len(), self.dim, self.rounds);
        for t in 0..=self.rounds {
            for (e, &(from, to)) in self.directed.iter().enumerate() {
                let _ = write!(out, "{t} {from} {to} x:");
                join_raw(&mut out, self.x(e, t));
                out.push_str(" g:");
                join_raw(&mut out, self.g(e, t));
                out.push('\n');
            }
        }
        out
    }

    /// Parses [`Transcript::to_text`] output against a graph.
    pub fn from_text(graph: &Graph, text: &str) -> Result<Self> {
        let bad = |line: usize, what: &str| Error::InvalidParameter(format!("transcript line {line}: {what}"));
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header"))?;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(1, "malformed header"))?;
        let [n, dim, rounds] = nums[..] else {
            return Err(bad(1, "header needs n, d, T"));
        };
        if n != graph.n() {
            return Err(bad(1, "node count does not match the graph"));
        }
        let mut tr = Transcript::new(graph, dim, rounds);
        for (i, line) in lines {
            let lineno = i + 1;
            let mut parts = line.split_whitespace();
            let mut id = || -> Result<usize> {
                parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(lineno, "expected round and edge"))
            };
            let (t, from, to) = (id()?, id()?, id()?);
            let x = parse_raw(parts.next(), "x:", dim).ok_or_else(|| bad(lineno, "bad x"))??;
            let g = parse_raw(parts.next(), "g:", dim).ok_or_else(|| bad(lineno, "bad g"))??;
            let edge = tr.edge(from, to).ok_or_else(|| bad(lineno, "unknown edge"))?;
            if t > rounds {
                return Err(bad(lineno, "round out of range"));
            }
            let slot = tr.slot(t);
            tr.x[edge][slot.clone()].copy_from_slice(&x);
            tr.g[edge][slot].copy_from_slice(&g);
        }
        Ok(tr)
    }
}

fn join_raw(out: &mut String, values: &[Fixed]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{}", v.raw());
    }
}

fn parse_raw(field: Option<&str>, prefix: &str, dim: usize) -> Option<Result<ModelVec>> {
    let body = field?.strip_prefix(prefix)?;
    let raws: Vec<i64> = body.split(',').map(|s| s.parse().ok()).collect::<Option<_>>()?;
    if raws.len() != dim {
        return None;
    }
    Some(ModelVec::from_raw(&raws))
}
