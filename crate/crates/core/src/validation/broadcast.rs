//! Validated broadcast: flooding with conflict detection.
//!
//! The source holds the message at round 0. In each of `min(|V|, |E|)`
//! rounds every node forwards what it holds to all neighbors. A node adopts
//! the first non-null value it sees (neighbors are read in id order) and sets
//! its flag when a different non-null value arrives later.

use crate::topology::Graph;

/// What a Byzantine node sends on one edge in one round.
pub trait RelayBehavior<M> {
    /// `held` is what the node would forward if it were honest.
    fn relay(&mut self, round: usize, from: usize, to: usize, held: Option<&M>) -> Option<M>;
}

/// Forwards what it holds.
#[derive(Clone, Copy, Debug, Default)]
pub struct HonestRelay;

impl<M: Clone> RelayBehavior<M> for HonestRelay {
    fn relay(&mut self, _: usize, _: usize, _: usize, held: Option<&M>) -> Option<M> {
        held.cloned()
    }
}

impl<M, F> RelayBehavior<M> for F
where
    F: FnMut(usize, usize, usize, Option<&M>) -> Option<M>,
{
    fn relay(&mut self, round: usize, from: usize, to: usize, held: Option<&M>) -> Option<M> {
        self(round, from, to, held)
    }
}

/// A broadcast in progress, advanced one synchronous round at a time.
#[derive(Clone, Debug)]
pub struct BroadcastRun<'g, M> {
    graph: &'g Graph,
    byzantine: Vec<bool>,
    held: Vec<Option<M>>,
    flagged: Vec<bool>,
    round: usize,
    rounds: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BroadcastOutcome<M> {
    pub received: Vec<Option<M>>,
    pub flagged: Vec<bool>,
}

impl<'g, M: Clone + Eq> BroadcastRun<'g, M> {
    pub fn new(graph: &'g Graph, source: usize, message: M, byzantine: &[usize]) -> Self {
        let n = graph.n();
        let mut held = vec![None; n];
        held[source] = Some(message);
        let mut byz = vec![false; n];
        for &b in byzantine {
            byz[b] = true;
        }
        BroadcastRun {
            graph,
            byzantine: byz,
            held,
            flagged: vec![false; n],
            round: 0,
            rounds: n.min(graph.edge_count()),
        }
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn is_done(&self) -> bool {
        self.round >= self.rounds
    }

    pub fn held(&self, v: usize) -> Option<&M> {
        self.held[v].as_ref()
    }

    pub fn flagged(&self, v: usize) -> bool {
        self.flagged[v]
    }

    /// Runs one round; Byzantine senders are routed through `behavior`.
    pub fn step(&mut self, behavior: &mut dyn RelayBehavior<M>) {
        self.round += 1;
        let n = self.graph.n();
        let mut inbox: Vec<Vec<M>> = vec![Vec::new(); n];
        // Receivers read senders in increasing id order.
        for from in 0..n {
            for &to in self.graph.neighbors(from) {
                let msg = if self.byzantine[from] {
                    behavior.relay(self.round, from, to, self.held[from].as_ref())
                } else {
                    self.held[from].clone()
                };
                if let Some(m) = msg {
                    inbox[to].push(m);
                }
            }
        }
        for (v, msgs) in inbox.into_iter().enumerate() {
            for m in msgs {
                match &self.held[v] {
                    None => self.held[v] = Some(m),
                    Some(h) if *h != m => self.flagged[v] = true,
                    Some(_) => {}
                }
            }
        }
    }

    pub fn run(mut self, behavior: &mut dyn RelayBehavior<M>) -> BroadcastOutcome<M> {
        while !self.is_done() {
            self.step(behavior);
        }
        self.finish()
    }

    pub fn finish(self) -> BroadcastOutcome<M> {
        BroadcastOutcome { received: self.held, flagged: self.flagged }
    }
}

pub fn validated_broadcast<M: Clone + Eq>(
    graph: &Graph,
    source: usize,
    message: M,
    byzantine: &[usize],
    behavior: &mut dyn RelayBehavior<M>,
) -> BroadcastOutcome<M> {
    BroadcastRun::new(graph, source, message, byzantine).run(behavior)
}
