//! Undirected communication graphs and structural checks.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

const ER_MAX_ATTEMPTS: usize = 1000;

/// Simple connected undirected graph on nodes `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from unordered pairs. Rejects self-loops, duplicates and
    /// disconnected graphs.
    pub fn new(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let g = Graph::unchecked(n, pairs)?;
        if !g.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(g)
    }

    fn unchecked(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph has no nodes".into()));
        }
        let mut set = BTreeSet::new();
        for &(u, v) in pairs {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!("edge ({u}, {v}) out of range")));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at {u}")));
            }
            if !set.insert((u.min(v), u.max(v))) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({u}, {v})")));
            }
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Graph { n, edges, adjacency })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Neighbors of `v` in increasing id order.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    pub fn is_connected(&self) -> bool {
        self.connected_without(&[])
    }

    /// Connectivity of the subgraph induced on the nodes not in `removed`.
    fn connected_without(&self, removed: &[usize]) -> bool {
        let mut gone = vec![false; self.n];
        for &b in removed {
            gone[b] = true;
        }
        let Some(start) = (0..self.n).find(|&v| !gone[v]) else {
            return true;
        };
        let mut seen = gone.clone();
        seen[start] = true;
        let mut stack = vec![start];
        let mut reached = 1;
        while let Some(v) = stack.pop() {
            for &u in &self.adjacency[v] {
                if !seen[u] {
                    seen[u] = true;
                    reached += 1;
                    stack.push(u);
                }
            }
        }
        reached == self.n - gone.iter().filter(|&&g| g).count()
    }

    /// Hop distance from `source` to every node (`usize::MAX` if unreachable).
    pub fn distances(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n];
        dist[source] = 0;
        let mut queue = std::collections::VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            for &u in &self.adjacency[v] {
                if dist[u] == usize::MAX {
                    dist[u] = dist[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        dist
    }

    /// `n` on the first line, then one `u v` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.n);
        for (u, v) in &self.edges {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let n = lines
            .next()
            .ok_or_else(|| Error::InvalidGraph("empty edge list".into()))?
            .parse::<usize>()
            .map_err(|e| Error::InvalidGraph(format!("node count: {e}")))?;
        let mut pairs = Vec::new();
        for (i, line) in lines.enumerate() {
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(u)), Some(Ok(v)), None) => pairs.push((u, v)),
                _ => {
                    return Err(Error::InvalidGraph(format!(
                        "line {}: expected two node ids",
                        i + 2
                    )))
                }
            }
        }
        Graph::new(n, &pairs)
    }
}

/// True iff removing the Byzantine nodes leaves the rest connected.
pub fn check_source_component(g: &Graph, byzantine: &[usize]) -> bool {
    g.connected_without(byzantine)
}

/// Two 10-cliques joined by two distinct random bridges.
pub fn two_clique_bridge(rng: &mut Stream) -> Graph {
    let mut pairs = Vec::with_capacity(92);
    for base in [0, 10] {
        for i in base..base + 10 {
            for j in i + 1..base + 10 {
                pairs.push((i, j));
            }
        }
    }
    for k in index::sample(rng, 100, 2) {
        pairs.push((k / 10, 10 + k % 10));
    }
    Graph::new(20, &pairs).expect("two cliques with bridges form a connected simple graph")
}

pub fn ring(n: usize) -> Result<Graph> {
    if n < 3 {
        return Err(Error::InvalidGraph("ring needs at least 3 nodes".into()));
    }
    let pairs: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    Graph::new(n, &pairs)
}

pub fn complete(n: usize) -> Result<Graph> {
    let pairs: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    Graph::new(n, &pairs)
}

/// G(n, p), resampled until connected.
pub fn erdos_renyi(n: usize, p: f64, rng: &mut Stream) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("edge probability {p} not in [0, 1]")));
    }
    for _ in 0..ER_MAX_ATTEMPTS {
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p {
                    pairs.push((i, j));
                }
            }
        }
        match Graph::new(n, &pairs) {
            Ok(g) => return Ok(g),
            Err(Error::Disconnected) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::GenerationFailed(ER_MAX_ATTEMPTS))
}

/// Declarative graph family, as written in run configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    TwoCliqueBridge,
    Ring { n: usize },
    Complete { n: usize },
    ErdosRenyi { n: usize, p: f64 },
    EdgeList { n: usize, edges: Vec<(usize, usize)> },
}

pub fn make_graph(spec: &GraphSpec, rng: &mut Stream) -> Result<Graph> {
    match spec {
        GraphSpec::TwoCliqueBridge => Ok(two_clique_bridge(rng)),
        GraphSpec::Ring { n } => ring(*n),
        GraphSpec::Complete { n } => complete(*n),
        GraphSpec::ErdosRenyi { n, p } => erdos_renyi(*n, *p, rng),
        GraphSpec::EdgeList { n, edges } => Graph::new(*n, edges),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose, GLOBAL};

    fn rng(seed: u64) -> Stream {
        stream(seed, GLOBAL, 0, Purpose::Graph)
    }

    #[test]
    fn two_clique_shape() {
        for seed in 0..50 {
            let g = two_clique_bridge(&mut rng(seed));
            assert_eq!(g.n(), 20);
            assert_eq!(g.edge_count(), 92);
            assert!(g.is_connected());
            let cross = g.edges().iter().filter(|(u, v)| (*u < 10) != (*v < 10)).count();
            assert_eq!(cross, 2);
        }
        assert_eq!(two_clique_bridge(&mut rng(4)), two_clique_bridge(&mut rng(4)));
    }

    #[test]
    fn single_removal_matches_bridge_structure() {
        for seed in 0..50 {
            let g = two_clique_bridge(&mut rng(seed));
            let bridges: Vec<_> =
                g.edges().iter().copied().filter(|(u, v)| (*u < 10) != (*v < 10)).collect();
            for b in 0..20 {
                // Disconnects only when every bridge touches b.
                let expect = !bridges.iter().all(|&(u, v)| u == b || v == b);
                assert_eq!(check_source_component(&g, &[b]), expect, "seed {seed} node {b}");
            }
        }
    }

    #[test]
    fn source_component_examples() {
        let path = Graph::new(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(check_source_component(&path, &[]));
        assert!(!check_source_component(&path, &[1]));
        let cycle = ring(4).unwrap();
        for b in 0..4 {
            assert!(check_source_component(&cycle, &[b]));
        }
    }

    #[test]
    fn families() {
        assert_eq!(complete(4).unwrap().edge_count(), 6);
        let r = ring(5).unwrap();
        assert!((0..5).all(|v| r.degree(v) == 2));
        for seed in 0..20 {
            let g = erdos_renyi(10, 0.5, &mut rng(seed)).unwrap();
            assert!(g.is_connected());
            assert!(g.edge_count() <= 45);
        }
        assert!(matches!(erdos_renyi(5, 0.0, &mut rng(0)), Err(Error::GenerationFailed(_))));
    }

    #[test]
    fn rejects_malformed_graphs() {
        assert!(matches!(Graph::new(3, &[(0, 1)]), Err(Error::Disconnected)));
        assert!(Graph::new(2, &[(0, 0)]).is_err());
        assert!(Graph::new(2, &[(0, 1), (1, 0)]).is_err());
        assert!(Graph::new(2, &[(0, 2)]).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = two_clique_bridge(&mut rng(1));
        let text = g.to_edge_list();
        assert!(text.starts_with("20\n"));
        assert_eq!(Graph::from_edge_list(&text).unwrap(), g);
        assert!(Graph::from_edge_list("3\n0 1\n1 x\n").is_err());
    }

    #[test]
    fn spec_serde() {
        let spec: GraphSpec = serde_json::from_str(r#"{"kind":"ring","n":6}"#).unwrap();
        assert_eq!(spec, GraphSpec::Ring { n: 6 });
        let g = make_graph(&spec, &mut rng(0)).unwrap();
        assert_eq!(g.edge_count(), 6);
    }
}
