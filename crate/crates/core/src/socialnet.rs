//! Undirected interaction networks between players.
//!
//! Connectivity `C` is the edge density `|E| / (n (n - 1) / 2)`. Every
//! generator returns a connected simple graph; random kinds draw from
//! stream 1 of a ChaCha8 generator seeded with the graph seed.

use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rewiring probability of the small-world generator.
pub const SW_REWIRE_P: f64 = 0.1;

const SW_MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Complete,
    Chain,
    Tree,
    Ba,
    Sw,
}

impl GraphKind {
    pub const ALL: [GraphKind; 5] = [
        GraphKind::Complete,
        GraphKind::Chain,
        GraphKind::Tree,
        GraphKind::Ba,
        GraphKind::Sw,
    ];

    /// Whether the seed changes the edge set.
    pub fn is_random(self) -> bool {
        matches!(self, GraphKind::Tree | GraphKind::Ba | GraphKind::Sw)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GraphKind::Complete => "complete",
            GraphKind::Chain => "chain",
            GraphKind::Tree => "tree",
            GraphKind::Ba => "ba",
            GraphKind::Sw => "sw",
        }
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GraphKind {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, GraphError> {
        GraphKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| GraphError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("unknown network kind {0:?} (expected complete, chain, tree, ba or sw)")]
    UnknownKind(String),
    #[error("a network needs at least 2 nodes, got {0}")]
    TooSmall(usize),
    #[error("connectivity C = {c} is not realisable by {kind} with n = {n}; achievable range is [{lo:.4}, {hi:.4}]")]
    Infeasible {
        kind: GraphKind,
        n: usize,
        c: f64,
        lo: f64,
        hi: f64,
    },
    #[error("small-world graph stayed disconnected after {0} attempts")]
    Disconnected(usize),
    #[error("node {index} out of range for n = {n}")]
    NodeOutOfRange { index: usize, n: usize },
    #[error("edge list line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Generator parameters derived from `(kind, n, C)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMeta {
    /// Barabasi-Albert attachment count.
    pub ba_m: Option<usize>,
    /// Small-world lattice degree.
    pub sw_k: Option<usize>,
    pub rewire_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialGraph {
    n: usize,
    adjacency: Vec<Vec<usize>>,
    kind: GraphKind,
    connectivity_target: f64,
    seed: u64,
    meta: GeneratorMeta,
}

fn ba_m(n: usize, c: f64) -> usize {
    ((c * (n - 1) as f64 / 2.0).round() as usize).max(1)
}

fn sw_k(n: usize, c: f64) -> usize {
    let k = 2 * ((c * (n - 1) as f64 / 2.0).round() as usize);
    k.max(2)
}

fn meta_for(kind: GraphKind, n: usize, c: f64) -> GeneratorMeta {
    match kind {
        GraphKind::Ba => GeneratorMeta {
            ba_m: Some(ba_m(n, c)),
            sw_k: None,
            rewire_p: None,
        },
        GraphKind::Sw => GeneratorMeta {
            ba_m: None,
            sw_k: Some(sw_k(n, c)),
            rewire_p: Some(SW_REWIRE_P),
        },
        _ => GeneratorMeta {
            ba_m: None,
            sw_k: None,
            rewire_p: None,
        },
    }
}

fn pairs(n: usize) -> f64 {
    (n * (n - 1)) as f64 / 2.0
}

/// Rejects `C` when the realised mean degree would miss `C (n - 1)` by
/// more than one.
fn check_feasible(kind: GraphKind, n: usize, c: f64) -> Result<(), GraphError> {
    let (edges_of, degree_range): (Box<dyn Fn(usize) -> f64>, (usize, usize)) = match kind {
        GraphKind::Ba => (
            Box::new(move |m| (m * (m - 1) / 2 + (n - m) * m) as f64),
            (1, n - 1),
        ),
        GraphKind::Sw => (Box::new(move |k| (n * k / 2) as f64), (2, n - 1)),
        _ => return Ok(()),
    };
    let param = match kind {
        GraphKind::Ba => ba_m(n, c),
        _ => sw_k(n, c),
    };
    let infeasible = || {
        let (lo, hi) = degree_range;
        let (mut lo_c, mut hi_c) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in lo..=hi {
            if kind == GraphKind::Sw && p % 2 == 1 {
                continue;
            }
            let mean_degree = 2.0 * edges_of(p) / n as f64;
            lo_c = lo_c.min((mean_degree - 1.0) / (n - 1) as f64);
            hi_c = hi_c.max((mean_degree + 1.0) / (n - 1) as f64);
        }
        GraphError::Infeasible {
            kind,
            n,
            c,
            lo: lo_c.max(0.0),
            hi: hi_c.min(1.0),
        }
    };
    if !(c.is_finite() && c > 0.0 && c <= 1.0) {
        return Err(infeasible());
    }
    if param < degree_range.0 || param > degree_range.1 {
        return Err(infeasible());
    }
    let mean_degree = 2.0 * edges_of(param) / n as f64;
    if (mean_degree - c * (n - 1) as f64).abs() > 1.0 {
        return Err(infeasible());
    }
    Ok(())
}

fn graph_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

struct EdgeSet {
    adjacency: Vec<Vec<usize>>,
}

impl EdgeSet {
    fn new(n: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); n],
        }
    }

    fn has(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].contains(&b)
    }

    fn add(&mut self, a: usize, b: usize) {
        debug_assert!(a != b && !self.has(a, b));
        self.adjacency[a].push(b);
        self.adjacency[b].push(a);
    }

    fn remove(&mut self, a: usize, b: usize) {
        self.adjacency[a].retain(|&v| v != b);
        self.adjacency[b].retain(|&v| v != a);
    }

    fn finish(mut self) -> Vec<Vec<usize>> {
        for list in &mut self.adjacency {
            list.sort_unstable();
        }
        self.adjacency
    }
}

fn complete(n: usize) -> Vec<Vec<usize>> {
    (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect()
}

fn chain(n: usize) -> Vec<Vec<usize>> {
    let mut edges = EdgeSet::new(n);
    for i in 1..n {
        edges.add(i - 1, i);
    }
    edges.finish()
}

fn random_tree(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut edges = EdgeSet::new(n);
    for i in 1..n {
        let parent = rng.random_range(0..i);
        edges.add(parent, i);
    }
    edges.finish()
}

/// Preferential attachment grown from an `m`-clique.
fn barabasi_albert(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut edges = EdgeSet::new(n);
    // every edge end point, so a uniform pick is degree-proportional
    let mut ends: Vec<usize> = Vec::with_capacity(2 * n * m);
    for a in 0..m {
        for b in a + 1..m {
            edges.add(a, b);
            ends.extend([a, b]);
        }
    }
    let mut targets = Vec::with_capacity(m);
    for v in m.max(1)..n {
        targets.clear();
        while targets.len() < m {
            let u = if ends.is_empty() {
                rng.random_range(0..v)
            } else {
                *ends.choose(rng).expect("non-empty")
            };
            if !targets.contains(&u) {
                targets.push(u);
            }
        }
        for &u in &targets {
            edges.add(v, u);
            ends.extend([v, u]);
        }
    }
    edges.finish()
}

/// Ring lattice of degree `k` with each edge's far end rewired with
/// probability [`SW_REWIRE_P`].
fn small_world_once(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut edges = EdgeSet::new(n);
    for i in 0..n {
        for j in 1..=k / 2 {
            edges.add(i, (i + j) % n);
        }
    }
    for j in 1..=k / 2 {
        for i in 0..n {
            let far = (i + j) % n;
            if !rng.random_bool(SW_REWIRE_P) || !edges.has(i, far) {
                continue;
            }
            if edges.adjacency[i].len() >= n - 1 {
                continue;
            }
            let target = loop {
                let t = rng.random_range(0..n);
                if t != i && !edges.has(i, t) {
                    break t;
                }
            };
            edges.remove(i, far);
            edges.add(i, target);
        }
    }
    edges.finish()
}

fn is_connected(adjacency: &[Vec<usize>]) -> bool {
    let n = adjacency.len();
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for &u in &adjacency[v] {
            if !seen[u] {
                seen[u] = true;
                count += 1;
                queue.push_back(u);
            }
        }
    }
    count == n
}

/// Builds a network of `kind` on `n` nodes with target density `c`.
///
/// `complete` ignores `c`; `chain` and `tree` have a fixed edge count and
/// keep `c` only as metadata. `ba` and `sw` reject densities they cannot
/// approach within one unit of mean degree.
pub fn generate(kind: GraphKind, n: usize, c: f64, seed: u64) -> Result<SocialGraph, GraphError> {
    if n < 2 {
        return Err(GraphError::TooSmall(n));
    }
    check_feasible(kind, n, c)?;
    let meta = meta_for(kind, n, c);
    let mut rng = graph_rng(seed);
    let adjacency = match kind {
        GraphKind::Complete => complete(n),
        GraphKind::Chain => chain(n),
        GraphKind::Tree => random_tree(n, &mut rng),
        GraphKind::Ba => barabasi_albert(n, meta.ba_m.expect("set for ba"), &mut rng),
        GraphKind::Sw => {
            let k = meta.sw_k.expect("set for sw");
            let mut attempt = 0;
            loop {
                let adj = small_world_once(n, k, &mut rng);
                if is_connected(&adj) {
                    break adj;
                }
                attempt += 1;
                if attempt >= SW_MAX_ATTEMPTS {
                    return Err(GraphError::Disconnected(attempt));
                }
            }
        }
    };
    Ok(SocialGraph {
        n,
        adjacency,
        kind,
        connectivity_target: c,
        seed,
        meta,
    })
}

impl SocialGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn connectivity_target(&self) -> f64 {
        self.connectivity_target
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn meta(&self) -> GeneratorMeta {
        self.meta
    }

    /// Sorted neighbour indices of node `i`.
    pub fn neighbors(&self, i: usize) -> Result<&[usize], GraphError> {
        self.adjacency
            .get(i)
            .map(Vec::as_slice)
            .ok_or(GraphError::NodeOutOfRange { index: i, n: self.n })
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn density(&self) -> f64 {
        self.edge_count() as f64 / pairs(self.n)
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn is_connected(&self) -> bool {
        is_connected(&self.adjacency)
    }

    /// Header `n kind C seed`, then one `i j` line per edge.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {} {} {}", self.n, self.kind, self.connectivity_target, self.seed)?;
        for (i, j) in self.edges() {
            writeln!(out, "{i} {j}")?;
        }
        out.flush()
    }

    pub fn read_edge_list<R: BufRead>(input: R) -> Result<Self, GraphError> {
        let mut lines = input.lines().enumerate();
        let parse_err = |line: usize, message: String| GraphError::Parse { line, message };
        let (n, kind, c, seed) = loop {
            let Some((idx, line)) = lines.next() else {
                return Err(parse_err(1, "missing header".into()));
            };
            let line = line.map_err(|e| GraphError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(parse_err(idx + 1, format!("header needs `n kind C seed`, got {line:?}")));
            }
            let n: usize = fields[0]
                .parse()
                .map_err(|_| parse_err(idx + 1, format!("bad node count {:?}", fields[0])))?;
            let kind: GraphKind = fields[1].parse()?;
            let c: f64 = fields[2]
                .parse()
                .map_err(|_| parse_err(idx + 1, format!("bad connectivity {:?}", fields[2])))?;
            let seed: u64 = fields[3]
                .parse()
                .map_err(|_| parse_err(idx + 1, format!("bad seed {:?}", fields[3])))?;
            break (n, kind, c, seed);
        };
        if n < 2 {
            return Err(GraphError::TooSmall(n));
        }
        let mut edges = EdgeSet::new(n);
        for (idx, line) in lines {
            let line = line.map_err(|e| GraphError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            let (Some(Ok(a)), Some(Ok(b)), None) = (it.next(), it.next(), it.next()) else {
                return Err(parse_err(idx + 1, format!("expected `i j`, got {line:?}")));
            };
            if a >= n || b >= n {
                return Err(parse_err(idx + 1, format!("node out of range for n = {n}")));
            }
            if a == b {
                return Err(parse_err(idx + 1, format!("self-loop at {a}")));
            }
            if edges.has(a, b) {
                return Err(parse_err(idx + 1, format!("duplicate edge {a} {b}")));
            }
            edges.add(a, b);
        }
        let adjacency = edges.finish();
        if !is_connected(&adjacency) {
            return Err(parse_err(0, "graph is not connected".into()));
        }
        Ok(SocialGraph {
            n,
            adjacency,
            kind,
            connectivity_target: c,
            seed,
            meta: meta_for(kind, n, c),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_density_matches_target() {
        let g = generate(GraphKind::Chain, 20, 0.1, 0).unwrap();
        assert_eq!(g.edge_count(), 19);
        assert!((g.density() - 0.1).abs() < 1e-15);
        assert_eq!(g.neighbors(0).unwrap(), &[1]);
        assert_eq!(generate(GraphKind::Chain, 5, 0.1, 0).unwrap().neighbors(0).unwrap(), &[1]);
    }

    #[test]
    fn complete_graph() {
        let g = generate(GraphKind::Complete, 20, 0.3, 9).unwrap();
        assert_eq!(g.edge_count(), 190);
        assert_eq!(g.density(), 1.0);
        let small = generate(GraphKind::Complete, 4, 1.0, 0).unwrap();
        assert_eq!(small.neighbors(2).unwrap(), &[0, 1, 3]);
    }

    #[test]
    fn ba_edge_count() {
        let g = generate(GraphKind::Ba, 20, 0.2, 3).unwrap();
        assert_eq!(g.meta().ba_m, Some(2));
        assert_eq!(g.edge_count(), 2 * 20 - 3);
        assert!((g.density() - 0.2).abs() <= 0.03);
        let tree_like = generate(GraphKind::Ba, 20, 0.1, 3).unwrap();
        assert_eq!(tree_like.meta().ba_m, Some(1));
        assert_eq!(tree_like.edge_count(), 19);
    }

    #[test]
    fn sw_lattice_degree() {
        let g = generate(GraphKind::Sw, 20, 0.2, 1).unwrap();
        assert_eq!(g.meta().sw_k, Some(4));
        assert_eq!(g.edge_count(), 40);
        assert!(g.is_connected());
    }

    #[test]
    fn same_seed_same_edges() {
        for kind in GraphKind::ALL {
            let a = generate(kind, 30, 0.2, 11).unwrap();
            let b = generate(kind, 30, 0.2, 11).unwrap();
            assert_eq!(a, b);
        }
        assert_ne!(
            generate(GraphKind::Tree, 30, 0.1, 1).unwrap().adjacency,
            generate(GraphKind::Tree, 30, 0.1, 2).unwrap().adjacency
        );
    }

    #[test]
    fn infeasible_density_reports_range() {
        match generate(GraphKind::Sw, 20, 0.01, 0) {
            Err(GraphError::Infeasible { lo, hi, .. }) => assert!(lo < hi),
            other => panic!("expected infeasible, got {other:?}"),
        }
        assert!(generate(GraphKind::Ba, 20, 1.5, 0).is_err());
        assert!(generate(GraphKind::Chain, 1, 0.1, 0).is_err());
    }

    #[test]
    fn no_self_loops_and_out_of_range() {
        let g = generate(GraphKind::Ba, 50, 0.08, 5).unwrap();
        for i in 0..50 {
            assert!(!g.neighbors(i).unwrap().contains(&i));
            assert!(!g.neighbors(i).unwrap().is_empty());
        }
        assert!(g.neighbors(50).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = generate(GraphKind::Sw, 25, 0.25, 8).unwrap();
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("25 sw 0.25 8\n"));
        let back = SocialGraph::read_edge_list(buf.as_slice()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn edge_list_rejects_bad_input() {
        let bad = "3 chain 0.5 0\n0 1\n1 1\n";
        assert!(matches!(
            SocialGraph::read_edge_list(bad.as_bytes()),
            Err(GraphError::Parse { line: 3, .. })
        ));
        let split = "4 chain 0.5 0\n0 1\n2 3\n";
        assert!(SocialGraph::read_edge_list(split.as_bytes()).is_err());
    }
}
