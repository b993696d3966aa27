//! Bounded-degree undirected graphs: generators, metric queries and growth checks.
//!
//! Infinite graphs are stood in for by finite truncations. Boundary nodes of a
//! truncation simply have fewer neighbors; the update rules only ever look at
//! the neighbors a node actually has.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = usize;

/// An undirected edge, stored with `0 <= u < v`.
pub type Edge = (NodeId, NodeId);

const MAX_GENERATION_ATTEMPTS: u64 = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid graph spec: {0}")]
    InvalidSpec(String),
    #[error("generator produced a disconnected graph in all {0} attempts")]
    Disconnected(u64),
    #[error("graph is not connected")]
    NotConnected,
    #[error("node {node} out of range for a graph with {node_count} nodes")]
    NodeOutOfRange { node: NodeId, node_count: usize },
    #[error("({0}, {1}) is not an edge")]
    NotAnEdge(NodeId, NodeId),
    #[error("self-loop at node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(NodeId, NodeId),
    #[error("node {node} has degree {degree}, above the bound {bound}")]
    DegreeBound {
        node: NodeId,
        degree: usize,
        bound: usize,
    },
    #[error("edge list parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Graph families the toolkit can build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSpec {
    Path { n: usize },
    Cycle { n: usize },
    Grid { width: usize, height: usize },
    Torus { width: usize, height: usize },
    RegularTree { branching: usize, depth: usize },
    RandomRegular { n: usize, degree: usize, seed: u64 },
}

impl GraphSpec {
    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |msg: String| Err(GraphError::InvalidSpec(msg));
        match *self {
            GraphSpec::Path { n } if n < 2 => bad(format!("path needs n >= 2, got {n}")),
            GraphSpec::Cycle { n } if n < 3 => bad(format!("cycle needs n >= 3, got {n}")),
            GraphSpec::Grid { width, height } if width == 0 || height == 0 || width * height < 2 => {
                bad(format!("grid {width}x{height} has fewer than two nodes"))
            }
            GraphSpec::Torus { width, height } if width < 3 || height < 3 => {
                bad(format!("torus needs both sides >= 3, got {width}x{height}"))
            }
            GraphSpec::RegularTree { branching, depth } if branching == 0 || depth == 0 => {
                bad(format!("regular tree needs branching >= 1 and depth >= 1, got ({branching}, {depth})"))
            }
            GraphSpec::RandomRegular { n, degree, .. } => {
                if degree == 0 || degree >= n {
                    bad(format!("random regular needs 0 < d < n, got n={n}, d={degree}"))
                } else if (n * degree) % 2 != 0 {
                    bad(format!("random regular needs n*d even, got n={n}, d={degree}"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Number of nodes the spec produces.
    pub fn node_count(&self) -> usize {
        match *self {
            GraphSpec::Path { n } | GraphSpec::Cycle { n } => n,
            GraphSpec::Grid { width, height } | GraphSpec::Torus { width, height } => width * height,
            GraphSpec::RegularTree { branching, depth } => {
                (0..=depth).map(|level| branching.pow(level as u32)).sum()
            }
            GraphSpec::RandomRegular { n, .. } => n,
        }
    }
}

/// Ball-size growth bounds used for majorization checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrowthProfile {
    /// `f(r) = c * (r + 1)^k`
    Polynomial { c: f64, k: f64 },
    /// `f(r) = exp(r^alpha)`
    StretchedExp { alpha: f64 },
}

impl GrowthProfile {
    pub fn validate(&self) -> Result<(), GraphError> {
        match *self {
            GrowthProfile::Polynomial { c, k } if !(c > 0.0 && k >= 0.0) => Err(
                GraphError::InvalidSpec(format!("polynomial profile needs c > 0, k >= 0, got c={c}, k={k}")),
            ),
            GrowthProfile::StretchedExp { alpha } if !(alpha > 0.0) => Err(GraphError::InvalidSpec(
                format!("stretched exponential needs alpha > 0, got {alpha}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn bound(&self, r: usize) -> f64 {
        let r = r as f64;
        match *self {
            GrowthProfile::Polynomial { c, k } => c * (r + 1.0).powf(k),
            GrowthProfile::StretchedExp { alpha } => r.powf(alpha).exp(),
        }
    }
}

/// Outcome of a majorization scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Majorization {
    pub holds: bool,
    pub witness: Option<MajorizationWitness>,
}

/// The first `(node, radius)` whose ball outgrew the profile, ordered by radius then node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorizationWitness {
    pub node: NodeId,
    pub radius: usize,
    pub ball_size: usize,
    pub bound: f64,
}

/// Connected, simple, undirected graph with dense node ids `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: Vec<Vec<NodeId>>,
    edges: Vec<Edge>,
    degree_bound: usize,
}

impl Graph {
    /// Builds a graph from an edge list, checking simplicity and connectivity.
    /// The degree bound is the maximum degree.
    pub fn from_edges(node_count: usize, edges: &[Edge]) -> Result<Self, GraphError> {
        Self::with_degree_bound(node_count, edges, None)
    }

    fn with_degree_bound(
        node_count: usize,
        edges: &[Edge],
        declared_bound: Option<usize>,
    ) -> Result<Self, GraphError> {
        if node_count < 2 {
            return Err(GraphError::InvalidSpec(format!(
                "graph needs at least two nodes, got {node_count}"
            )));
        }
        let mut adjacency = vec![Vec::new(); node_count];
        let mut canonical = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            for node in [a, b] {
                if node >= node_count {
                    return Err(GraphError::NodeOutOfRange { node, node_count });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            let (u, v) = (a.min(b), a.max(b));
            adjacency[u].push(v);
            adjacency[v].push(u);
            canonical.push((u, v));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        for (u, list) in adjacency.iter().enumerate() {
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                return Err(GraphError::DuplicateEdge(u.min(w[0]), u.max(w[0])));
            }
        }
        canonical.sort_unstable();

        let max_degree = adjacency.iter().map(Vec::len).max().unwrap_or(0);
        let degree_bound = declared_bound.unwrap_or(max_degree);
        if let Some((node, list)) = adjacency.iter().enumerate().find(|(_, l)| l.len() > degree_bound) {
            return Err(GraphError::DegreeBound {
                node,
                degree: list.len(),
                bound: degree_bound,
            });
        }

        let graph = Graph {
            adjacency,
            edges: canonical,
            degree_bound,
        };
        if !graph.is_connected() {
            return Err(GraphError::NotConnected);
        }
        Ok(graph)
    }

    /// Deterministically builds the graph described by `spec`.
    pub fn generate(spec: &GraphSpec) -> Result<Self, GraphError> {
        spec.validate()?;
        match *spec {
            GraphSpec::Path { n } => Self::from_edges(n, &(1..n).map(|i| (i - 1, i)).collect::<Vec<_>>()),
            GraphSpec::Cycle { n } => {
                let edges: Vec<Edge> = (0..n).map(|i| (i, (i + 1) % n)).collect();
                Self::from_edges(n, &edges)
            }
            GraphSpec::Grid { width, height } => {
                let id = |x: usize, y: usize| y * width + x;
                let mut edges = Vec::new();
                for y in 0..height {
                    for x in 0..width {
                        if x + 1 < width {
                            edges.push((id(x, y), id(x + 1, y)));
                        }
                        if y + 1 < height {
                            edges.push((id(x, y), id(x, y + 1)));
                        }
                    }
                }
                Self::from_edges(width * height, &edges)
            }
            GraphSpec::Torus { width, height } => {
                let id = |x: usize, y: usize| y * width + x;
                let mut edges = Vec::with_capacity(2 * width * height);
                for y in 0..height {
                    for x in 0..width {
                        edges.push((id(x, y), id((x + 1) % width, y)));
                        edges.push((id(x, y), id(x, (y + 1) % height)));
                    }
                }
                Self::from_edges(width * height, &edges)
            }
            GraphSpec::RegularTree { branching, .. } => {
                // Breadth-first numbering: children of node p are p*b+1 ..= p*b+b.
                let n = spec.node_count();
                let edges: Vec<Edge> = (1..n).map(|child| ((child - 1) / branching, child)).collect();
                Self::from_edges(n, &edges)
            }
            GraphSpec::RandomRegular { n, degree, seed } => random_regular(n, degree, seed),
        }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, i: NodeId) -> &[NodeId] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: NodeId) -> usize {
        self.adjacency[i].len()
    }

    /// The declared degree bound `d`; at least the maximum degree.
    pub fn degree_bound(&self) -> usize {
        self.degree_bound
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn contains_edge(&self, a: NodeId, b: NodeId) -> bool {
        a < self.node_count() && self.adjacency[a].binary_search(&b).is_ok()
    }

    pub fn check_node(&self, node: NodeId) -> Result<(), GraphError> {
        if node < self.node_count() {
            Ok(())
        } else {
            Err(GraphError::NodeOutOfRange {
                node,
                node_count: self.node_count(),
            })
        }
    }

    fn is_connected(&self) -> bool {
        self.distances_from(0).iter().all(|&d| d != usize::MAX)
    }

    /// BFS hop distances from `source`; `usize::MAX` marks unreachable nodes.
    pub fn distances_from(&self, source: NodeId) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.node_count()];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Multi-source BFS: distance from each node to the nearest of `sources`.
    pub fn distances_from_set(&self, sources: &[NodeId]) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.node_count()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s] != 0 {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// `B(i, r)`: nodes within hop distance `r` of `i`, in ascending order.
    pub fn ball(&self, i: NodeId, r: usize) -> Vec<NodeId> {
        self.distances_from(i)
            .iter()
            .enumerate()
            .filter(|&(_, &d)| d <= r)
            .map(|(j, _)| j)
            .collect()
    }

    /// `|B(i, r)|` for `r = 0..=eccentricity(i)`.
    pub fn ball_sizes(&self, i: NodeId) -> Vec<usize> {
        let dist = self.distances_from(i);
        let ecc = dist.iter().copied().max().unwrap_or(0);
        let mut sizes = vec![0usize; ecc + 1];
        for d in dist {
            sizes[d] += 1;
        }
        for r in 1..sizes.len() {
            sizes[r] += sizes[r - 1];
        }
        sizes
    }

    /// Distance from `i` to the edge `(j, k)`: the nearer endpoint's distance.
    pub fn edge_distance(&self, i: NodeId, edge: Edge) -> Result<usize, GraphError> {
        self.check_node(i)?;
        let (j, k) = edge;
        if !self.contains_edge(j, k) {
            return Err(GraphError::NotAnEdge(j, k));
        }
        let dist = self.distances_from(i);
        Ok(dist[j].min(dist[k]))
    }

    /// `d(i, e)` for every edge, aligned with [`Graph::edges`].
    pub fn edge_distances_from(&self, i: NodeId) -> Vec<usize> {
        let dist = self.distances_from(i);
        self.edges.iter().map(|&(j, k)| dist[j].min(dist[k])).collect()
    }

    pub fn eccentricity(&self, i: NodeId) -> usize {
        self.distances_from(i).into_iter().max().unwrap_or(0)
    }

    pub fn eccentricities(&self) -> Vec<usize> {
        (0..self.node_count()).map(|i| self.eccentricity(i)).collect()
    }

    pub fn radius(&self) -> usize {
        self.eccentricities().into_iter().min().unwrap_or(0)
    }

    pub fn diameter(&self) -> usize {
        self.eccentricities().into_iter().max().unwrap_or(0)
    }

    /// Checks `|B(i, r)| <= f(r)` for every node and every radius up to the diameter.
    pub fn check_majorized(&self, profile: &GrowthProfile) -> Majorization {
        self.check_majorized_by(|r| profile.bound(r))
    }

    pub fn check_majorized_by(&self, bound: impl Fn(usize) -> f64) -> Majorization {
        let profiles: Vec<Vec<usize>> = (0..self.node_count()).map(|i| self.ball_sizes(i)).collect();
        let diameter = profiles.iter().map(|p| p.len() - 1).max().unwrap_or(0);
        for r in 0..=diameter {
            let f_r = bound(r);
            for (node, sizes) in profiles.iter().enumerate() {
                // Past a node's eccentricity its ball is the whole graph.
                let ball_size = sizes[r.min(sizes.len() - 1)];
                if ball_size as f64 > f_r {
                    return Majorization {
                        holds: false,
                        witness: Some(MajorizationWitness {
                            node,
                            radius: r,
                            ball_size,
                            bound: f_r,
                        }),
                    };
                }
            }
        }
        Majorization {
            holds: true,
            witness: None,
        }
    }

    /// `M_i(r) = sum over edges of r^d(i,e)`.
    pub fn weight_mass(&self, i: NodeId, r: f64) -> f64 {
        self.edge_distances_from(i).into_iter().map(|d| r.powi(d as i32)).sum()
    }

    /// Text form: header `n d`, then one `u v` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} {}", self.node_count(), self.degree_bound).unwrap();
        for &(u, v) in &self.edges {
            writeln!(out, "{u} {v}").unwrap();
        }
        out
    }

    pub fn parse_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(idx, l)| (idx + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let parse_pair = |line: usize, s: &str| -> Result<(usize, usize), GraphError> {
            let mut it = s.split_whitespace();
            let mut next = || {
                it.next()
                    .ok_or_else(|| GraphError::Parse {
                        line,
                        message: "expected two integers".into(),
                    })?
                    .parse::<usize>()
                    .map_err(|e| GraphError::Parse {
                        line,
                        message: e.to_string(),
                    })
            };
            let pair = (next()?, next()?);
            if it.next().is_some() {
                return Err(GraphError::Parse {
                    line,
                    message: "trailing tokens".into(),
                });
            }
            Ok(pair)
        };
        let (line, header) = lines.next().ok_or(GraphError::Parse {
            line: 1,
            message: "missing `n d` header".into(),
        })?;
        let (n, d) = parse_pair(line, header)?;
        let edges = lines
            .map(|(line, l)| parse_pair(line, l))
            .collect::<Result<Vec<_>, _>>()?;
        Self::with_degree_bound(n, &edges, Some(d))
    }
}

fn random_regular(n: usize, degree: usize, seed: u64) -> Result<Graph, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..MAX_GENERATION_ATTEMPTS {
        rng.set_stream(attempt);
        rng.set_word_pos(0);
        let Some(edges) = pair_stubs(n, degree, &mut rng) else {
            continue;
        };
        match Graph::from_edges(n, &edges) {
            Ok(g) => return Ok(g),
            Err(GraphError::NotConnected) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(GraphError::Disconnected(MAX_GENERATION_ATTEMPTS))
}

/// Configuration-model pairing that rejects loops and multi-edges pair by pair.
/// Returns `None` when the remaining stubs cannot be matched.
fn pair_stubs(n: usize, degree: usize, rng: &mut ChaCha8Rng) -> Option<Vec<Edge>> {
    let mut stubs: Vec<NodeId> = (0..n).flat_map(|v| std::iter::repeat_n(v, degree)).collect();
    let mut adjacency: Vec<Vec<NodeId>> = vec![Vec::with_capacity(degree); n];
    let mut edges = Vec::with_capacity(n * degree / 2);
    while !stubs.is_empty() {
        let budget = 50 * stubs.len();
        let mut paired = false;
        for _ in 0..budget {
            let a = rng.random_range(0..stubs.len());
            let b = rng.random_range(0..stubs.len());
            let (u, v) = (stubs[a], stubs[b]);
            if a == b || u == v || adjacency[u].contains(&v) {
                continue;
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
            edges.push((u.min(v), u.max(v)));
            stubs.swap_remove(a.max(b));
            stubs.swap_remove(a.min(b));
            paired = true;
            break;
        }
        if !paired {
            return None;
        }
    }
    Some(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Graph {
        Graph::generate(&GraphSpec::Path { n }).unwrap()
    }

    fn torus(w: usize, h: usize) -> Graph {
        Graph::generate(&GraphSpec::Torus { width: w, height: h }).unwrap()
    }

    fn cycle(n: usize) -> Graph {
        Graph::generate(&GraphSpec::Cycle { n }).unwrap()
    }

    #[test]
    fn path_three() {
        let g = path(3);
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(g.degree_bound(), 2);
    }

    #[test]
    fn torus_is_four_regular() {
        let g = torus(3, 3);
        assert_eq!(g.node_count(), 9);
        assert!((0..9).all(|i| g.degree(i) == 4));
    }

    #[test]
    fn random_regular_degrees_and_connectivity() {
        let g = Graph::generate(&GraphSpec::RandomRegular {
            n: 100,
            degree: 3,
            seed: 7,
        })
        .unwrap();
        assert_eq!(g.node_count(), 100);
        assert!((0..100).all(|i| g.degree(i) == 3));
        assert!(g.distances_from(0).iter().all(|&d| d != usize::MAX));
        assert_eq!(g.edge_count(), 150);
    }

    #[test]
    fn random_regular_is_deterministic() {
        let spec = GraphSpec::RandomRegular {
            n: 60,
            degree: 4,
            seed: 11,
        };
        assert_eq!(Graph::generate(&spec).unwrap(), Graph::generate(&spec).unwrap());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let odd = GraphSpec::RandomRegular {
            n: 7,
            degree: 3,
            seed: 0,
        };
        assert!(matches!(Graph::generate(&odd), Err(GraphError::InvalidSpec(_))));
        assert!(Graph::generate(&GraphSpec::Path { n: 1 }).is_err());
        assert!(Graph::generate(&GraphSpec::Torus { width: 2, height: 5 }).is_err());
    }

    #[test]
    fn from_edges_rejects_bad_input() {
        assert_eq!(Graph::from_edges(3, &[(0, 1)]), Err(GraphError::NotConnected));
        assert_eq!(Graph::from_edges(2, &[(1, 1)]), Err(GraphError::SelfLoop(1)));
        assert_eq!(
            Graph::from_edges(2, &[(0, 1), (1, 0)]),
            Err(GraphError::DuplicateEdge(0, 1))
        );
    }

    #[test]
    fn balls_on_path_and_torus() {
        let g = path(5);
        assert_eq!(g.ball(2, 0), vec![2]);
        assert_eq!(g.ball(2, 1), vec![1, 2, 3]);
        let t = torus(5, 5);
        for i in 0..25 {
            assert_eq!(t.ball(i, 1).len(), 5);
        }
    }

    #[test]
    fn edge_distances() {
        let g = path(3);
        assert_eq!(g.edge_distance(0, (0, 1)).unwrap(), 0);
        assert_eq!(g.edge_distance(0, (1, 2)).unwrap(), 1);
        assert_eq!(cycle(6).edge_distance(0, (3, 4)).unwrap(), 2);
        assert_eq!(g.edge_distance(0, (0, 2)), Err(GraphError::NotAnEdge(0, 2)));
    }

    #[test]
    fn radii() {
        assert_eq!(path(5).radius(), 2);
        assert_eq!(cycle(6).radius(), 3);
        assert_eq!(torus(5, 5).radius(), 4);
    }

    #[test]
    fn majorization_examples() {
        let linear = GrowthProfile::Polynomial { c: 3.0, k: 1.0 };
        assert!(path(100).check_majorized(&linear).holds);
        let quadratic = GrowthProfile::Polynomial { c: 4.0, k: 2.0 };
        assert!(torus(11, 11).check_majorized(&quadratic).holds);
        let tree = Graph::generate(&GraphSpec::RegularTree { branching: 2, depth: 8 }).unwrap();
        let result = tree.check_majorized(&quadratic);
        assert!(!result.holds);
        let w = result.witness.unwrap();
        assert!(w.ball_size as f64 > quadratic.bound(w.radius));
    }

    #[test]
    fn weight_mass_examples() {
        assert_eq!(path(3).weight_mass(0, 0.5), 1.5);
        assert_eq!(path(2).weight_mass(1, 0.3), 1.0);
        assert_eq!(cycle(4).weight_mass(0, 0.5), 3.0);
    }

    #[test]
    fn edge_list_round_trip() {
        let g = Graph::generate(&GraphSpec::Grid { width: 3, height: 4 }).unwrap();
        let text = g.to_edge_list();
        assert!(text.starts_with("12 4\n"));
        assert_eq!(Graph::parse_edge_list(&text).unwrap(), g);
    }

    #[test]
    fn edge_list_rejects_garbage() {
        assert!(matches!(
            Graph::parse_edge_list("3 2\n0 1\n1 x\n"),
            Err(GraphError::Parse { line: 3, .. })
        ));
        assert!(matches!(
            Graph::parse_edge_list("3 1\n0 1\n1 2\n"),
            Err(GraphError::DegreeBound { node: 1, .. })
        ));
    }
}
