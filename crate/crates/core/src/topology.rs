//! Undirected agent graph and the neighbourhood quantities the agents use.

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Maximum number of connectivity retries for the Erdős–Rényi generator.
pub const ER_MAX_RETRIES: usize = 1000;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TopologyError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(usize, usize, usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("graph is disconnected: node {0} is unreachable from node 0")]
    Disconnected(usize),
    #[error("edge probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("Erdős–Rényi graph still disconnected after {0} retries")]
    RetriesExhausted(usize),
}

/// Graph generator description, as it appears in the experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GraphSpec {
    Complete { nodes: usize },
    Ring { nodes: usize },
    Path { nodes: usize },
    Star { nodes: usize },
    ErdosRenyi { nodes: usize, p: f64 },
    Edges { nodes: usize, edges: Vec<(usize, usize)> },
}

impl GraphSpec {
    pub fn node_count(&self) -> usize {
        match *self {
            GraphSpec::Complete { nodes }
            | GraphSpec::Ring { nodes }
            | GraphSpec::Path { nodes }
            | GraphSpec::Star { nodes }
            | GraphSpec::ErdosRenyi { nodes, .. }
            | GraphSpec::Edges { nodes, .. } => nodes,
        }
    }
}

/// A connected undirected graph with all-pairs hop distances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    adjacency: Vec<Vec<usize>>,
    edge_count: usize,
    distance: Vec<Vec<u32>>,
    diameter: u32,
}

/// Builds the graph described by `spec`. The random generator is only
/// consulted for Erdős–Rényi graphs.
pub fn build_graph<R: Rng + ?Sized>(spec: &GraphSpec, rng: &mut R) -> Result<Topology, TopologyError> {
    let n = spec.node_count();
    if n == 0 {
        return Err(TopologyError::Empty);
    }
    match spec {
        GraphSpec::Complete { .. } => {
            let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
            Topology::from_edges(n, edges)
        }
        GraphSpec::Ring { .. } => {
            let edges = (0..n).map(|i| (i, (i + 1) % n)).filter(|(a, b)| a != b);
            Topology::from_edges(n, edges)
        }
        GraphSpec::Path { .. } => Topology::from_edges(n, (1..n).map(|i| (i - 1, i))),
        GraphSpec::Star { .. } => Topology::from_edges(n, (1..n).map(|i| (0, i))),
        GraphSpec::ErdosRenyi { p, .. } => {
            if !(0.0..=1.0).contains(p) {
                return Err(TopologyError::BadProbability(*p));
            }
            for _ in 0..ER_MAX_RETRIES {
                let mut edges = Vec::new();
                for i in 0..n {
                    for j in i + 1..n {
                        if rng.random::<f64>() < *p {
                            edges.push((i, j));
                        }
                    }
                }
                match Topology::from_edges(n, edges) {
                    Ok(t) => return Ok(t),
                    Err(TopologyError::Disconnected(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(TopologyError::RetriesExhausted(ER_MAX_RETRIES))
        }
        GraphSpec::Edges { edges, .. } => Topology::from_edges(n, edges.iter().copied()),
    }
}

impl Topology {
    /// Builds a topology from an explicit edge list. Duplicate edges are
    /// merged; the graph must be connected.
    pub fn from_edges<I>(node_count: usize, edges: I) -> Result<Self, TopologyError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if node_count == 0 {
            return Err(TopologyError::Empty);
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(TopologyError::NodeOutOfRange(a, b, node_count));
            }
            if a == b {
                return Err(TopologyError::SelfLoop(a));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let mut adjacency = vec![Vec::new(); node_count];
        for &(a, b) in &set {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for row in &mut adjacency {
            row.sort_unstable();
        }

        let distance: Vec<Vec<u32>> = (0..node_count).map(|s| bfs(&adjacency, s)).collect();
        if let Some(j) = distance[0].iter().position(|&d| d == u32::MAX) {
            return Err(TopologyError::Disconnected(j));
        }
        let diameter = distance.iter().flatten().copied().max().unwrap_or(0);
        Ok(Topology {
            adjacency,
            edge_count: set.len(),
            distance,
            diameter,
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn diameter(&self) -> u32 {
        self.diameter
    }

    pub fn distance(&self, a: usize, b: usize) -> u32 {
        self.distance[a][b]
    }

    /// Direct neighbours of `node`, ascending.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, row)| row.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
    }

    /// The `w`-neighbourhood of every node and the derived minima.
    pub fn neighborhood_stats(&self, w: u32) -> NeighborhoodStats {
        let n = self.node_count();
        let neighborhoods: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| self.distance[i][j] <= w).collect())
            .collect();
        let sizes: Vec<usize> = neighborhoods.iter().map(Vec::len).collect();
        let local_min: Vec<usize> = neighborhoods
            .iter()
            .map(|nb| nb.iter().map(|&j| sizes[j]).min().expect("i is in N_w(i)"))
            .collect();
        let global_min = *sizes.iter().min().expect("non-empty graph");
        NeighborhoodStats {
            w,
            neighborhoods,
            sizes,
            local_min,
            global_min,
        }
    }
}

fn bfs(adjacency: &[Vec<usize>], source: usize) -> Vec<u32> {
    let mut dist = vec![u32::MAX; adjacency.len()];
    let mut queue = VecDeque::from([source]);
    dist[source] = 0;
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if dist[v] == u32::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Neighbourhoods within collaboration distance `w`.
///
/// `local_min[i]` is the smallest neighbourhood size among the members of
/// node `i`'s own neighbourhood; `global_min` is the smallest over all nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodStats {
    pub w: u32,
    pub neighborhoods: Vec<Vec<usize>>,
    pub sizes: Vec<usize>,
    pub local_min: Vec<usize>,
    pub global_min: usize,
}

impl NeighborhoodStats {
    /// Stats for an agent that only collaborates with itself.
    pub fn solo(node_count: usize) -> Self {
        NeighborhoodStats {
            w: 0,
            neighborhoods: (0..node_count).map(|i| vec![i]).collect(),
            sizes: vec![1; node_count],
            local_min: vec![1; node_count],
            global_min: 1,
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.neighborhoods[i].binary_search(&j).is_ok()
    }
}
