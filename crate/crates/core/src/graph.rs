//! Link graphs, gebits and breadth-first shell structure.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::ShellProfile;
use crate::relational::RelationalMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("node {node} out of range for a graph on {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("node {0} is not part of the gebit")]
    RootNotInGebit(usize),
    #[error("node set is not connected")]
    Disconnected,
    #[error("gebit has no nodes")]
    EmptyGebit,
    #[error("gebit is a single node and has no shells")]
    Singleton,
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Rule for turning link strengths into edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    /// Keep pairs with `|B_ij| >= tau`.
    Absolute(f64),
    /// Keep the top `q` fraction of off-diagonal magnitudes, ties included.
    TopQuantile(f64),
}

impl Threshold {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Threshold::Absolute(tau) if !(tau.is_finite() && tau >= 0.0) => Err(GraphError::InvalidThreshold(
                format!("absolute threshold must be finite and >= 0, got {tau}"),
            )),
            Threshold::TopQuantile(q) if !(q > 0.0 && q <= 1.0) => Err(GraphError::InvalidThreshold(format!(
                "quantile must lie in (0, 1], got {q}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Simple undirected graph on nodes `0..n` with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkGraph {
    adjacency: Vec<Vec<usize>>,
    edge_count: usize,
}

impl LinkGraph {
    pub fn new(n: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); n],
            edge_count: 0,
        }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::new(n);
        for (a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    /// Adds `a - b`; returns `false` when the edge was already present.
    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<bool> {
        let n = self.n();
        for node in [a, b] {
            if node >= n {
                return Err(GraphError::NodeOutOfRange { node, n });
            }
        }
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        match self.adjacency[a].binary_search(&b) {
            Ok(_) => Ok(false),
            Err(pos) => {
                self.adjacency[a].insert(pos, b);
                let pos = self.adjacency[b].binary_search(&a).unwrap_err();
                self.adjacency[b].insert(pos, a);
                self.edge_count += 1;
                Ok(true)
            }
        }
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a < self.n() && self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Edges as `(a, b)` with `a < b`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, nbrs)| nbrs.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
    }

    /// Nodes with at least one edge.
    pub fn non_isolated(&self) -> usize {
        self.adjacency.iter().filter(|nbrs| !nbrs.is_empty()).count()
    }
}

/// Thresholds `|B_ij|` into an undirected link graph.
pub fn extract_links(b: &RelationalMatrix, threshold: Threshold) -> Result<LinkGraph> {
    threshold.validate()?;
    let n = b.n();
    let tau = match threshold {
        Threshold::Absolute(tau) => tau,
        Threshold::TopQuantile(q) => {
            let mut magnitudes: Vec<f64> = b.upper_entries().map(|(_, _, v)| v.abs()).collect();
            if magnitudes.is_empty() {
                return Ok(LinkGraph::new(n));
            }
            let keep = ((q * magnitudes.len() as f64).ceil() as usize).clamp(1, magnitudes.len());
            magnitudes.sort_by(|x, y| y.total_cmp(x));
            magnitudes[keep - 1]
        }
    };
    let mut g = LinkGraph::new(n);
    for (i, j, v) in b.upper_entries() {
        if v.abs() >= tau {
            g.add_edge(i, j)?;
        }
    }
    Ok(g)
}

/// A connected set of nodes together with the links among them.
///
/// Node ids are those of the parent graph; internally the subgraph is stored
/// with dense local indices in ascending id order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gebit {
    nodes: Vec<usize>,
    local: Vec<Vec<usize>>,
}

impl Gebit {
    /// The subgraph of `g` induced by `nodes`, which must be connected.
    pub fn induced(g: &LinkGraph, nodes: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut nodes: Vec<usize> = nodes.into_iter().collect();
        nodes.sort_unstable();
        nodes.dedup();
        if nodes.is_empty() {
            return Err(GraphError::EmptyGebit);
        }
        if let Some(&node) = nodes.iter().find(|&&v| v >= g.n()) {
            return Err(GraphError::NodeOutOfRange { node, n: g.n() });
        }
        let local = nodes
            .iter()
            .map(|&v| {
                g.neighbors(v)
                    .iter()
                    .filter_map(|u| nodes.binary_search(u).ok())
                    .collect()
            })
            .collect();
        let gebit = Self { nodes, local };
        if gebit.bfs_distances(0).iter().any(|d| d.is_none()) {
            return Err(GraphError::Disconnected);
        }
        Ok(gebit)
    }

    /// The whole graph as one gebit; fails unless `g` is connected.
    pub fn whole(g: &LinkGraph) -> Result<Self> {
        Self::induced(g, 0..g.n())
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.nodes.binary_search(&node).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.local.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Neighbours of `node` inside the gebit, ascending.
    pub fn neighbors(&self, node: usize) -> Option<Vec<usize>> {
        let i = self.nodes.binary_search(&node).ok()?;
        Some(self.local[i].iter().map(|&l| self.nodes[l]).collect())
    }

    /// The gebit as a standalone graph on local indices `0..len`.
    pub fn local_graph(&self) -> LinkGraph {
        let edge_count = self.edge_count();
        LinkGraph {
            adjacency: self.local.clone(),
            edge_count,
        }
    }

    fn local_index(&self, node: usize) -> Result<usize> {
        self.nodes
            .binary_search(&node)
            .map_err(|_| GraphError::RootNotInGebit(node))
    }

    fn bfs_distances(&self, start: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.nodes.len()];
        let mut queue = VecDeque::from([start]);
        dist[start] = Some(0);
        while let Some(v) = queue.pop_front() {
            let next = dist[v].map(|d| d + 1);
            for &u in &self.local[v] {
                if dist[u].is_none() {
                    dist[u] = next;
                    queue.push_back(u);
                }
            }
        }
        dist
    }
}

/// Maximal connected components, largest first; equal sizes are ordered by
/// their smallest node id. Isolated nodes come out as singleton gebits.
pub fn connected_components(g: &LinkGraph) -> Vec<Gebit> {
    let n = g.n();
    let mut label = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = groups.len();
        let mut members = vec![start];
        label[start] = id;
        let mut cursor = 0;
        while cursor < members.len() {
            let v = members[cursor];
            cursor += 1;
            for &u in g.neighbors(v) {
                if label[u] == usize::MAX {
                    label[u] = id;
                    members.push(u);
                }
            }
        }
        groups.push(members);
    }
    // groups are discovered in ascending order of their smallest node, so a
    // stable sort on size alone gives the required tie-break
    groups.sort_by_key(|members| std::cmp::Reverse(members.len()));
    groups
        .into_iter()
        .map(|members| Gebit::induced(g, members).expect("components are connected"))
        .collect()
}

/// Number of nodes at each breadth-first distance `1..=L` from `root`.
pub fn shell_profile(gebit: &Gebit, root: usize) -> Result<ShellProfile> {
    let start = gebit.local_index(root)?;
    if gebit.len() == 1 {
        return Err(GraphError::Singleton);
    }
    let dist = gebit.bfs_distances(start);
    let depth = dist.iter().flatten().copied().max().unwrap_or(0);
    let mut shells = vec![0_u64; depth];
    for d in dist.into_iter().flatten().filter(|&d| d > 0) {
        shells[d - 1] += 1;
    }
    Ok(ShellProfile::new(shells).expect("breadth-first shells up to the eccentricity are non-empty"))
}

/// Rooted spanning tree given as a parent map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanningTree {
    pub root: usize,
    pub parent: BTreeMap<usize, usize>,
}

impl SpanningTree {
    /// Tree edges as `(min, max)` pairs, ascending.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<_> = self
            .parent
            .iter()
            .map(|(&child, &parent)| (child.min(parent), child.max(parent)))
            .collect();
        edges.sort_unstable();
        edges
    }

    pub fn node_count(&self) -> usize {
        self.parent.len() + 1
    }

    /// Tree depth of `node`, or `None` when it is not in the tree or the
    /// parent chain is broken.
    pub fn depth_of(&self, node: usize) -> Option<usize> {
        let mut depth = 0;
        let mut current = node;
        while current != self.root {
            current = *self.parent.get(&current)?;
            depth += 1;
            if depth > self.parent.len() {
                return None;
            }
        }
        Some(depth)
    }

    /// Node counts at tree depth `1..=L`.
    pub fn depth_histogram(&self) -> Vec<u64> {
        let mut hist: Vec<u64> = Vec::new();
        for &node in self.parent.keys() {
            let d = self.depth_of(node).expect("parent chains reach the root");
            if hist.len() < d {
                hist.resize(d, 0);
            }
            hist[d - 1] += 1;
        }
        hist
    }
}

/// Breadth-first spanning tree from `root`, visiting neighbours in ascending
/// id order. Depth `k` of the tree holds exactly the `D_k` nodes of the shell
/// profile.
pub fn spanning_tree(gebit: &Gebit, root: usize) -> Result<SpanningTree> {
    let start = gebit.local_index(root)?;
    let mut parent = BTreeMap::new();
    let mut seen = vec![false; gebit.len()];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for &u in &gebit.local[v] {
            if !seen[u] {
                seen[u] = true;
                parent.insert(gebit.nodes[u], gebit.nodes[v]);
                queue.push_back(u);
            }
        }
    }
    Ok(SpanningTree { root, parent })
}
