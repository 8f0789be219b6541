//! Undirected simple graphs with discrete labels or continuous node features.
//!
//! Graphs are immutable values once built: every perturbation produces a new
//! graph. Edges are stored once per unordered pair, in insertion order, which
//! keeps the JSON encoding stable across runs.

mod algo;
mod constraint;
mod perturbation;

pub use algo::{connected_components, shortest_path_lengths, two_hop_neighbors, DisjointSet};
pub use constraint::{check_constraint, ConstraintMode, ConstraintSet};
pub use perturbation::{apply_perturbation, edit_distance_from_base, NodeValue, Perturbation};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("node {node} out of range for graph with {num_nodes} nodes")]
    NodeOutOfRange { node: usize, num_nodes: usize },
    #[error("edge weight {0} is negative or not finite")]
    BadWeight(f64),
    #[error("node data describes {found} nodes, graph has {expected}")]
    NodeCount { expected: usize, found: usize },
    #[error("node feature vectors have inconsistent lengths ({first} vs {other})")]
    FeatureLength { first: usize, other: usize },
    #[error("invalid perturbation {perturbation:?}: {reason}")]
    InvalidPerturbation { perturbation: Perturbation, reason: &'static str },
}

/// An unordered node pair, stored with the smaller index first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge(usize, usize);

impl Edge {
    pub fn new(u: usize, v: usize) -> Self {
        if u <= v {
            Edge(u, v)
        } else {
            Edge(v, u)
        }
    }

    pub fn lo(&self) -> usize {
        self.0
    }

    pub fn hi(&self) -> usize {
        self.1
    }

    pub fn contains(&self, node: usize) -> bool {
        self.0 == node || self.1 == node
    }

    pub fn shares_endpoint(&self, other: &Edge) -> bool {
        self.contains(other.0) || self.contains(other.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeData {
    /// One integer label per node.
    Labels(Vec<u32>),
    /// One real vector per node; all vectors share a length.
    Features(Vec<Vec<f64>>),
}

impl NodeData {
    pub fn len(&self) -> usize {
        match self {
            NodeData::Labels(l) => l.len(),
            NodeData::Features(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, NodeData::Labels(_))
    }

    fn check(&self) -> Result<(), GraphError> {
        if let NodeData::Features(rows) = self {
            if let Some(first) = rows.first() {
                if let Some(bad) = rows.iter().find(|r| r.len() != first.len()) {
                    return Err(GraphError::FeatureLength { first: first.len(), other: bad.len() });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: IndexMap<Edge, f64>,
    node_data: NodeData,
    weighted: bool,
}

impl Graph {
    /// A graph with `node_data.len()` nodes and no edges.
    pub fn new(node_data: NodeData) -> Result<Self, GraphError> {
        node_data.check()?;
        Ok(Self { num_nodes: node_data.len(), edges: IndexMap::new(), node_data, weighted: false })
    }

    /// `n` nodes sharing the discrete label 0.
    pub fn unlabeled(n: usize) -> Self {
        Self { num_nodes: n, edges: IndexMap::new(), node_data: NodeData::Labels(vec![0; n]), weighted: false }
    }

    /// Convenience constructor for unweighted, uniformly labelled graphs.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut g = Self::unlabeled(n);
        for &(u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    pub fn with_node_data(mut self, node_data: NodeData) -> Result<Self, GraphError> {
        node_data.check()?;
        if node_data.len() != self.num_nodes {
            return Err(GraphError::NodeCount { expected: self.num_nodes, found: node_data.len() });
        }
        self.node_data = node_data;
        Ok(self)
    }

    /// Adds an unweighted edge (weight 1). Adding an existing edge is a no-op.
    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<(), GraphError> {
        self.check_pair(u, v)?;
        self.edges.entry(Edge::new(u, v)).or_insert(1.0);
        Ok(())
    }

    /// Adds or overwrites an edge with an explicit weight and marks the graph weighted.
    pub fn add_weighted_edge(&mut self, u: usize, v: usize, w: f64) -> Result<(), GraphError> {
        self.check_pair(u, v)?;
        if !(w.is_finite() && w >= 0.0) {
            return Err(GraphError::BadWeight(w));
        }
        self.weighted = true;
        self.edges.insert(Edge::new(u, v), w);
        Ok(())
    }

    pub fn set_weighted(&mut self, weighted: bool) {
        self.weighted = weighted;
    }

    fn check_pair(&self, u: usize, v: usize) -> Result<(), GraphError> {
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        let node = u.max(v);
        if node >= self.num_nodes {
            return Err(GraphError::NodeOutOfRange { node, num_nodes: self.num_nodes });
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }

    pub fn node_data(&self) -> &NodeData {
        &self.node_data
    }

    /// Feature dimension for continuous graphs, `None` for labelled ones.
    pub fn feature_dim(&self) -> Option<usize> {
        match &self.node_data {
            NodeData::Labels(_) => None,
            NodeData::Features(rows) => Some(rows.first().map_or(0, Vec::len)),
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = (Edge, f64)> + '_ {
        self.edges.iter().map(|(e, w)| (*e, *w))
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains_key(&Edge::new(u, v))
    }

    pub fn weight(&self, u: usize, v: usize) -> Option<f64> {
        self.edges.get(&Edge::new(u, v)).copied()
    }

    /// Neighbour lists with edge weights, sorted by neighbour index.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for (e, w) in self.edges() {
            adj[e.0].push((e.1, w));
            adj[e.1].push((e.0, w));
        }
        for list in &mut adj {
            list.sort_unstable_by_key(|&(n, _)| n);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for e in self.edges.keys() {
            deg[e.0] += 1;
            deg[e.1] += 1;
        }
        deg
    }

    pub(crate) fn remove_edge(&mut self, e: Edge) -> Option<f64> {
        self.edges.shift_remove(&e)
    }

    pub(crate) fn set_edge_weight(&mut self, e: Edge, w: f64) {
        if w == 0.0 {
            self.edges.shift_remove(&e);
        } else if let Some(slot) = self.edges.get_mut(&e) {
            *slot = w;
        } else {
            self.edges.insert(e, w);
        }
    }

    pub(crate) fn push_node(&mut self, value: &NodeValue) -> Result<usize, &'static str> {
        match (&mut self.node_data, value) {
            (NodeData::Labels(labels), NodeValue::Label(l)) => labels.push(*l),
            (NodeData::Features(rows), NodeValue::Features(f)) => {
                if rows.first().is_some_and(|r| r.len() != f.len()) {
                    return Err("injected feature length differs from the graph's");
                }
                rows.push(f.clone());
            }
            _ => return Err("injected node value does not match the graph's node data kind"),
        }
        self.num_nodes += 1;
        Ok(self.num_nodes - 1)
    }

    /// The same graph with nodes renumbered so that old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        assert_eq!(perm.len(), self.num_nodes, "permutation length");
        let node_data = match &self.node_data {
            NodeData::Labels(l) => {
                let mut out = vec![0; l.len()];
                for (i, &p) in perm.iter().enumerate() {
                    out[p] = l[i];
                }
                NodeData::Labels(out)
            }
            NodeData::Features(f) => {
                let mut out = vec![Vec::new(); f.len()];
                for (i, &p) in perm.iter().enumerate() {
                    out[p] = f[i].clone();
                }
                NodeData::Features(out)
            }
        };
        let edges = self.edges().map(|(e, w)| (Edge::new(perm[e.0], perm[e.1]), w)).collect();
        Graph { num_nodes: self.num_nodes, edges, node_data, weighted: self.weighted }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_self_loops_and_out_of_range() {
        let mut g = Graph::unlabeled(3);
        assert_eq!(g.add_edge(1, 1), Err(GraphError::SelfLoop(1)));
        assert!(matches!(g.add_edge(0, 3), Err(GraphError::NodeOutOfRange { node: 3, .. })));
        assert!(g.add_weighted_edge(0, 1, -0.5).is_err());
    }

    #[test]
    fn edges_are_unordered() {
        let g = Graph::from_edges(3, &[(2, 0), (0, 2), (1, 2)]).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert!(g.has_edge(0, 2) && g.has_edge(2, 0));
        assert_eq!(g.degrees(), vec![1, 1, 2]);
    }

    #[test]
    fn equality_ignores_insertion_order() {
        let a = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let b = Graph::from_edges(3, &[(1, 2), (0, 1)]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn feature_lengths_must_agree() {
        let bad = NodeData::Features(vec![vec![1.0], vec![1.0, 2.0]]);
        assert!(matches!(Graph::new(bad), Err(GraphError::FeatureLength { first: 1, other: 2 })));
    }
}
