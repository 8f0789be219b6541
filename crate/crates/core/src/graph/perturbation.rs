use std::cmp::Ordering;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::{Edge, Graph, GraphError};

/// Data attached to an injected node; must match the host graph's node data kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeValue {
    Label(u32),
    Features(Vec<f64>),
}

/// A single structural edit.
///
/// `Flip` toggles the presence of `{u, v}`. `Rewire` moves the edge `(u, v)` to
/// `(u, s)`. `Swap` exchanges the weights of `(u, v)` and `(u, s)`, where an
/// absent edge has weight 0, so swapping with an absent pair moves the edge.
/// `Inject` appends one node (index `n`) connected to `connections`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    Flip { u: usize, v: usize },
    Rewire { u: usize, v: usize, s: usize },
    Swap { u: usize, v: usize, s: usize },
    Inject { node: NodeValue, connections: Vec<usize> },
}

impl Perturbation {
    pub fn flip(u: usize, v: usize) -> Self {
        let e = Edge::new(u, v);
        Perturbation::Flip { u: e.lo(), v: e.hi() }
    }

    pub fn rewire(u: usize, v: usize, s: usize) -> Self {
        Perturbation::Rewire { u, v, s }
    }

    pub fn swap(u: usize, v: usize, s: usize) -> Self {
        Perturbation::Swap { u, v, s }
    }

    /// Connections are stored sorted.
    pub fn inject(node: NodeValue, mut connections: Vec<usize>) -> Self {
        connections.sort_unstable();
        Perturbation::Inject { node, connections }
    }

    /// Total-order key used for hashing, equality and deterministic tie-breaks.
    fn key(&self) -> (u8, Vec<u64>) {
        match self {
            Perturbation::Flip { u, v } => (0, vec![*u as u64, *v as u64]),
            Perturbation::Rewire { u, v, s } => (1, vec![*u as u64, *v as u64, *s as u64]),
            Perturbation::Swap { u, v, s } => (2, vec![*u as u64, *v as u64, *s as u64]),
            Perturbation::Inject { node, connections } => {
                let mut k = Vec::with_capacity(connections.len() + 4);
                match node {
                    NodeValue::Label(l) => {
                        k.push(0);
                        k.push(u64::from(*l));
                    }
                    NodeValue::Features(f) => {
                        k.push(1);
                        k.push(f.len() as u64);
                        k.extend(f.iter().map(|x| x.to_bits()));
                    }
                }
                k.extend(connections.iter().map(|&c| c as u64));
                (3, k)
            }
        }
    }

    /// Edges whose presence the perturbation may add (`true`) or remove (`false`),
    /// evaluated against the graph it is applied to.
    pub fn edge_changes(&self, g: &Graph) -> Vec<(Edge, bool)> {
        match self {
            Perturbation::Flip { u, v } => vec![(Edge::new(*u, *v), !g.has_edge(*u, *v))],
            Perturbation::Rewire { u, v, s } => {
                vec![(Edge::new(*u, *v), false), (Edge::new(*u, *s), true)]
            }
            Perturbation::Swap { u, v, s } => {
                let (a, b) = (g.has_edge(*u, *v), g.has_edge(*u, *s));
                match (a, b) {
                    (true, false) => vec![(Edge::new(*u, *v), false), (Edge::new(*u, *s), true)],
                    (false, true) => vec![(Edge::new(*u, *s), false), (Edge::new(*u, *v), true)],
                    _ => Vec::new(),
                }
            }
            Perturbation::Inject { connections, .. } => {
                let new = g.num_nodes();
                connections.iter().map(|&c| (Edge::new(c, new), true)).collect()
            }
        }
    }

    /// Checks the structural preconditions against `g`.
    pub fn validate(&self, g: &Graph) -> Result<(), GraphError> {
        let n = g.num_nodes();
        let fail = |reason| Err(GraphError::InvalidPerturbation { perturbation: self.clone(), reason });
        let in_range = |xs: &[usize]| xs.iter().all(|&x| x < n);
        match self {
            Perturbation::Flip { u, v } => {
                if u == v {
                    return fail("flip end nodes must differ");
                }
                if !in_range(&[*u, *v]) {
                    return fail("node out of range");
                }
            }
            Perturbation::Rewire { u, v, s } | Perturbation::Swap { u, v, s } => {
                if u == v || u == s || v == s {
                    return fail("rewire/swap nodes must be distinct");
                }
                if !in_range(&[*u, *v, *s]) {
                    return fail("node out of range");
                }
                if matches!(self, Perturbation::Rewire { .. }) {
                    if !g.has_edge(*u, *v) {
                        return fail("rewire source edge is absent");
                    }
                    if g.has_edge(*u, *s) {
                        return fail("rewire target edge already present");
                    }
                } else if !g.has_edge(*u, *v) && !g.has_edge(*u, *s) {
                    return fail("swap between two absent edges");
                }
            }
            Perturbation::Inject { node, connections } => {
                if !in_range(connections) {
                    return fail("node out of range");
                }
                if connections.windows(2).any(|w| w[0] >= w[1]) {
                    return fail("injected connections must be distinct and sorted");
                }
                match (g.node_data(), node) {
                    (super::NodeData::Labels(_), NodeValue::Label(_)) => {}
                    (super::NodeData::Features(rows), NodeValue::Features(f)) => {
                        if rows.first().is_some_and(|r| r.len() != f.len()) {
                            return fail("injected feature length differs from the graph's");
                        }
                    }
                    _ => return fail("injected node value kind does not match graph"),
                }
            }
        }
        Ok(())
    }
}

impl PartialEq for Perturbation {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Perturbation {}

impl Hash for Perturbation {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state);
    }
}

impl PartialOrd for Perturbation {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Perturbation {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// Applies `p` to a copy of `g`.
pub fn apply_perturbation(g: &Graph, p: &Perturbation) -> Result<Graph, GraphError> {
    p.validate(g)?;
    let mut out = g.clone();
    match p {
        Perturbation::Flip { u, v } => {
            let e = Edge::new(*u, *v);
            if out.remove_edge(e).is_none() {
                out.set_edge_weight(e, 1.0);
            }
        }
        Perturbation::Rewire { u, v, s } => {
            let w = out.remove_edge(Edge::new(*u, *v)).unwrap_or(1.0);
            out.set_edge_weight(Edge::new(*u, *s), w);
        }
        Perturbation::Swap { u, v, s } => {
            let (a, b) = (Edge::new(*u, *v), Edge::new(*u, *s));
            let wa = g.weight(*u, *v).unwrap_or(0.0);
            let wb = g.weight(*u, *s).unwrap_or(0.0);
            out.set_edge_weight(a, wb);
            out.set_edge_weight(b, wa);
        }
        Perturbation::Inject { node, connections } => {
            let new = out
                .push_node(node)
                .map_err(|reason| GraphError::InvalidPerturbation { perturbation: p.clone(), reason })?;
            for &c in connections {
                out.set_edge_weight(Edge::new(c, new), 1.0);
            }
        }
    }
    Ok(out)
}

impl Graph {
    pub fn apply(&self, p: &Perturbation) -> Result<Graph, GraphError> {
        apply_perturbation(self, p)
    }
}

/// Net number of edits in a perturbation sequence: flips of the same pair
/// cancel in twos, every other edit counts once.
pub fn edit_distance_from_base(trace: &[Perturbation]) -> usize {
    let mut flips: HashMap<Edge, usize> = HashMap::new();
    let mut others = 0;
    for p in trace {
        match p {
            Perturbation::Flip { u, v } => *flips.entry(Edge::new(*u, *v)).or_default() += 1,
            _ => others += 1,
        }
    }
    others + flips.values().filter(|&&c| c % 2 == 1).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeData;

    #[test]
    fn flip_removes_existing_edge() {
        let tri = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let out = tri.apply(&Perturbation::flip(0, 1)).unwrap();
        assert_eq!(out, Graph::from_edges(3, &[(1, 2), (0, 2)]).unwrap());
        assert_eq!(tri.num_edges(), 3);
    }

    #[test]
    fn rewire_moves_edge() {
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        let out = g.apply(&Perturbation::rewire(0, 1, 2)).unwrap();
        assert_eq!(out, Graph::from_edges(3, &[(0, 2)]).unwrap());

        let path = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(path.apply(&Perturbation::rewire(1, 2, 0)).is_err());
    }

    #[test]
    fn swap_exchanges_weights() {
        let mut g = Graph::unlabeled(3);
        g.add_weighted_edge(0, 1, 0.3).unwrap();
        g.add_weighted_edge(0, 2, 0.7).unwrap();
        let out = g.apply(&Perturbation::swap(0, 1, 2)).unwrap();
        assert_eq!(out.weight(0, 1), Some(0.7));
        assert_eq!(out.weight(0, 2), Some(0.3));
    }

    #[test]
    fn swap_with_absent_edge_moves_it() {
        let mut g = Graph::unlabeled(3);
        g.add_weighted_edge(0, 1, 0.4).unwrap();
        let out = g.apply(&Perturbation::swap(0, 1, 2)).unwrap();
        assert_eq!(out.weight(0, 1), None);
        assert_eq!(out.weight(0, 2), Some(0.4));
    }

    #[test]
    fn inject_appends_node() {
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        let out = g.apply(&Perturbation::inject(NodeValue::Label(0), vec![2, 0])).unwrap();
        assert_eq!(out.num_nodes(), 4);
        assert!(out.has_edge(3, 0) && out.has_edge(3, 2));
        assert_eq!(out.node_data(), &NodeData::Labels(vec![0; 4]));
        let wrong = Perturbation::inject(NodeValue::Features(vec![1.0]), vec![0]);
        assert!(g.apply(&wrong).is_err());
    }

    #[test]
    fn invalid_flip_is_rejected() {
        let g = Graph::unlabeled(2);
        assert!(g.apply(&Perturbation::Flip { u: 1, v: 1 }).is_err());
        assert!(g.apply(&Perturbation::flip(0, 2)).is_err());
    }

    #[test]
    fn flip_is_normalised() {
        assert_eq!(Perturbation::flip(3, 1), Perturbation::flip(1, 3));
    }

    #[test]
    fn edit_distance_cancels_repeated_flips() {
        let a = Perturbation::flip(0, 1);
        let b = Perturbation::flip(2, 3);
        assert_eq!(edit_distance_from_base(std::slice::from_ref(&a)), 1);
        assert_eq!(edit_distance_from_base(&[a.clone(), a.clone()]), 0);
        assert_eq!(edit_distance_from_base(&[a.clone(), b, a]), 1);
    }
}
