use serde::{Deserialize, Serialize};

use super::{connected_components, two_hop_neighbors, Graph, Perturbation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintMode {
    #[default]
    None,
    /// Added edges must join nodes at most two hops apart.
    TwoHop,
    /// Only rewires whose new endpoint is within two hops of the anchor.
    TwoHopRewire,
    /// The number of connected components may not change.
    PreserveComponents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub mode: ConstraintMode,
    /// Maximum injected nodes as a fraction of the original node count.
    pub max_injected_fraction: f64,
    /// Maximum connections of one injected node; unlimited when `None`.
    pub max_edges_per_injected_node: Option<usize>,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        Self { mode: ConstraintMode::None, max_injected_fraction: 0.05, max_edges_per_injected_node: None }
    }
}

impl ConstraintSet {
    pub fn new(mode: ConstraintMode) -> Self {
        Self { mode, ..Self::default() }
    }
}

/// Whether `p` is admissible on `g` under `c`. Invalid perturbations are never admissible.
pub fn check_constraint(g: &Graph, p: &Perturbation, c: &ConstraintSet) -> bool {
    if p.validate(g).is_err() {
        return false;
    }
    if let Perturbation::Inject { connections, .. } = p {
        if c.max_edges_per_injected_node.is_some_and(|cap| connections.len() > cap) {
            return false;
        }
    }
    match c.mode {
        ConstraintMode::None => true,
        ConstraintMode::TwoHop => {
            if matches!(p, Perturbation::Inject { .. }) {
                return true;
            }
            p.edge_changes(g)
                .into_iter()
                .filter(|&(_, added)| added)
                .all(|(e, _)| two_hop_neighbors(g, e.lo()).contains(&e.hi()))
        }
        ConstraintMode::TwoHopRewire => match p {
            Perturbation::Rewire { u, s, .. } => two_hop_neighbors(g, *u).contains(s),
            _ => false,
        },
        ConstraintMode::PreserveComponents => match g.apply(p) {
            Ok(next) => connected_components(&next) == connected_components(g),
            Err(_) => false,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_hop_limits_additions() {
        let c = ConstraintSet::new(ConstraintMode::TwoHop);
        let path3 = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(check_constraint(&path3, &Perturbation::flip(0, 2), &c));
        let path4 = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert!(!check_constraint(&path4, &Perturbation::flip(0, 3), &c));
        // deletions are always allowed
        assert!(check_constraint(&path4, &Perturbation::flip(2, 3), &c));
    }

    #[test]
    fn two_hop_rewire_admits_only_close_rewires() {
        let c = ConstraintSet::new(ConstraintMode::TwoHopRewire);
        let path4 = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert!(check_constraint(&path4, &Perturbation::rewire(1, 2, 3), &c));
        assert!(!check_constraint(&path4, &Perturbation::rewire(0, 1, 3), &c));
        assert!(!check_constraint(&path4, &Perturbation::flip(0, 2), &c));
    }

    #[test]
    fn preserve_components_rejects_merges() {
        let c = ConstraintSet::new(ConstraintMode::PreserveComponents);
        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(!check_constraint(&g, &Perturbation::flip(1, 2), &c));
        assert!(!check_constraint(&g, &Perturbation::flip(0, 1), &c));
        let tri = Graph::from_edges(4, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert!(check_constraint(&tri, &Perturbation::flip(0, 1), &c));
    }

    #[test]
    fn injection_edge_cap() {
        let c = ConstraintSet { max_edges_per_injected_node: Some(1), ..ConstraintSet::default() };
        let g = Graph::unlabeled(3);
        let ok = Perturbation::inject(super::super::NodeValue::Label(0), vec![1]);
        let too_many = Perturbation::inject(super::super::NodeValue::Label(0), vec![0, 1]);
        assert!(check_constraint(&g, &ok, &c));
        assert!(!check_constraint(&g, &too_many, &c));
    }
}
