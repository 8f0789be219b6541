//! Random sampling and mutation of admissible perturbations.

use std::hash::Hash;
use std::ops::RangeInclusive;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{check_constraint, ConstraintSet, Graph, NodeData, NodeValue, Perturbation};

/// Rejection-sampling bound for one admissible draw.
pub const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    #[default]
    Flip,
    Rewire,
    Swap,
    Inject,
}

/// Node value given to injected nodes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InjectInit {
    /// Label 0, or an all-zero feature vector.
    #[default]
    Zero,
    /// Copy of a uniformly chosen existing node.
    CopyRandom,
    Constant(NodeValue),
}

/// Draws and mutates single perturbations of one kind under a constraint set.
#[derive(Debug, Clone)]
pub struct Sampler {
    pub kind: PerturbationKind,
    pub constraints: ConstraintSet,
    pub inject: InjectInit,
}

impl Sampler {
    pub fn new(kind: PerturbationKind, constraints: ConstraintSet) -> Self {
        Self { kind, constraints, inject: InjectInit::Zero }
    }

    fn injected_value(&self, g: &Graph, rng: &mut ChaCha8Rng) -> NodeValue {
        match (&self.inject, g.node_data()) {
            (InjectInit::Constant(v), _) => v.clone(),
            (InjectInit::Zero, NodeData::Labels(_)) => NodeValue::Label(0),
            (InjectInit::Zero, NodeData::Features(f)) => NodeValue::Features(vec![0.0; f.first().map_or(0, Vec::len)]),
            (InjectInit::CopyRandom, NodeData::Labels(l)) => NodeValue::Label(l.choose(rng).copied().unwrap_or(0)),
            (InjectInit::CopyRandom, NodeData::Features(f)) => {
                NodeValue::Features(f.choose(rng).cloned().unwrap_or_default())
            }
        }
    }

    /// Connection cap for an injected node: the configured cap, else the
    /// average degree of `g` rounded, at least 1.
    pub fn injection_cap(&self, g: &Graph) -> usize {
        let n = g.num_nodes().max(1);
        self.constraints
            .max_edges_per_injected_node
            .unwrap_or_else(|| ((2 * g.num_edges()) as f64 / n as f64).round().max(1.0) as usize)
            .clamp(1, n)
    }

    /// One unconstrained draw of this kind; may be structurally invalid.
    fn propose(&self, g: &Graph, rng: &mut ChaCha8Rng) -> Option<Perturbation> {
        let n = g.num_nodes();
        match self.kind {
            PerturbationKind::Flip => {
                if n < 2 {
                    return None;
                }
                let u = rng.random_range(0..n);
                let v = (u + rng.random_range(1..n)) % n;
                Some(Perturbation::flip(u, v))
            }
            PerturbationKind::Rewire | PerturbationKind::Swap => {
                if n < 3 || g.num_edges() == 0 {
                    return None;
                }
                let e = g.edges().nth(rng.random_range(0..g.num_edges()))?.0;
                let (u, v) = if rng.random_bool(0.5) { (e.lo(), e.hi()) } else { (e.hi(), e.lo()) };
                let s = other_node(n, &[u, v], rng)?;
                Some(if self.kind == PerturbationKind::Rewire {
                    Perturbation::rewire(u, v, s)
                } else {
                    Perturbation::swap(u, v, s)
                })
            }
            PerturbationKind::Inject => {
                if n == 0 {
                    return None;
                }
                let k = rng.random_range(1..=self.injection_cap(g));
                let mut nodes: Vec<usize> = (0..n).collect();
                let (picked, _) = nodes.partial_shuffle(rng, k);
                Some(Perturbation::inject(self.injected_value(g, rng), picked.to_vec()))
            }
        }
    }

    /// Whether `p` is admissible on `g` and changes it.
    pub fn admissible(&self, g: &Graph, p: &Perturbation) -> bool {
        if !check_constraint(g, p, &self.constraints) {
            return false;
        }
        match p {
            Perturbation::Swap { u, v, s } => g.weight(*u, *v) != g.weight(*u, *s),
            _ => true,
        }
    }

    /// Uniform-ish admissible one-edit perturbation of `g`, by rejection.
    pub fn random(&self, g: &Graph, rng: &mut ChaCha8Rng) -> Option<Perturbation> {
        (0..MAX_ATTEMPTS).filter_map(|_| self.propose(g, rng)).find(|p| self.admissible(g, p))
    }

    /// Child sharing one end node with `parent`. Flips keep one end and move
    /// the other; rewires and swaps move `s`; injections move one connection.
    pub fn mutate(&self, g: &Graph, parent: &Perturbation, rng: &mut ChaCha8Rng) -> Option<Perturbation> {
        let n = g.num_nodes();
        (0..MAX_ATTEMPTS)
            .filter_map(|_| -> Option<Perturbation> {
                match parent {
                    Perturbation::Flip { u, v } => {
                        let keep = if rng.random_bool(0.5) { *u } else { *v };
                        Some(Perturbation::flip(keep, other_node(n, &[*u, *v], rng)?))
                    }
                    Perturbation::Rewire { u, v, s } => {
                        Some(Perturbation::rewire(*u, *v, other_node(n, &[*u, *v, *s], rng)?))
                    }
                    Perturbation::Swap { u, v, s } => {
                        Some(Perturbation::swap(*u, *v, other_node(n, &[*u, *v, *s], rng)?))
                    }
                    Perturbation::Inject { node, connections } => {
                        let i = rng.random_range(0..connections.len().max(1));
                        let fresh = other_node(n, connections, rng)?;
                        let mut next = connections.clone();
                        if next.is_empty() {
                            next.push(fresh);
                        } else {
                            next[i] = fresh;
                        }
                        Some(Perturbation::inject(node.clone(), next))
                    }
                }
            })
            .find(|p| p != parent && self.admissible(g, p))
    }
}

/// Uniform node outside `exclude`, or `None` if there is none.
fn other_node(n: usize, exclude: &[usize], rng: &mut ChaCha8Rng) -> Option<usize> {
    let free = n.checked_sub(exclude.iter().filter(|&&x| x < n).count())?;
    if free == 0 {
        return None;
    }
    let mut k = rng.random_range(0..free);
    let mut sorted = exclude.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for x in sorted.into_iter().filter(|&x| x < n) {
        if k >= x {
            k += 1;
        }
    }
    Some(k)
}

/// A search space the genetic acquisition optimiser can explore.
pub trait CandidateSpace {
    type Item: Clone + Ord + Hash + Send + Sync;

    fn random(&self, rng: &mut ChaCha8Rng) -> Option<Self::Item>;
    fn mutate(&self, parent: &Self::Item, rng: &mut ChaCha8Rng) -> Option<Self::Item>;
}

/// Single admissible edits of a fixed base graph.
#[derive(Debug, Clone)]
pub struct OneEditSpace<'a> {
    pub base: &'a Graph,
    pub sampler: &'a Sampler,
}

impl CandidateSpace for OneEditSpace<'_> {
    type Item = Perturbation;

    fn random(&self, rng: &mut ChaCha8Rng) -> Option<Perturbation> {
        self.sampler.random(self.base, rng)
    }

    fn mutate(&self, parent: &Perturbation, rng: &mut ChaCha8Rng) -> Option<Perturbation> {
        self.sampler.mutate(self.base, parent, rng)
    }
}

/// Sequences of edits applied in order to a base graph, each admissible on
/// the graph it meets and no two on the same node pair.
#[derive(Debug, Clone)]
pub struct EditSetSpace<'a> {
    pub base: &'a Graph,
    pub sampler: &'a Sampler,
    pub sizes: RangeInclusive<usize>,
}

impl EditSetSpace<'_> {
    /// Applies `edits` in order, checking each step. Returns the final graph.
    pub fn realise(&self, edits: &[Perturbation]) -> Option<Graph> {
        let mut g = self.base.clone();
        for (i, p) in edits.iter().enumerate() {
            if edits[..i].iter().any(|q| same_pair(p, q)) || !self.sampler.admissible(&g, p) {
                return None;
            }
            g = g.apply(p).ok()?;
        }
        Some(g)
    }

    fn extend_from(
        &self,
        mut edits: Vec<Perturbation>,
        size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Option<Vec<Perturbation>> {
        let mut g = self.realise(&edits)?;
        while edits.len() < size {
            let p = (0..MAX_ATTEMPTS)
                .filter_map(|_| self.sampler.random(&g, rng))
                .find(|p| edits.iter().all(|q| !same_pair(p, q)))?;
            g = g.apply(&p).ok()?;
            edits.push(p);
        }
        Some(edits)
    }
}

fn same_pair(a: &Perturbation, b: &Perturbation) -> bool {
    match (a, b) {
        (Perturbation::Flip { .. }, Perturbation::Flip { .. }) => a == b,
        _ => false,
    }
}

impl CandidateSpace for EditSetSpace<'_> {
    type Item = Vec<Perturbation>;

    fn random(&self, rng: &mut ChaCha8Rng) -> Option<Vec<Perturbation>> {
        let size = rng.random_range(self.sizes.clone());
        self.extend_from(Vec::new(), size, rng)
    }

    fn mutate(&self, parent: &Vec<Perturbation>, rng: &mut ChaCha8Rng) -> Option<Vec<Perturbation>> {
        if parent.is_empty() {
            return self.random(rng);
        }
        for _ in 0..MAX_ATTEMPTS / 10 {
            let i = rng.random_range(0..parent.len());
            let before = self.realise(&parent[..i])?;
            let Some(child) = self.sampler.mutate(&before, &parent[i], rng) else { continue };
            let mut edits = parent.clone();
            edits[i] = child;
            if self.realise(&edits).is_some() && &edits != parent {
                return Some(edits);
            }
        }
        None
    }
}
