//! Deterministic stand-in victims for tests and smoke runs.

use super::{VictimError, VictimModel, VictimResponse};
use crate::graph::Graph;

/// Always predicts `class` with probability 1.
#[derive(Debug, Clone, Copy)]
pub struct ConstantOracle {
    pub class: usize,
    pub num_classes: usize,
}

impl VictimModel for ConstantOracle {
    fn predict(&mut self, _: &Graph) -> Result<VictimResponse, VictimError> {
        let mut scores = vec![0.0; self.num_classes];
        scores[self.class] = 1.0;
        Ok(VictimResponse { class_scores: scores })
    }
}

/// Wraps a closure returning probabilities.
pub struct FnOracle<F> {
    f: F,
}

impl<F> FnOracle<F>
where
    F: FnMut(&Graph) -> Vec<f64> + Send,
{
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<F> VictimModel for FnOracle<F>
where
    F: FnMut(&Graph) -> Vec<f64> + Send,
{
    fn predict(&mut self, g: &Graph) -> Result<VictimResponse, VictimError> {
        VictimResponse::from_probabilities((self.f)(g))
    }
}

/// Two-class victim that predicts class 1 while edge `{u, v}` is present and
/// class 0 once it is removed.
pub fn vulnerable_edge_oracle(u: usize, v: usize) -> FnOracle<impl FnMut(&Graph) -> Vec<f64> + Send> {
    FnOracle::new(move |g: &Graph| if g.has_edge(u, v) { vec![0.2, 0.8] } else { vec![0.8, 0.2] })
}
