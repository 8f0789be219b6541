//! Victim classifiers: the built-in GCN, scripted test oracles, and external
//! models reached over a newline-delimited JSON protocol. Every query goes
//! through a [`QuerySession`], whose counter is the ledger all budgets read.

mod gcn;
pub mod protocol;
pub mod scripted;

pub use gcn::{
    accuracy, gcn_forward, train_gcn, EpochStats, GcnVictim, GcnWeights, InputEncoding, TrainConfig, TrainedGcn,
};
pub use protocol::{serve, serve_tcp, ExternalVictim, ExternalVictimOptions, ScoreKind};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;

/// Replies whose sum is further than this from 1 are rejected.
pub const SIMPLEX_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum VictimError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("victim did not answer within {0:?}")]
    Timeout(std::time::Duration),
    #[error("scores are not on the probability simplex: {0:?}")]
    SimplexViolation(Vec<f64>),
    #[error("victim reported an error: {0}")]
    Remote(String),
    /// The request never left this process; it is not counted as a query.
    #[error("failed to send request: {0}")]
    SendFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Class pseudo-probabilities on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VictimResponse {
    pub class_scores: Vec<f64>,
}

impl VictimResponse {
    /// Validates probabilities, renormalising small deviations from the simplex.
    pub fn from_probabilities(scores: Vec<f64>) -> Result<Self, VictimError> {
        let sum: f64 = scores.iter().sum();
        let bad = scores.is_empty()
            || scores.iter().any(|s| !s.is_finite() || *s < 0.0)
            || (sum - 1.0).abs() > SIMPLEX_TOLERANCE;
        if bad {
            return Err(VictimError::SimplexViolation(scores));
        }
        Ok(Self { class_scores: scores.into_iter().map(|s| s / sum).collect() })
    }

    pub fn from_logits(logits: &[f64]) -> Result<Self, VictimError> {
        if logits.is_empty() || logits.iter().any(|l| !l.is_finite()) {
            return Err(VictimError::SimplexViolation(logits.to_vec()));
        }
        Ok(Self { class_scores: softmax(logits) })
    }

    pub fn num_classes(&self) -> usize {
        self.class_scores.len()
    }

    /// Index of the largest score; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &s) in self.class_scores.iter().enumerate() {
            if s > self.class_scores[best] {
                best = i;
            }
        }
        best
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Anything that maps a graph to class scores.
pub trait VictimModel: Send {
    fn predict(&mut self, g: &Graph) -> Result<VictimResponse, VictimError>;
}

impl<V: VictimModel + ?Sized> VictimModel for Box<V> {
    fn predict(&mut self, g: &Graph) -> Result<VictimResponse, VictimError> {
        (**self).predict(g)
    }
}

/// One attack's channel to a victim. Queries are strictly sequential.
pub struct QuerySession<'a> {
    model: Box<dyn VictimModel + 'a>,
    queries: u64,
}

impl<'a> QuerySession<'a> {
    pub fn new(model: impl VictimModel + 'a) -> Self {
        Self { model: Box::new(model), queries: 0 }
    }

    /// Counts every transmitted request, including ones answered with an error.
    pub fn query(&mut self, g: &Graph) -> Result<VictimResponse, VictimError> {
        let out = self.model.predict(g);
        if !matches!(out, Err(VictimError::SendFailed(_))) {
            self.queries += 1;
        }
        out
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }
}
