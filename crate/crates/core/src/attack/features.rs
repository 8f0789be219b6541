//! WL encoding of queried graphs and the surrogate built on top of it.

use rayon::prelude::*;

use crate::acquisition::{expected_improvement, PerturbationKind};
use crate::graph::{Graph, NodeData};
use crate::surrogate::{SurrogateConfig, SurrogatePosterior};
use crate::wl::{continuous_features, WlEncoder, WlError, WlVocabulary};

enum Encoding {
    Discrete(WlVocabulary),
    Continuous { levels: usize, pooled: bool, one_hot: Option<usize> },
}

/// Sparse rows of observed graphs with their losses. Discrete column ids are
/// stable, so rows stored early stay valid as the vocabulary grows.
pub(crate) struct Observations {
    encoding: Encoding,
    rows: Vec<Vec<(usize, f64)>>,
    pub losses: Vec<f64>,
}

impl Observations {
    pub fn new(base: &Graph, levels: usize, mode: PerturbationKind) -> Self {
        let encoding = match WlEncoder::for_graph(base, levels) {
            WlEncoder::Discrete { levels } => Encoding::Discrete(WlVocabulary::new(levels)),
            WlEncoder::Continuous { levels } => Encoding::Continuous {
                levels,
                pooled: mode == PerturbationKind::Inject,
                one_hot: match base.node_data() {
                    NodeData::Labels(l) => Some(l.iter().max().map_or(1, |&m| m as usize + 1)),
                    NodeData::Features(_) => None,
                },
            },
        };
        Self { encoding, rows: Vec::new(), losses: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn best(&self) -> f64 {
        self.losses.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn dim(&self) -> usize {
        match &self.encoding {
            Encoding::Discrete(v) => v.dim(),
            Encoding::Continuous { .. } => self.rows.first().map_or(0, Vec::len),
        }
    }

    fn sparse(&self, g: &Graph) -> Result<Vec<(usize, f64)>, WlError> {
        match &self.encoding {
            Encoding::Discrete(v) => v.transform_sparse(g),
            Encoding::Continuous { levels, pooled, one_hot } => {
                Ok(continuous_features(g, *levels, *pooled, *one_hot)?.into_iter().enumerate().collect())
            }
        }
    }

    fn dense(&self, sparse: &[(usize, f64)], dim: usize) -> Vec<f64> {
        let mut row = vec![0.0; dim];
        for &(j, x) in sparse {
            if j < dim {
                row[j] += x;
            }
        }
        row
    }

    pub fn push(&mut self, g: &Graph, loss: f64) -> Result<(), WlError> {
        if let Encoding::Discrete(v) = &mut self.encoding {
            v.extend(&[g])?;
        }
        let row = self.sparse(g)?;
        self.rows.push(row);
        self.losses.push(loss);
        Ok(())
    }

    /// Fits the surrogate on every observation, or `None` when it cannot be fitted.
    pub fn fit(&self, cfg: &SurrogateConfig) -> Option<Surrogate<'_>> {
        if self.len() < 2 {
            return None;
        }
        let dim = self.dim();
        let rows: Vec<Vec<f64>> = self.rows.iter().map(|r| self.dense(r, dim)).collect();
        let posterior = SurrogatePosterior::fit(&rows, &self.losses, cfg).ok()?;
        Some(Surrogate { obs: self, posterior, dim, best: self.best() })
    }
}

pub(crate) struct Surrogate<'o> {
    obs: &'o Observations,
    posterior: SurrogatePosterior,
    dim: usize,
    best: f64,
}

impl Surrogate<'_> {
    /// Expected improvement over the best observed loss; failures score -inf.
    pub fn expected_improvement(&self, graphs: &[Option<Graph>]) -> Vec<f64> {
        graphs
            .par_iter()
            .map(|g| {
                let Some(g) = g else { return f64::NEG_INFINITY };
                let Ok(sparse) = self.obs.sparse(g) else { return f64::NEG_INFINITY };
                match self.posterior.predict(&self.obs.dense(&sparse, self.dim)) {
                    Ok((mean, var)) => expected_improvement(mean, var, self.best),
                    Err(_) => f64::NEG_INFINITY,
                }
            })
            .collect()
    }
}
