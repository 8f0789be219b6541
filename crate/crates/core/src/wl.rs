//! Weisfeiler-Lehman feature extraction.
//!
//! Discrete graphs are refined by exact dictionary compression of
//! `(own label, sorted neighbour labels)` and summarised by per-level label
//! counts. Continuous or weighted graphs use the averaging update
//! `x' = ½(x + (1/deg) Σ w·x_u)`, where isolated nodes take a zero neighbour term.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, NodeData};

/// WL depth used when nothing else is configured.
pub const DEFAULT_LEVELS: usize = 1;

#[derive(Debug, Error, PartialEq)]
pub enum WlError {
    #[error("graph {index} does not carry {expected} node data")]
    TypeMismatch { index: usize, expected: &'static str },
    #[error("graph {index} has feature width {found}, expected {expected}")]
    FeatureWidth { index: usize, found: usize, expected: usize },
}

/// One row per graph, all of width `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

type Key = (usize, Vec<usize>);

/// Column dictionary for discrete WL labels.
///
/// Column ids are assigned in insertion order and never change, so growing the
/// vocabulary only appends columns. A batch fit inserts level by level with
/// keys sorted inside each level, giving column blocks ordered by level.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WlVocabulary {
    levels: usize,
    /// Level 0 maps raw labels; later levels map refinement keys.
    raw: HashMap<u32, usize>,
    refined: Vec<HashMap<Key, usize>>,
    column_level: Vec<usize>,
}

impl WlVocabulary {
    pub fn new(levels: usize) -> Self {
        Self { levels, raw: HashMap::new(), refined: vec![HashMap::new(); levels], column_level: Vec::new() }
    }

    pub fn fit(graphs: &[&Graph], levels: usize) -> Result<Self, WlError> {
        let mut vocab = Self::new(levels);
        vocab.extend(graphs)?;
        Ok(vocab)
    }

    /// Number of refinement iterations H.
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn dim(&self) -> usize {
        self.column_level.len()
    }

    /// WL level of each column.
    pub fn column_levels(&self) -> &[usize] {
        &self.column_level
    }

    fn push_column(&mut self, level: usize) -> usize {
        self.column_level.push(level);
        self.column_level.len() - 1
    }

    /// Adds every label the graphs produce. Existing columns keep their ids.
    pub fn extend(&mut self, graphs: &[&Graph]) -> Result<(), WlError> {
        let labels = graphs.iter().enumerate().map(|(i, g)| discrete_labels(g, i)).collect::<Result<Vec<_>, _>>()?;
        let new_raw: BTreeSet<u32> = labels.iter().flatten().filter(|l| !self.raw.contains_key(l)).copied().collect();
        for l in new_raw {
            let col = self.push_column(0);
            self.raw.insert(l, col);
        }
        let mut current: Vec<Vec<usize>> = labels.iter().map(|ls| ls.iter().map(|l| self.raw[l]).collect()).collect();
        let adjacency: Vec<Vec<Vec<usize>>> = graphs.iter().map(|g| neighbours(g)).collect();
        for h in 0..self.levels {
            let keys: Vec<Vec<Key>> = current.iter().zip(&adjacency).map(|(ids, adj)| refine_keys(ids, adj)).collect();
            let new_keys: BTreeSet<&Key> =
                keys.iter().flatten().filter(|k| !self.refined[h].contains_key(*k)).collect();
            for k in new_keys {
                let col = self.push_column(h + 1);
                self.refined[h].insert(k.clone(), col);
            }
            current = keys.iter().map(|ks| ks.iter().map(|k| self.refined[h][k]).collect()).collect();
        }
        Ok(())
    }

    /// Sparse counts `(column, count)` sorted by column. Labels missing from
    /// the vocabulary, and everything refined from them, are not counted.
    pub fn transform_sparse(&self, g: &Graph) -> Result<Vec<(usize, f64)>, WlError> {
        let labels = discrete_labels(g, 0)?;
        let adj = neighbours(g);
        let mut counts: HashMap<usize, f64> = HashMap::new();
        let mut current: Vec<Option<usize>> = labels.iter().map(|l| self.raw.get(l).copied()).collect();
        let mut tally = |ids: &[Option<usize>]| {
            for id in ids.iter().flatten() {
                *counts.entry(*id).or_default() += 1.0;
            }
        };
        tally(&current);
        for h in 0..self.levels {
            current = (0..current.len())
                .map(|v| {
                    let own = current[v]?;
                    let mut nb = adj[v].iter().map(|&u| current[u]).collect::<Option<Vec<_>>>()?;
                    nb.sort_unstable();
                    self.refined[h].get(&(own, nb)).copied()
                })
                .collect();
            tally(&current);
        }
        let mut out: Vec<(usize, f64)> = counts.into_iter().collect();
        out.sort_unstable_by_key(|&(c, _)| c);
        Ok(out)
    }

    pub fn transform(&self, g: &Graph) -> Result<Vec<f64>, WlError> {
        let mut row = vec![0.0; self.dim()];
        for (c, x) in self.transform_sparse(g)? {
            row[c] = x;
        }
        Ok(row)
    }

    pub fn transform_all(&self, graphs: &[&Graph]) -> Result<FeatureMatrix, WlError> {
        let rows = graphs
            .iter()
            .enumerate()
            .map(|(i, g)| self.transform(g).map_err(|e| reindex(e, i)))
            .collect::<Result<_, _>>()?;
        Ok(FeatureMatrix { dim: self.dim(), rows })
    }
}

fn reindex(e: WlError, index: usize) -> WlError {
    match e {
        WlError::TypeMismatch { expected, .. } => WlError::TypeMismatch { index, expected },
        WlError::FeatureWidth { found, expected, .. } => WlError::FeatureWidth { index, found, expected },
    }
}

fn discrete_labels(g: &Graph, index: usize) -> Result<Vec<u32>, WlError> {
    match g.node_data() {
        NodeData::Labels(l) => Ok(l.clone()),
        NodeData::Features(_) => Err(WlError::TypeMismatch { index, expected: "discrete" }),
    }
}

fn neighbours(g: &Graph) -> Vec<Vec<usize>> {
    g.adjacency().into_iter().map(|row| row.into_iter().map(|(u, _)| u).collect()).collect()
}

fn refine_keys(ids: &[usize], adj: &[Vec<usize>]) -> Vec<Key> {
    ids.iter()
        .zip(adj)
        .map(|(&own, nbrs)| {
            let mut nb: Vec<usize> = nbrs.iter().map(|&u| ids[u]).collect();
            nb.sort_unstable();
            (own, nb)
        })
        .collect()
}

/// Discrete WL counts for levels `0..=levels` over a vocabulary built from all inputs.
pub fn wl_extract_discrete(graphs: &[&Graph], levels: usize) -> Result<(FeatureMatrix, WlVocabulary), WlError> {
    let vocab = WlVocabulary::fit(graphs, levels)?;
    let features = vocab.transform_all(graphs)?;
    Ok((features, vocab))
}

/// Returns an extended copy of `existing` that also covers `new_graphs`.
pub fn refit_vocabulary(existing: &WlVocabulary, new_graphs: &[&Graph]) -> Result<WlVocabulary, WlError> {
    let mut vocab = existing.clone();
    vocab.extend(new_graphs)?;
    Ok(vocab)
}

/// Node states `X_0..X_levels` of the continuous update.
pub fn continuous_levels(g: &Graph, x0: Vec<Vec<f64>>, levels: usize) -> Vec<Vec<Vec<f64>>> {
    let n = g.num_nodes();
    let mut nbrs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (e, w) in g.edges() {
        nbrs[e.lo()].push((e.hi(), w));
        nbrs[e.hi()].push((e.lo(), w));
    }
    let mut out = vec![x0];
    for _ in 0..levels {
        let x = out.last().expect("level 0 present");
        let next = (0..n)
            .map(|v| {
                let mut avg = vec![0.0; x[v].len()];
                if !nbrs[v].is_empty() {
                    let inv = 1.0 / nbrs[v].len() as f64;
                    for &(u, w) in &nbrs[v] {
                        avg.iter_mut().zip(&x[u]).for_each(|(a, b)| *a += inv * w * b);
                    }
                }
                x[v].iter().zip(avg).map(|(a, b)| 0.5 * (a + b)).collect()
            })
            .collect();
        out.push(next);
    }
    out
}

fn node_features(g: &Graph, index: usize, one_hot_width: Option<usize>) -> Result<Vec<Vec<f64>>, WlError> {
    match (g.node_data(), one_hot_width) {
        (NodeData::Features(f), _) => Ok(f.clone()),
        (NodeData::Labels(l), Some(width)) => Ok(l
            .iter()
            .map(|&x| {
                let mut row = vec![0.0; width];
                if let Some(slot) = row.get_mut(x as usize) {
                    *slot = 1.0;
                }
                row
            })
            .collect()),
        (NodeData::Labels(_), None) => Err(WlError::TypeMismatch { index, expected: "continuous" }),
    }
}

/// Continuous WL row of one graph: concatenated row-major `X_0..X_levels`,
/// or per-level node sums when `pooled`. Labels are one-hot encoded when
/// `one_hot_width` is given.
pub fn continuous_features(
    g: &Graph,
    levels: usize,
    pooled: bool,
    one_hot_width: Option<usize>,
) -> Result<Vec<f64>, WlError> {
    let x0 = node_features(g, 0, one_hot_width)?;
    let width = x0.first().map_or(0, Vec::len);
    let states = continuous_levels(g, x0, levels);
    if !pooled {
        return Ok(states.into_iter().flatten().flatten().collect());
    }
    Ok(states
        .iter()
        .flat_map(|x| {
            let mut sum = vec![0.0; width];
            for row in x {
                sum.iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
            sum
        })
        .collect())
}

fn continuous_rows(graphs: &[&Graph], levels: usize, one_hot_width: Option<usize>) -> Result<FeatureMatrix, WlError> {
    let mut width = None;
    for (i, g) in graphs.iter().enumerate() {
        let w = match g.node_data() {
            NodeData::Features(f) => match f.first() {
                Some(r) => r.len(),
                None => continue,
            },
            NodeData::Labels(_) => match one_hot_width {
                Some(w) => w,
                None => return Err(WlError::TypeMismatch { index: i, expected: "continuous" }),
            },
        };
        if let NodeData::Features(f) = g.node_data() {
            if let Some(bad) = f.iter().find(|r| r.len() != w) {
                return Err(WlError::FeatureWidth { index: i, found: bad.len(), expected: w });
            }
        }
        match width {
            None => width = Some(w),
            Some(expected) if expected != w => return Err(WlError::FeatureWidth { index: i, found: w, expected }),
            _ => {}
        }
    }
    let pooled = !graphs.windows(2).all(|w| w[0].num_nodes() == w[1].num_nodes());
    let rows: Vec<Vec<f64>> = graphs
        .iter()
        .enumerate()
        .map(|(i, g)| continuous_features(g, levels, pooled, one_hot_width).map_err(|e| reindex(e, i)))
        .collect::<Result<_, _>>()?;
    let dim = rows.first().map_or(0, Vec::len);
    Ok(FeatureMatrix { dim, rows })
}

/// Continuous WL features for levels `0..=levels`: concatenated row-major `X_h`
/// when all graphs share a node count, per-level node sums otherwise.
pub fn wl_extract_continuous(graphs: &[&Graph], levels: usize) -> Result<FeatureMatrix, WlError> {
    continuous_rows(graphs, levels, None)
}

/// Picks the extractor a graph family needs: discrete counts for unweighted
/// labelled graphs, the continuous update otherwise (labels one-hot encoded).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WlEncoder {
    Discrete { levels: usize },
    Continuous { levels: usize },
}

impl WlEncoder {
    pub fn for_graph(g: &Graph, levels: usize) -> Self {
        match g.node_data() {
            NodeData::Labels(_) if !g.is_weighted() => Self::Discrete { levels },
            _ => Self::Continuous { levels },
        }
    }

    pub fn extract(&self, graphs: &[&Graph]) -> Result<FeatureMatrix, WlError> {
        match *self {
            Self::Discrete { levels } => wl_extract_discrete(graphs, levels).map(|(f, _)| f),
            Self::Continuous { levels } => {
                let width = graphs
                    .iter()
                    .filter_map(|g| match g.node_data() {
                        NodeData::Labels(l) => l.iter().max().map(|&m| m as usize + 1),
                        NodeData::Features(_) => None,
                    })
                    .max()
                    .unwrap_or(1);
                continuous_rows(graphs, levels, Some(width))
            }
        }
    }
}
