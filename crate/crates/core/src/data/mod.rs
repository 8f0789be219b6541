//! Datasets: the Erdős–Rényi component-count generator, the TUDataset text
//! format, and the canonical graph JSON encoding.

mod er;
pub mod json;
mod tudataset;

pub use er::{generate_er_dataset, ErGenConfig};
pub use json::{graph_from_value, graph_to_json, graph_to_value, json_to_graph, GraphJson};
pub use tudataset::{parse_tudataset, parse_tudataset_with, write_tudataset, TuOptions};

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{file}:{line}: {message}")]
    Parse { file: PathBuf, line: usize, message: String },
    #[error("inconsistent index in {file}:{line}: {message}")]
    InconsistentIndex { file: PathBuf, line: usize, message: String },
    #[error("could not decode graph JSON at `{path}`: {message}")]
    Decode { path: String, message: String },
    #[error("generation failed: {0}")]
    GenerationFailure(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DataError {
    pub(crate) fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        DataError::Io { path: path.as_ref().to_path_buf(), source }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub graphs: Vec<Graph>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Split,
}

impl LabeledDataset {
    pub fn new(graphs: Vec<Graph>, labels: Vec<usize>, num_classes: usize) -> Result<Self, DataError> {
        let ds = Self { graphs, labels, num_classes, split: Split::default() };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.labels.len() != self.graphs.len() {
            return Err(DataError::InvalidDataset(format!(
                "{} labels for {} graphs",
                self.labels.len(),
                self.graphs.len()
            )));
        }
        if let Some(bad) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(DataError::InvalidDataset(format!("label {bad} outside 0..{}", self.num_classes)));
        }
        let mut seen = BTreeSet::new();
        for &i in self.split.train.iter().chain(&self.split.validation).chain(&self.split.test) {
            if i >= self.graphs.len() || !seen.insert(i) {
                return Err(DataError::InvalidDataset(format!("split index {i} is out of range or repeated")));
            }
        }
        Ok(())
    }

    /// Shuffles indices with `seed` and assigns the given fractions to
    /// validation and test; the rest is training data.
    pub fn with_random_split(mut self, seed: u64, validation: f64, test: f64) -> Self {
        let mut idx: Vec<usize> = (0..self.graphs.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n = idx.len();
        let n_test = (((n as f64) * test).round() as usize).min(n);
        let n_val = (((n as f64) * validation).round() as usize).min(n - n_test);
        let test_part = idx.split_off(n - n_test);
        let val_part = idx.split_off(n - n_test - n_val);
        self.split = Split { train: idx, validation: val_part, test: test_part };
        self
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<(&Graph, usize)> {
        indices.iter().map(|&i| (&self.graphs[i], self.labels[i])).collect()
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let file = DatasetFile {
            num_classes: self.num_classes,
            labels: self.labels.clone(),
            split: self.split.clone(),
            graphs: self.graphs.iter().map(GraphJson::from).collect(),
        };
        let text = serde_json::to_string(&file).expect("dataset serialisation cannot fail");
        std::fs::write(path.as_ref(), text).map_err(|e| DataError::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| DataError::io(&path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let file: DatasetFile = serde_path_to_error::deserialize(de)
            .map_err(|e| DataError::Decode { path: e.path().to_string(), message: e.inner().to_string() })?;
        let graphs = file
            .graphs
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.into_graph().map_err(|e| match e {
                    DataError::Decode { path, message } => {
                        DataError::Decode { path: format!("graphs[{i}].{path}"), message }
                    }
                    other => other,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let ds = Self { graphs, labels: file.labels, num_classes: file.num_classes, split: file.split };
        ds.validate()?;
        Ok(ds)
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    num_classes: usize,
    labels: Vec<usize>,
    #[serde(default)]
    split: Split,
    graphs: Vec<GraphJson>,
}
