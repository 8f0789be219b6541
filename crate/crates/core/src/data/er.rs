use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, LabeledDataset};
use crate::graph::{DisjointSet, Graph};

/// Erdős–Rényi component-count task: the label is the number of connected
/// components, each component being an ER graph repaired to be connected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErGenConfig {
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Allowed component counts; class `i` is `component_range[i]` components.
    pub component_range: Vec<usize>,
    pub edge_probability: f64,
    pub seed: u64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
}

impl Default for ErGenConfig {
    fn default() -> Self {
        Self {
            min_nodes: 15,
            max_nodes: 20,
            component_range: vec![1, 2, 3],
            edge_probability: 0.4,
            seed: 0,
            validation_fraction: 0.1,
            test_fraction: 0.1,
        }
    }
}

impl ErGenConfig {
    fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidConfig(m));
        if self.min_nodes > self.max_nodes {
            return bad(format!("min_nodes {} > max_nodes {}", self.min_nodes, self.max_nodes));
        }
        if !(self.edge_probability > 0.0 && self.edge_probability < 1.0) {
            return bad(format!("edge_probability {} not in (0, 1)", self.edge_probability));
        }
        if self.component_range.is_empty() || self.component_range.contains(&0) {
            return bad("component_range must list positive counts".into());
        }
        let most = self.component_range.iter().max().copied().unwrap_or(1);
        if 2 * most > self.min_nodes.max(1) && most > 1 {
            return bad(format!("{most} components of at least 2 nodes do not fit in {} nodes", self.min_nodes));
        }
        Ok(())
    }
}

/// Uniformly random composition of `total` into `parts` summands, each at least `min_part`.
fn random_partition(total: usize, parts: usize, min_part: usize, rng: &mut impl Rng) -> Vec<usize> {
    let spare = total - parts * min_part;
    // stars and bars: choose the bar positions among spare + parts - 1 slots
    let slots = spare + parts - 1;
    let mut bars: Vec<usize> = sample(rng, slots, parts - 1).into_vec();
    bars.sort_unstable();
    let mut sizes = Vec::with_capacity(parts);
    let mut prev = 0usize;
    for (i, &b) in bars.iter().enumerate() {
        // stars before this bar, minus those already assigned
        sizes.push(min_part + (b - i) - prev);
        prev = b - i;
    }
    sizes.push(min_part + spare - prev);
    sizes
}

fn connected_er_component(
    g: &mut Graph,
    offset: usize,
    size: usize,
    p: f64,
    rng: &mut impl Rng,
) -> Result<(), DataError> {
    let mut dsu = DisjointSet::new(size);
    for a in 0..size {
        for b in a + 1..size {
            if rng.random_bool(p) {
                g.add_edge(offset + a, offset + b)?;
                dsu.union(a, b);
            }
        }
    }
    let max_attempts = 100 * size * size + 100;
    let mut attempts = 0;
    while dsu.num_sets() > 1 {
        if attempts == max_attempts {
            return Err(DataError::GenerationFailure(format!(
                "component of {size} nodes still disconnected after {max_attempts} repair attempts"
            )));
        }
        attempts += 1;
        let a = rng.random_range(0..size);
        let b = rng.random_range(0..size);
        if !dsu.same(a, b) {
            g.add_edge(offset + a, offset + b)?;
            dsu.union(a, b);
        }
    }
    Ok(())
}

pub fn generate_er_dataset(cfg: &ErGenConfig, size: usize) -> Result<LabeledDataset, DataError> {
    cfg.validate()?;
    if size == 0 {
        return Err(DataError::InvalidConfig("dataset size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut graphs = Vec::with_capacity(size);
    let mut labels = Vec::with_capacity(size);
    for _ in 0..size {
        let class = rng.random_range(0..cfg.component_range.len());
        let k = cfg.component_range[class];
        let lo = cfg.min_nodes.max(2 * k);
        let n = rng.random_range(lo..=cfg.max_nodes.max(lo));
        let min_part = if k == 1 { 1 } else { 2 };
        let parts = random_partition(n, k, min_part, &mut rng);
        let mut g = Graph::unlabeled(n);
        let mut offset = 0;
        for part in parts {
            connected_er_component(&mut g, offset, part, cfg.edge_probability, &mut rng)?;
            offset += part;
        }
        graphs.push(g);
        labels.push(class);
    }
    Ok(LabeledDataset::new(graphs, labels, cfg.component_range.len())?.with_random_split(
        cfg.seed ^ 0x5eed,
        cfg.validation_fraction,
        cfg.test_fraction,
    ))
}
