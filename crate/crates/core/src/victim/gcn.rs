//! Three-layer graph convolutional classifier with max-pool readout.
//!
//! Each layer computes `relu(Â · H · Θ + b)` with `Â = D̃^{-1/2} (A + I) D̃^{-1/2}`;
//! the readout max-pools node features and applies a linear layer and softmax.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{softmax, VictimError, VictimModel, VictimResponse};
use crate::data::LabeledDataset;
use crate::graph::{Graph, NodeData};

pub const NUM_LAYERS: usize = 3;

/// How node inputs are built from a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InputEncoding {
    /// One-hot discrete labels, or the raw feature rows.
    #[default]
    NodeData,
    /// One-hot node degree, clipped at `max_degree`. Ignores stored node data.
    Degree { max_degree: usize },
}

impl InputEncoding {
    pub fn width(&self) -> Option<usize> {
        match self {
            Self::NodeData => None,
            Self::Degree { max_degree } => Some(max_degree + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnWeights {
    #[serde(default)]
    pub encoding: InputEncoding,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    /// `input_dim × hidden`, then `hidden × hidden` twice.
    pub layers: Vec<DMatrix<f64>>,
    /// Per-layer bias, each of length `hidden`.
    pub layer_bias: Vec<DVector<f64>>,
    /// `num_classes × hidden`.
    pub readout: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl GcnWeights {
    pub fn zeros(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        let mut layers = vec![DMatrix::zeros(input_dim, hidden_dim)];
        for _ in 1..NUM_LAYERS {
            layers.push(DMatrix::zeros(hidden_dim, hidden_dim));
        }
        Self {
            encoding: InputEncoding::NodeData,
            input_dim,
            hidden_dim,
            num_classes,
            layers,
            layer_bias: vec![DVector::zeros(hidden_dim); NUM_LAYERS],
            readout: DMatrix::zeros(num_classes, hidden_dim),
            bias: DVector::zeros(num_classes),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn random(input_dim: usize, hidden_dim: usize, num_classes: usize, rng: &mut impl Rng) -> Self {
        let mut w = Self::zeros(input_dim, hidden_dim, num_classes);
        let mut fill = |m: &mut DMatrix<f64>| {
            let limit = (6.0 / (m.nrows() + m.ncols()) as f64).sqrt();
            m.iter_mut().for_each(|x| *x = rng.random_range(-limit..limit));
        };
        w.layers.iter_mut().for_each(&mut fill);
        fill(&mut w.readout);
        w
    }

    fn check(&self) -> Result<(), VictimError> {
        let ok = self.encoding.width().map_or(true, |w| w == self.input_dim)
            && self.layers.len() == NUM_LAYERS
            && self.layers[0].shape() == (self.input_dim, self.hidden_dim)
            && self.layers[1..].iter().all(|l| l.shape() == (self.hidden_dim, self.hidden_dim))
            && self.layer_bias.len() == NUM_LAYERS
            && self.layer_bias.iter().all(|b| b.len() == self.hidden_dim)
            && self.readout.shape() == (self.num_classes, self.hidden_dim)
            && self.bias.len() == self.num_classes;
        let finite = self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()));
        if ok && finite {
            Ok(())
        } else {
            Err(VictimError::ShapeMismatch("inconsistent or non-finite GCN weights".into()))
        }
    }

    fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.layers.iter().map(|l| l.as_slice()).collect();
        out.extend(self.layer_bias.iter().map(|b| b.as_slice()));
        out.push(self.readout.as_slice());
        out.push(self.bias.as_slice());
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.layers.iter_mut().map(|l| l.as_mut_slice()).collect();
        out.extend(self.layer_bias.iter_mut().map(|b| b.as_mut_slice()));
        out.push(self.readout.as_mut_slice());
        out.push(self.bias.as_mut_slice());
        out
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string(self).expect("weights serialise"))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self, VictimError> {
        let text = std::fs::read_to_string(path)?;
        let w: Self =
            serde_json::from_str(&text).map_err(|e| VictimError::ShapeMismatch(format!("weights file: {e}")))?;
        w.check()?;
        Ok(w)
    }
}

fn normalized_adjacency(g: &Graph) -> DMatrix<f64> {
    let n = g.num_nodes();
    let mut a = DMatrix::<f64>::identity(n, n);
    for (e, w) in g.edges() {
        a[(e.lo(), e.hi())] += w;
        a[(e.hi(), e.lo())] += w;
    }
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / a.row(i).sum().sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    a
}

fn input_features(g: &Graph, encoding: InputEncoding, input_dim: usize) -> Result<DMatrix<f64>, VictimError> {
    let n = g.num_nodes();
    if let InputEncoding::Degree { max_degree } = encoding {
        let mut x = DMatrix::zeros(n, input_dim);
        for (i, d) in g.degrees().into_iter().enumerate() {
            x[(i, d.min(max_degree))] = 1.0;
        }
        return Ok(x);
    }
    match g.node_data() {
        NodeData::Labels(labels) => {
            let mut x = DMatrix::zeros(n, input_dim);
            for (i, &l) in labels.iter().enumerate() {
                let l = l as usize;
                if l >= input_dim {
                    return Err(VictimError::ShapeMismatch(format!(
                        "node label {l} does not fit a one-hot input of width {input_dim}"
                    )));
                }
                x[(i, l)] = 1.0;
            }
            Ok(x)
        }
        NodeData::Features(rows) => {
            let dim = rows.first().map_or(input_dim, Vec::len);
            if dim != input_dim {
                return Err(VictimError::ShapeMismatch(format!("feature width {dim}, model expects {input_dim}")));
            }
            Ok(DMatrix::from_fn(n, input_dim, |i, j| rows[i][j]))
        }
    }
}

struct Prepared {
    adjacency: DMatrix<f64>,
    features: DMatrix<f64>,
}

fn prepare(g: &Graph, w: &GcnWeights) -> Result<Prepared, VictimError> {
    if g.num_nodes() == 0 {
        return Err(VictimError::ShapeMismatch("graph has no nodes".into()));
    }
    Ok(Prepared { adjacency: normalized_adjacency(g), features: input_features(g, w.encoding, w.input_dim)? })
}

struct Activations {
    /// `Â · H_{l-1}` per layer.
    aggregated: Vec<DMatrix<f64>>,
    /// Pre-activation per layer.
    pre: Vec<DMatrix<f64>>,
    argmax: Vec<usize>,
    pooled: DVector<f64>,
    probs: Vec<f64>,
}

fn forward(p: &Prepared, w: &GcnWeights) -> Activations {
    let mut h = p.features.clone();
    let mut aggregated = Vec::with_capacity(NUM_LAYERS);
    let mut pre = Vec::with_capacity(NUM_LAYERS);
    for (theta, bias) in w.layers.iter().zip(&w.layer_bias) {
        let agg = &p.adjacency * &h;
        let mut z = &agg * theta;
        for mut row in z.row_iter_mut() {
            row += bias.transpose();
        }
        h = z.map(|x| x.max(0.0));
        aggregated.push(agg);
        pre.push(z);
    }
    let mut argmax = vec![0; w.hidden_dim];
    let mut pooled = DVector::zeros(w.hidden_dim);
    for j in 0..w.hidden_dim {
        let col = h.column(j);
        let mut best = 0;
        for i in 1..col.len() {
            if col[i] > col[best] {
                best = i;
            }
        }
        argmax[j] = best;
        pooled[j] = col[best];
    }
    let logits = &w.readout * &pooled + &w.bias;
    let probs = softmax(logits.as_slice());
    Activations { aggregated, pre, argmax, pooled, probs }
}

/// Cross-entropy gradient of one example, laid out like [`GcnWeights`].
fn backward(p: &Prepared, w: &GcnWeights, act: &Activations, label: usize) -> GcnWeights {
    let mut grad = GcnWeights::zeros(w.input_dim, w.hidden_dim, w.num_classes);
    let mut dlogits = DVector::from_column_slice(&act.probs);
    dlogits[label] -= 1.0;
    grad.readout = &dlogits * act.pooled.transpose();
    grad.bias = dlogits.clone();
    let dpooled = w.readout.transpose() * &dlogits;
    let n = p.features.nrows();
    let mut dh = DMatrix::zeros(n, w.hidden_dim);
    for (j, &i) in act.argmax.iter().enumerate() {
        dh[(i, j)] = dpooled[j];
    }
    for l in (0..NUM_LAYERS).rev() {
        let dz = dh.zip_map(&act.pre[l], |d, z| if z > 0.0 { d } else { 0.0 });
        grad.layers[l] = act.aggregated[l].transpose() * &dz;
        grad.layer_bias[l] = dz.row_sum().transpose();
        if l > 0 {
            dh = &p.adjacency * (&dz * w.layers[l].transpose());
        }
    }
    grad
}

pub fn gcn_forward(g: &Graph, w: &GcnWeights) -> Result<VictimResponse, VictimError> {
    let p = prepare(g, w)?;
    Ok(VictimResponse { class_scores: forward(&p, w).probs })
}

/// In-process victim sharing read-only weights.
#[derive(Debug, Clone)]
pub struct GcnVictim {
    weights: Arc<GcnWeights>,
}

impl GcnVictim {
    pub fn new(weights: Arc<GcnWeights>) -> Self {
        Self { weights }
    }
}

impl VictimModel for GcnVictim {
    fn predict(&mut self, g: &Graph) -> Result<VictimResponse, VictimError> {
        gcn_forward(g, &self.weights)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden_dim: usize,
    pub encoding: InputEncoding,
    /// One-hot width for labelled graphs; inferred from the data when `None`.
    /// Ignored by the degree encoding.
    pub input_dim: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-2,
            hidden_dim: 16,
            encoding: InputEncoding::NodeData,
            input_dim: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedGcn {
    pub weights: GcnWeights,
    pub history: Vec<EpochStats>,
}

impl TrainedGcn {
    pub fn final_validation_accuracy(&self) -> Option<f64> {
        self.history.last().and_then(|s| s.validation_accuracy)
    }
}

fn infer_input_dim(ds: &LabeledDataset) -> usize {
    ds.graphs
        .iter()
        .map(|g| match g.node_data() {
            NodeData::Labels(l) => l.iter().map(|&x| x as usize + 1).max().unwrap_or(1),
            NodeData::Features(f) => f.first().map_or(0, Vec::len),
        })
        .max()
        .unwrap_or(1)
}

pub fn accuracy(w: &GcnWeights, items: &[(&Graph, usize)]) -> Result<f64, VictimError> {
    if items.is_empty() {
        return Ok(0.0);
    }
    let correct: Result<Vec<bool>, VictimError> =
        items.par_iter().map(|(g, y)| gcn_forward(g, w).map(|r| r.argmax() == *y)).collect();
    Ok(correct?.into_iter().filter(|&c| c).count() as f64 / items.len() as f64)
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(w: &GcnWeights) -> Self {
        let zeros: Vec<Vec<f64>> = w.slices().iter().map(|s| vec![0.0; s.len()]).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }

    fn step(&mut self, w: &mut GcnWeights, grad: &GcnWeights, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (k, (param, g)) in w.slices_mut().into_iter().zip(grad.slices()).enumerate() {
            for i in 0..param.len() {
                let m = &mut self.m[k][i];
                let v = &mut self.v[k][i];
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g[i];
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g[i] * g[i];
                param[i] -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Mini-batch Adam on cross-entropy over the training split. Deterministic for a fixed seed.
pub fn train_gcn(ds: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainedGcn, VictimError> {
    if ds.split.train.is_empty() {
        return Err(VictimError::ShapeMismatch("training split is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let input_dim = cfg.encoding.width().or(cfg.input_dim).unwrap_or_else(|| infer_input_dim(ds));
    let mut w = GcnWeights::random(input_dim, cfg.hidden_dim, ds.num_classes, &mut rng);
    w.encoding = cfg.encoding;
    let train: Vec<(Prepared, usize)> = ds
        .split
        .train
        .iter()
        .map(|&i| prepare(&ds.graphs[i], &w).map(|p| (p, ds.labels[i])))
        .collect::<Result<_, _>>()?;
    let validation = ds.subset(&ds.split.validation);
    let mut adam = Adam::new(&w);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total_loss, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let per_example: Vec<(GcnWeights, f64, bool)> = batch
                .par_iter()
                .map(|&i| {
                    let (p, y) = &train[i];
                    let act = forward(p, &w);
                    let loss = -act.probs[*y].max(1e-300).ln();
                    let hit = VictimResponse { class_scores: act.probs.clone() }.argmax() == *y;
                    (backward(p, &w, &act, *y), loss, hit)
                })
                .collect();
            let mut grad = GcnWeights::zeros(input_dim, cfg.hidden_dim, ds.num_classes);
            let scale = 1.0 / batch.len() as f64;
            for (g, loss, hit) in &per_example {
                for (acc, part) in grad.slices_mut().into_iter().zip(g.slices()) {
                    acc.iter_mut().zip(part).for_each(|(a, b)| *a += scale * b);
                }
                total_loss += loss;
                correct += usize::from(*hit);
            }
            adam.step(&mut w, &grad, cfg.learning_rate);
        }
        let loss = total_loss / train.len() as f64;
        if !loss.is_finite() {
            return Err(VictimError::Divergence { epoch, loss });
        }
        let validation_accuracy = if validation.is_empty() { None } else { Some(accuracy(&w, &validation)?) };
        history.push(EpochStats {
            epoch,
            loss,
            train_accuracy: correct as f64 / train.len() as f64,
            validation_accuracy,
        });
    }
    Ok(TrainedGcn { weights: w, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_er_dataset, ErGenConfig};

    fn random_labeled_graph(rng: &mut ChaCha8Rng, n: usize, labels: u32) -> Graph {
        let data = NodeData::Labels((0..n).map(|_| rng.random_range(0..labels)).collect());
        let mut g = Graph::new(data).unwrap();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(0.3) {
                    g.add_edge(u, v).unwrap();
                }
            }
        }
        g
    }

    #[test]
    fn zero_weights_give_uniform_scores() {
        let w = GcnWeights::zeros(1, 16, 4);
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        let r = gcn_forward(&g, &w).unwrap();
        assert!(r.class_scores.iter().all(|&s| (s - 0.25).abs() < 1e-15));
    }

    #[test]
    fn single_node_is_an_mlp() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = GcnWeights::random(2, 16, 3, &mut rng);
        let g = Graph::new(NodeData::Labels(vec![1])).unwrap();
        let mut h = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        for (theta, b) in w.layers.iter().zip(&w.layer_bias) {
            let mut z = &h * theta;
            for mut row in z.row_iter_mut() {
                row += b.transpose();
            }
            h = z.map(|x| x.max(0.0));
        }
        let logits = &w.readout * h.transpose() + &w.bias;
        let expected = softmax(logits.as_slice());
        let got = gcn_forward(&g, &w).unwrap().class_scores;
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn label_outside_one_hot_width_is_rejected() {
        let w = GcnWeights::zeros(2, 16, 2);
        let g = Graph::new(NodeData::Labels(vec![0, 5])).unwrap();
        assert!(matches!(gcn_forward(&g, &w), Err(VictimError::ShapeMismatch(_))));
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = GcnWeights::random(3, 16, 2, &mut rng);
        for _ in 0..100 {
            let n = rng.random_range(1..12);
            let g = random_labeled_graph(&mut rng, n, 3);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let a = gcn_forward(&g, &w).unwrap().class_scores;
            let b = gcn_forward(&g.permuted(&perm), &w).unwrap().class_scores;
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = GcnWeights::random(3, 5, 3, &mut rng);
        let g = random_labeled_graph(&mut rng, 7, 3);
        let p = prepare(&g, &w).unwrap();
        let label = 1;
        let grad = backward(&p, &w, &forward(&p, &w), label);
        let loss = |w: &GcnWeights| -forward(&p, w).probs[label].ln();
        let h = 1e-6;
        for (k, gs) in grad.slices().iter().enumerate() {
            for i in 0..gs.len() {
                let mut plus = w.clone();
                plus.slices_mut()[k][i] += h;
                let mut minus = w.clone();
                minus.slices_mut()[k][i] -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                assert!(
                    (numeric - gs[i]).abs() < 1e-6,
                    "param block {k} index {i}: numeric {numeric} analytic {}",
                    gs[i]
                );
            }
        }
    }

    #[test]
    fn single_class_training_is_trivially_accurate() {
        let graphs: Vec<Graph> = (0..10).map(|n| Graph::unlabeled(n + 1)).collect();
        let ds = LabeledDataset::new(graphs, vec![0; 10], 1).unwrap().with_random_split(0, 0.2, 0.0);
        let trained = train_gcn(&ds, &TrainConfig { epochs: 3, ..TrainConfig::default() }).unwrap();
        assert_eq!(trained.final_validation_accuracy(), Some(1.0));
        assert_eq!(trained.history.last().unwrap().train_accuracy, 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = generate_er_dataset(&ErGenConfig::default(), 60).unwrap();
        let cfg = TrainConfig { epochs: 3, seed: 5, ..TrainConfig::default() };
        let a = train_gcn(&ds, &cfg).unwrap();
        let b = train_gcn(&ds, &cfg).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn empty_training_split_is_an_error() {
        let ds = LabeledDataset::new(vec![Graph::unlabeled(2)], vec![0], 1).unwrap();
        assert!(train_gcn(&ds, &TrainConfig::default()).is_err());
    }

    #[test]
    fn degree_encoding_clips_and_ignores_labels() {
        let mut g = Graph::new(NodeData::Labels(vec![7, 7, 7, 7])).unwrap();
        for v in 1..4 {
            g.add_edge(0, v).unwrap();
        }
        let x = input_features(&g, InputEncoding::Degree { max_degree: 2 }, 3).unwrap();
        assert_eq!(x.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0]);
        assert_eq!(x.row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0]);
        assert_eq!(
            input_features(&Graph::unlabeled(1), InputEncoding::Degree { max_degree: 2 }, 3)
                .unwrap()
                .row(0)
                .iter()
                .copied()
                .collect::<Vec<_>>(),
            vec![1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn degree_encoding_fixes_input_width() {
        let ds = generate_er_dataset(&ErGenConfig::default(), 40).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            encoding: InputEncoding::Degree { max_degree: 15 },
            input_dim: Some(3),
            ..TrainConfig::default()
        };
        let w = train_gcn(&ds, &cfg).unwrap().weights;
        assert_eq!(w.input_dim, 16);
        let mut bad = w.clone();
        bad.input_dim = 4;
        assert!(bad.check().is_err());
    }
}
