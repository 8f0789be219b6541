//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use grabnel_core::graph::{ConstraintMode, Graph, NodeData, Perturbation};
use grabnel_core::wl::wl_extract_discrete;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use grabnel_core::surrogate::SurrogateConfig;

pub fn random_labelled_graph(rng: &mut impl Rng, max_n: usize, num_labels: u32) -> Graph {
    let n = rng.random_range(1..=max_n);
    let labels = (0..n).map(|_| rng.random_range(0..num_labels)).collect();
    let mut g = Graph::new(NodeData::Labels(labels)).unwrap();
    let p = rng.random_range(0.1..0.7);
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                g.add_edge(u, v).unwrap();
            }
        }
    }
    g
}

/// Uncompressed WL: each refined label is the full nested string.
pub fn string_labels(g: &Graph, levels: usize) -> Vec<Vec<String>> {
    let NodeData::Labels(l) = g.node_data() else { panic!("discrete graph expected") };
    let adj = g.adjacency();
    let mut out = vec![l.iter().map(|x| x.to_string()).collect::<Vec<_>>()];
    for _ in 0..levels {
        let prev = out.last().unwrap();
        let next = (0..g.num_nodes())
            .map(|v| {
                let mut nb: Vec<&str> = adj[v].iter().map(|&(u, _)| prev[u].as_str()).collect();
                nb.sort_unstable();
                format!("({}|{})", prev[v], nb.join(","))
            })
            .collect();
        out.push(next);
    }
    out
}

/// Per level, the sorted list of count columns produced by the string oracle.
pub fn oracle_columns(graphs: &[&Graph], levels: usize) -> Vec<Vec<Vec<u64>>> {
    let strings: Vec<_> = graphs.iter().map(|g| string_labels(g, levels)).collect();
    (0..=levels)
        .map(|h| {
            let vocab: BTreeSet<&String> = strings.iter().flat_map(|s| &s[h]).collect();
            let mut cols: Vec<Vec<u64>> = vocab
                .iter()
                .map(|key| strings.iter().map(|s| s[h].iter().filter(|x| x == key).count() as u64).collect())
                .collect();
            cols.sort();
            cols
        })
        .collect()
}

pub fn extracted_columns(graphs: &[&Graph], levels: usize) -> Vec<Vec<Vec<u64>>> {
    let (phi, vocab) = wl_extract_discrete(graphs, levels).unwrap();
    let mut per_level = vec![Vec::new(); levels + 1];
    for (c, &h) in vocab.column_levels().iter().enumerate() {
        per_level[h].push(phi.rows.iter().map(|r| r[c] as u64).collect::<Vec<_>>());
    }
    per_level.iter_mut().for_each(|cols| cols.sort());
    per_level
}

pub fn random_rows(rng: &mut impl Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..5.0)).collect()).collect()
}

/// Min-max scaled, centred inputs and standardised targets, computed independently.
pub fn scaled(rows: &[Vec<f64>], y: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let d = rows[0].len();
    let mut x = DMatrix::zeros(rows.len(), d);
    for j in 0..d {
        let lo = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
        for (i, r) in rows.iter().enumerate() {
            x[(i, j)] = if hi > lo { (r[j] - lo) / (hi - lo) } else { 0.0 };
        }
        let centre = x.column(j).mean();
        x.column_mut(j).add_scalar_mut(-centre);
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let std = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-8);
    (x, DVector::from_iterator(y.len(), y.iter().map(|v| (v - mean) / std)))
}

/// Posterior weight mean and covariance by a dense solve.
pub fn dense_posterior(x: &DMatrix<f64>, t: &DVector<f64>, lambda: &[f64], noise: f64) -> (DVector<f64>, DMatrix<f64>) {
    let mut a = x.transpose() * x / noise;
    for (i, l) in lambda.iter().enumerate() {
        a[(i, i)] += l;
    }
    let mean = a.clone().lu().solve(&(x.transpose() * t / noise)).unwrap();
    (mean, a.try_inverse().unwrap())
}

pub fn dense_log_evidence(
    x: &DMatrix<f64>,
    t: &DVector<f64>,
    lambda: &[f64],
    noise: f64,
    cfg: &SurrogateConfig,
) -> f64 {
    let n = t.len();
    let inv_lambda = DMatrix::from_diagonal(&DVector::from_iterator(lambda.len(), lambda.iter().map(|l| 1.0 / l)));
    let c = DMatrix::<f64>::identity(n, n) * noise + x * inv_lambda * x.transpose();
    let lu = c.clone().lu();
    let quad = t.dot(&lu.solve(t).unwrap());
    let log_det = lu.determinant().ln();
    let (k, r) = (cfg.gamma_shape, cfg.gamma_rate);
    let prior: f64 = lambda.iter().map(|&l| k * r.ln() - ln_gamma(k) + k * l.ln() - r * l).sum();
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad) + prior
}

/// Stratified Monte-Carlo estimate of E[max(0, X - best)], X ~ N(mean, sd²).
pub fn mc_improvement(mean: f64, sd: f64, best: f64, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let normal = Normal::new(mean, sd).unwrap();
    let total: f64 = (0..samples)
        .map(|i| {
            let u = (i as f64 + rng.random::<f64>()) / samples as f64;
            (normal.inverse_cdf(u.clamp(1e-300, 1.0 - 1e-16)) - best).max(0.0)
        })
        .sum();
    total / samples as f64
}

const FAR: usize = usize::MAX / 4;

pub fn adjacency_matrix(g: &Graph) -> Vec<Vec<bool>> {
    let n = g.num_nodes();
    (0..n).map(|u| (0..n).map(|v| u != v && g.has_edge(u, v)).collect()).collect()
}

/// All-pairs hop distances by Floyd-Warshall.
pub fn hop_distances(a: &[Vec<bool>]) -> Vec<Vec<usize>> {
    let n = a.len();
    let mut d: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0
                    } else if a[i][j] {
                        1
                    } else {
                        FAR
                    }
                })
                .collect()
        })
        .collect();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
            }
        }
    }
    d
}

pub fn component_count(a: &[Vec<bool>]) -> usize {
    let d = hop_distances(a);
    (0..a.len()).filter(|&i| (0..i).all(|j| d[i][j] >= FAR)).count()
}

/// The adjacency after `p`, or `None` when `p` is not applicable.
pub fn apply_dense(a: &[Vec<bool>], p: &Perturbation) -> Option<Vec<Vec<bool>>> {
    let n = a.len();
    let mut b = a.to_vec();
    let mut set = |u: usize, v: usize, x: bool| {
        b[u][v] = x;
        b[v][u] = x;
    };
    match *p {
        Perturbation::Flip { u, v } => {
            if u == v || u >= n || v >= n {
                return None;
            }
            set(u, v, !a[u][v]);
        }
        Perturbation::Rewire { u, v, s } | Perturbation::Swap { u, v, s } => {
            if u == v || u == s || v == s || u >= n || v >= n || s >= n {
                return None;
            }
            if matches!(p, Perturbation::Rewire { .. }) {
                if !a[u][v] || a[u][s] {
                    return None;
                }
                set(u, v, false);
                set(u, s, true);
            } else {
                if !a[u][v] && !a[u][s] {
                    return None;
                }
                set(u, v, a[u][s]);
                set(u, s, a[u][v]);
            }
        }
        Perturbation::Inject { .. } => panic!("structural perturbations only"),
    }
    Some(b)
}

/// Admissibility decided on dense matrices, independently of the graph code.
pub fn brute_admissible(g: &Graph, p: &Perturbation, mode: ConstraintMode) -> bool {
    let a = adjacency_matrix(g);
    let Some(b) = apply_dense(&a, p) else { return false };
    let d = hop_distances(&a);
    let n = a.len();
    match mode {
        ConstraintMode::None => true,
        ConstraintMode::TwoHop => (0..n).all(|i| (i + 1..n).all(|j| !(b[i][j] && !a[i][j]) || d[i][j] <= 2)),
        ConstraintMode::TwoHopRewire => match *p {
            Perturbation::Rewire { u, s, .. } => d[u][s] <= 2,
            _ => false,
        },
        ConstraintMode::PreserveComponents => component_count(&a) == component_count(&b),
    }
}

/// Every flip, rewire and swap over node ids `0..=n`, including invalid ones.
pub fn all_structural_perturbations(n: usize) -> Vec<Perturbation> {
    let mut out = Vec::new();
    for u in 0..=n {
        for v in 0..=n {
            out.push(Perturbation::Flip { u, v });
            for s in 0..=n {
                out.push(Perturbation::Rewire { u, v, s });
                out.push(Perturbation::Swap { u, v, s });
            }
        }
    }
    out
}
