use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::export::annotate;
use super::HarnessError;
use crate::attack::{AttackResult, Outcome};
use crate::graph::{shortest_path_lengths, DisjointSet, Graph};

/// Structure of successful adversarial edits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternReport {
    pub successes: usize,
    /// Successes changing at least two edges.
    pub multi_edit_successes: usize,
    /// Share of multi-edit successes whose changed edges form one cluster,
    /// two edges being linked when some endpoints are at most two hops apart
    /// in the clean graph.
    pub clustered_fraction: Option<f64>,
    /// Clean-graph degree of each original endpoint of a changed edge.
    pub endpoint_degrees: BTreeMap<usize, usize>,
    /// Degrees of all nodes of the attacked clean graphs.
    pub base_degrees: BTreeMap<usize, usize>,
    pub mean_endpoint_degree: Option<f64>,
    pub mean_base_degree: f64,
    pub added_edges: usize,
    pub deleted_edges: usize,
    pub add_delete_ratio: Option<f64>,
}

fn mean(hist: &BTreeMap<usize, usize>) -> Option<f64> {
    let count: usize = hist.values().sum();
    (count > 0).then(|| hist.iter().map(|(d, c)| (d * c) as f64).sum::<f64>() / count as f64)
}

fn clustered(g: &Graph, edges: &[[usize; 2]]) -> bool {
    let n = g.num_nodes();
    let dist: BTreeMap<usize, Vec<Option<usize>>> =
        edges.iter().flatten().filter(|&&u| u < n).map(|&u| (u, shortest_path_lengths(g, u))).collect();
    let close = |a: &[usize; 2], b: &[usize; 2]| {
        a.iter().any(|u| {
            b.iter()
                .any(|v| u == v || dist.get(u).is_some_and(|d| d.get(*v).copied().flatten().is_some_and(|x| x <= 2)))
        })
    };
    let mut sets = DisjointSet::new(edges.len());
    for i in 0..edges.len() {
        for j in i + 1..edges.len() {
            if close(&edges[i], &edges[j]) {
                sets.union(i, j);
            }
        }
    }
    sets.num_sets() == 1
}

pub fn adversarial_pattern_stats(results: &[AttackResult]) -> Result<PatternReport, HarnessError> {
    let mut report = PatternReport {
        successes: 0,
        multi_edit_successes: 0,
        clustered_fraction: None,
        endpoint_degrees: BTreeMap::new(),
        base_degrees: BTreeMap::new(),
        mean_endpoint_degree: None,
        mean_base_degree: 0.0,
        added_edges: 0,
        deleted_edges: 0,
        add_delete_ratio: None,
    };
    let mut clusters = 0;
    for r in results {
        let Outcome::Success { graph, .. } = &r.trace.outcome else { continue };
        let clean = r.trace.stage_bases[0].clone().into_graph()?;
        let adversarial = graph.clone().into_graph()?;
        let ann = annotate(&clean, &adversarial, Vec::new());
        report.successes += 1;
        report.added_edges += ann.added.len();
        report.deleted_edges += ann.deleted.len();
        let degrees = clean.degrees();
        for &d in &degrees {
            *report.base_degrees.entry(d).or_default() += 1;
        }
        let changed: Vec<[usize; 2]> =
            ann.added.iter().chain(&ann.reweighted).map(|e| e.edge).chain(ann.deleted.iter().copied()).collect();
        for &u in changed.iter().flatten().filter(|&&u| u < clean.num_nodes()) {
            *report.endpoint_degrees.entry(degrees[u]).or_default() += 1;
        }
        if changed.len() >= 2 {
            report.multi_edit_successes += 1;
            if clustered(&clean, &changed) {
                clusters += 1;
            }
        }
    }
    if report.successes == 0 {
        return Err(HarnessError::EmptyInput);
    }
    report.clustered_fraction =
        (report.multi_edit_successes > 0).then(|| clusters as f64 / report.multi_edit_successes as f64);
    report.mean_endpoint_degree = mean(&report.endpoint_degrees);
    report.mean_base_degree = mean(&report.base_degrees).unwrap_or(0.0);
    report.add_delete_ratio =
        (report.deleted_edges > 0).then(|| report.added_edges as f64 / report.deleted_edges as f64);
    Ok(report)
}
