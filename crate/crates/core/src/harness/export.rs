use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{write_json, HarnessError};
use crate::attack::AttackResult;
use crate::graph::{Edge, Graph, GraphError, NodeData, NodeValue, Perturbation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedEdge {
    pub edge: [usize; 2],
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedNode {
    pub id: usize,
    pub value: NodeValue,
}

/// Difference between a clean graph and its adversarial counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditAnnotation {
    pub added: Vec<WeightedEdge>,
    pub deleted: Vec<[usize; 2]>,
    /// Edges present in both graphs whose weight changed.
    pub reweighted: Vec<WeightedEdge>,
    pub injected: Vec<InjectedNode>,
    /// The perturbation sequence that produced the adversarial graph.
    pub edits: Vec<Perturbation>,
}

fn edge_map(g: &Graph) -> BTreeMap<Edge, f64> {
    g.edges().collect()
}

pub fn annotate(clean: &Graph, adversarial: &Graph, edits: Vec<Perturbation>) -> EditAnnotation {
    let (before, after) = (edge_map(clean), edge_map(adversarial));
    let pair = |e: &Edge| [e.lo(), e.hi()];
    let mut ann =
        EditAnnotation { added: Vec::new(), deleted: Vec::new(), reweighted: Vec::new(), injected: Vec::new(), edits };
    for (e, &w) in &after {
        match before.get(e) {
            None => ann.added.push(WeightedEdge { edge: pair(e), weight: w }),
            Some(&old) if old != w => ann.reweighted.push(WeightedEdge { edge: pair(e), weight: w }),
            _ => {}
        }
    }
    ann.deleted = before.keys().filter(|e| !after.contains_key(e)).map(pair).collect();
    for id in clean.num_nodes()..adversarial.num_nodes() {
        let value = match adversarial.node_data() {
            NodeData::Labels(l) => NodeValue::Label(l[id]),
            NodeData::Features(f) => NodeValue::Features(f[id].clone()),
        };
        ann.injected.push(InjectedNode { id, value });
    }
    ann
}

/// Rebuilds the adversarial graph from the clean graph and an annotation.
pub fn apply_annotation(clean: &Graph, ann: &EditAnnotation) -> Result<Graph, GraphError> {
    let mut g = clean.clone();
    for node in &ann.injected {
        let id = g.push_node(&node.value).map_err(|reason| GraphError::InvalidPerturbation {
            perturbation: Perturbation::inject(node.value.clone(), Vec::new()),
            reason,
        })?;
        debug_assert_eq!(id, node.id);
    }
    for [u, v] in &ann.deleted {
        g.remove_edge(Edge::new(*u, *v));
    }
    for e in ann.added.iter().chain(&ann.reweighted) {
        g.set_edge_weight(Edge::new(e.edge[0], e.edge[1]), e.weight);
    }
    Ok(g)
}

/// Writes `<stem>.graph.json` and `<stem>.edits.json` for a successful attack.
pub fn export_adversarial_graph(
    result: &AttackResult,
    dir: &Path,
    stem: &str,
) -> Result<(PathBuf, PathBuf), HarnessError> {
    let crate::attack::Outcome::Success { graph, .. } = &result.trace.outcome else {
        return Err(HarnessError::InvalidInput("attack did not succeed".into()));
    };
    let clean = result.trace.stage_bases[0].clone().into_graph()?;
    let adversarial = graph.clone().into_graph()?;
    let ann = annotate(&clean, &adversarial, result.trace.adversarial_edits().unwrap_or_default());
    let graph_path = dir.join(format!("{stem}.graph.json"));
    let edits_path = dir.join(format!("{stem}.edits.json"));
    write_json(&graph_path, graph)?;
    write_json(&edits_path, &ann)?;
    Ok((graph_path, edits_path))
}
