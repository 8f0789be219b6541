//! Canonical graph JSON:
//! `{"num_nodes", "edges", "edge_weights"?, "node_labels" | "node_features"}`.
//!
//! Edge weights are present only for weighted graphs and are aligned with
//! `edges`. Floats are written as shortest round-trip decimals.

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::graph::{Graph, NodeData};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphJson {
    pub num_nodes: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_labels: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_features: Option<Vec<Vec<f64>>>,
}

impl From<&Graph> for GraphJson {
    fn from(g: &Graph) -> Self {
        let (edges, weights): (Vec<[usize; 2]>, Vec<f64>) = g.edges().map(|(e, w)| ([e.lo(), e.hi()], w)).unzip();
        let (node_labels, node_features) = match g.node_data() {
            NodeData::Labels(l) => (Some(l.clone()), None),
            NodeData::Features(f) => (None, Some(f.clone())),
        };
        GraphJson {
            num_nodes: g.num_nodes(),
            edges,
            edge_weights: g.is_weighted().then_some(weights),
            node_labels,
            node_features,
        }
    }
}

fn decode_err(path: impl Into<String>, message: impl Into<String>) -> DataError {
    DataError::Decode { path: path.into(), message: message.into() }
}

impl GraphJson {
    pub fn into_graph(self) -> Result<Graph, DataError> {
        let node_data = match (self.node_labels, self.node_features) {
            (Some(l), None) => NodeData::Labels(l),
            (None, Some(f)) => NodeData::Features(f),
            (Some(_), Some(_)) => {
                return Err(decode_err("node_features", "node_labels and node_features are mutually exclusive"))
            }
            (None, None) => return Err(decode_err("node_labels", "one of node_labels or node_features is required")),
        };
        if node_data.len() != self.num_nodes {
            let field = if node_data.is_discrete() { "node_labels" } else { "node_features" };
            return Err(decode_err(field, format!("expected {} entries, found {}", self.num_nodes, node_data.len())));
        }
        let mut g = Graph::new(node_data).map_err(|e| decode_err("node_features", e.to_string()))?;
        match self.edge_weights {
            Some(weights) => {
                if weights.len() != self.edges.len() {
                    return Err(decode_err(
                        "edge_weights",
                        format!("{} weights for {} edges", weights.len(), self.edges.len()),
                    ));
                }
                g.set_weighted(true);
                for (i, ([u, v], w)) in self.edges.into_iter().zip(weights).enumerate() {
                    g.add_weighted_edge(u, v, w).map_err(|e| decode_err(format!("edges[{i}]"), e.to_string()))?;
                }
            }
            None => {
                for (i, [u, v]) in self.edges.into_iter().enumerate() {
                    g.add_edge(u, v).map_err(|e| decode_err(format!("edges[{i}]"), e.to_string()))?;
                }
            }
        }
        Ok(g)
    }
}

pub fn graph_to_value(g: &Graph) -> serde_json::Value {
    serde_json::to_value(GraphJson::from(g)).expect("graph serialisation cannot fail")
}

pub fn graph_to_json(g: &Graph) -> String {
    serde_json::to_string(&GraphJson::from(g)).expect("graph serialisation cannot fail")
}

pub fn graph_from_value(value: &serde_json::Value) -> Result<Graph, DataError> {
    let parsed: GraphJson =
        serde_path_to_error::deserialize(value).map_err(|e| decode_err(e.path().to_string(), e.inner().to_string()))?;
    parsed.into_graph()
}

pub fn json_to_graph(text: &str) -> Result<Graph, DataError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let parsed: GraphJson =
        serde_path_to_error::deserialize(de).map_err(|e| decode_err(e.path().to_string(), e.inner().to_string()))?;
    parsed.into_graph()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn triangle_encoding() {
        let mut g = Graph::new(NodeData::Labels(vec![0, 0, 1])).unwrap();
        g.add_edge(0, 1).unwrap();
        g.add_edge(1, 2).unwrap();
        g.add_edge(0, 2).unwrap();
        let text = graph_to_json(&g);
        assert_eq!(text, r#"{"num_nodes":3,"edges":[[0,1],[1,2],[0,2]],"node_labels":[0,0,1]}"#);
        assert_eq!(json_to_graph(&text).unwrap(), g);
    }

    #[test]
    fn continuous_features_omit_labels() {
        let g = Graph::new(NodeData::Features(vec![vec![0.5, 1.0], vec![-2.0, 0.1]])).unwrap();
        let text = graph_to_json(&g);
        assert!(text.contains(r#""node_features":[[0.5,1.0],[-2.0,0.1]]"#));
        assert!(!text.contains("node_labels"));
    }

    #[test]
    fn weights_round_trip_exactly() {
        let mut g = Graph::unlabeled(3);
        g.add_weighted_edge(0, 1, 0.1 + 0.2).unwrap();
        g.add_weighted_edge(1, 2, std::f64::consts::PI / 7.0).unwrap();
        let back = json_to_graph(&graph_to_json(&g)).unwrap();
        assert_eq!(back.weight(0, 1).unwrap().to_bits(), (0.1f64 + 0.2).to_bits());
        assert_eq!(back, g);
    }

    #[test]
    fn decode_errors_carry_a_path() {
        let err = json_to_graph(r#"{"num_nodes":2,"edges":[[0,1],[0,"x"]],"node_labels":[0,0]}"#).unwrap_err();
        match err {
            DataError::Decode { path, .. } => assert!(path.starts_with("edges[1]"), "{path}"),
            other => panic!("unexpected {other:?}"),
        }
        let err = json_to_graph(r#"{"num_nodes":2,"edges":[[0,1],[0,5]],"node_labels":[0,0]}"#).unwrap_err();
        assert!(matches!(err, DataError::Decode { ref path, .. } if path == "edges[1]"));
        let err = json_to_graph(r#"{"num_nodes":2,"edges":[],"node_labels":[0]}"#).unwrap_err();
        assert!(matches!(err, DataError::Decode { ref path, .. } if path == "node_labels"));
    }

    fn arb_graph() -> impl Strategy<Value = Graph> {
        (1usize..12, any::<bool>(), any::<bool>()).prop_flat_map(|(n, weighted, continuous)| {
            let pairs = proptest::collection::vec((0..n, 0..n, 0.0f64..10.0), 0..3 * n);
            let labels = proptest::collection::vec(0u32..5, n);
            let feats = proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 2), n);
            (pairs, labels, feats).prop_map(move |(pairs, labels, feats)| {
                let data = if continuous { NodeData::Features(feats) } else { NodeData::Labels(labels) };
                let mut g = Graph::new(data).unwrap();
                for (u, v, w) in pairs {
                    if u != v {
                        if weighted {
                            g.add_weighted_edge(u, v, w).unwrap();
                        } else {
                            g.add_edge(u, v).unwrap();
                        }
                    }
                }
                g
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn json_round_trip(g in arb_graph()) {
            let back = json_to_graph(&graph_to_json(&g)).unwrap();
            prop_assert_eq!(back, g);
        }
    }
}
