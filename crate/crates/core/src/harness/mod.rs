//! Attack campaigns over datasets: eligibility filtering, per-graph attacks on
//! a worker pool, ASR curves, persistence and adversarial-pattern statistics.

mod asr;
mod export;
mod patterns;

pub use asr::{AsrCurve, CurvePoint, Normalisation, GRID_POINTS};
pub use export::{annotate, apply_annotation, export_adversarial_graph, EditAnnotation, InjectedNode, WeightedEdge};
pub use patterns::{adversarial_pattern_stats, PatternReport};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{run_attack, AttackConfig, AttackError, AttackResult, Attacker};
use crate::data::{DataError, LabeledDataset};
use crate::victim::{QuerySession, VictimError, VictimModel};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("victim unreachable: {0}")]
    Unreachable(VictimError),
    #[error("no successful attacks to analyse")]
    EmptyInput,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<crate::graph::GraphError> for HarnessError {
    fn from(e: crate::graph::GraphError) -> Self {
        HarnessError::Data(DataError::Graph(e))
    }
}

/// Builds a fresh victim connection for one attack.
pub type VictimFactory<'a> = dyn Fn() -> Result<Box<dyn VictimModel + 'a>, VictimError> + Sync + 'a;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Campaign {
    pub attacker: Attacker,
    pub config: AttackConfig,
    pub normalisation: Normalisation,
    /// Worker threads; 0 uses one per core.
    pub workers: usize,
    /// Graphs to consider; the test split when absent.
    pub graphs: Option<Vec<usize>>,
    /// Attack at most this many eligible graphs, in index order.
    pub limit: Option<usize>,
}

impl Default for Campaign {
    fn default() -> Self {
        Self {
            attacker: Attacker::Grabnel,
            config: AttackConfig::default(),
            normalisation: Normalisation::PerNodeSquared,
            workers: 0,
            graphs: None,
            limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub index: usize,
    pub label: usize,
    pub num_nodes: usize,
    /// Victim queries made by this graph's attack session.
    pub queries: u64,
    pub success: bool,
    pub net_edits: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub attacker: Attacker,
    pub seed: u64,
    pub considered: usize,
    pub clean_correct: usize,
    pub clean_accuracy: f64,
    pub eligible: usize,
    pub successes: usize,
    /// Successes over eligible graphs.
    pub asr: f64,
    /// Accuracy over considered graphs after successful attacks.
    pub post_attack_accuracy: f64,
    pub mean_net_edits: Option<f64>,
    pub median_net_edits: Option<f64>,
    pub clean_queries: u64,
    pub attack_queries: u64,
    pub asr_area: f64,
    pub graphs: Vec<GraphRecord>,
}

#[derive(Debug, Clone)]
pub struct CampaignOutput {
    pub summary: CampaignSummary,
    pub results: BTreeMap<usize, AttackResult>,
    pub curve: AsrCurve,
}

/// Independent seed for the attack on graph `index`.
pub fn graph_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.next_u64()
}

fn unreachable(e: &VictimError) -> bool {
    matches!(e, VictimError::Io(_) | VictimError::SendFailed(_) | VictimError::Timeout(_))
}

fn median(sorted: &[f64]) -> Option<f64> {
    match sorted.len() {
        0 => None,
        n if n % 2 == 1 => Some(sorted[n / 2]),
        n => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    }
}

/// Attacks every originally-correct graph of the campaign.
///
/// Per-graph attack failures are recorded and skipped. The campaign fails
/// only when the victim cannot be reached during the clean pass.
pub fn run_campaign(
    campaign: &Campaign,
    dataset: &LabeledDataset,
    victim: &VictimFactory<'_>,
) -> Result<CampaignOutput, HarnessError> {
    let indices = campaign.graphs.clone().unwrap_or_else(|| dataset.split.test.clone());
    if let Some(&bad) = indices.iter().find(|&&i| i >= dataset.len()) {
        return Err(HarnessError::InvalidInput(format!("graph index {bad} out of range")));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(campaign.workers)
        .build()
        .map_err(|e| HarnessError::InvalidInput(e.to_string()))?;

    let clean: Vec<Result<usize, VictimError>> = pool.install(|| {
        indices
            .par_iter()
            .map(|&i| {
                let mut session = QuerySession::new(victim()?);
                Ok(session.query(&dataset.graphs[i])?.argmax())
            })
            .collect()
    });
    let mut eligible = Vec::new();
    let mut clean_queries = 0;
    for (&i, pred) in indices.iter().zip(clean) {
        match pred {
            Ok(p) => {
                clean_queries += 1;
                if p == dataset.labels[i] {
                    eligible.push(i);
                }
            }
            Err(e) if unreachable(&e) => return Err(HarnessError::Unreachable(e)),
            Err(_) => clean_queries += 1,
        }
    }
    let clean_correct = eligible.len();
    if let Some(limit) = campaign.limit {
        eligible.truncate(limit);
    }

    let outcomes: Vec<(usize, u64, Result<AttackResult, String>)> = pool.install(|| {
        eligible
            .par_iter()
            .map(|&i| {
                let cfg = AttackConfig { seed: graph_seed(campaign.config.seed, i), ..campaign.config.clone() };
                let mut session = match victim() {
                    Ok(v) => QuerySession::new(v),
                    Err(e) => return (i, 0, Err(e.to_string())),
                };
                let r = run_attack(campaign.attacker, &mut session, &dataset.graphs[i], dataset.labels[i], &cfg);
                (i, session.queries(), r.map_err(|e| e.to_string()))
            })
            .collect()
    });

    let mut results = BTreeMap::new();
    let mut graphs = Vec::new();
    let mut points = Vec::new();
    for (i, queries, r) in outcomes {
        let g = &dataset.graphs[i];
        let mut record = GraphRecord {
            index: i,
            label: dataset.labels[i],
            num_nodes: g.num_nodes(),
            queries,
            success: false,
            net_edits: None,
            error: None,
        };
        match r {
            Ok(res) => {
                record.success = res.success;
                record.net_edits = res.net_edits;
                points.push(CurvePoint {
                    num_nodes: g.num_nodes(),
                    budget: res.budget.queries as u64,
                    success_queries: res.success.then_some(res.queries),
                });
                results.insert(i, res);
            }
            Err(e) => {
                points.push(CurvePoint { num_nodes: g.num_nodes(), budget: 1, success_queries: None });
                record.error = Some(e);
            }
        }
        graphs.push(record);
    }
    let curve = AsrCurve::from_points(&points, campaign.normalisation);
    let successes = graphs.iter().filter(|r| r.success).count();
    let mut edits: Vec<f64> = graphs.iter().filter_map(|r| r.net_edits.map(|e| e as f64)).collect();
    edits.sort_by(f64::total_cmp);
    let considered = indices.len();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let summary = CampaignSummary {
        attacker: campaign.attacker,
        seed: campaign.config.seed,
        considered,
        clean_correct,
        clean_accuracy: ratio(clean_correct, considered),
        eligible: graphs.len(),
        successes,
        asr: ratio(successes, graphs.len()),
        post_attack_accuracy: ratio(clean_correct - successes, considered),
        mean_net_edits: (!edits.is_empty()).then(|| edits.iter().sum::<f64>() / edits.len() as f64),
        median_net_edits: median(&edits),
        clean_queries,
        attack_queries: graphs.iter().map(|r| r.queries).sum(),
        asr_area: curve.area(),
        graphs,
    };
    Ok(CampaignOutput { summary, results, curve })
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| HarnessError::Json { path: path.to_path_buf(), message: e.to_string() })?;
    fs::write(path, text + "\n").map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Json {
        path: path.to_path_buf(),
        message: format!("at `{}`: {}", e.path(), e.inner()),
    })
}

pub fn save_result(path: &Path, result: &AttackResult) -> Result<(), HarnessError> {
    write_json(path, result)
}

pub fn load_result(path: &Path) -> Result<AttackResult, HarnessError> {
    read_json(path)
}

pub fn trace_file_name(index: usize) -> String {
    format!("graph_{index:05}.json")
}

/// Writes `traces/graph_NNNNN.json`, `asr.csv` and `summary.json` under `dir`.
pub fn write_campaign(output: &CampaignOutput, dir: &Path) -> Result<(), HarnessError> {
    let traces = dir.join("traces");
    fs::create_dir_all(&traces).map_err(|source| HarnessError::Io { path: traces.clone(), source })?;
    for (&i, r) in &output.results {
        save_result(&traces.join(trace_file_name(i)), r)?;
    }
    let csv = dir.join("asr.csv");
    fs::write(&csv, output.curve.to_csv()).map_err(|source| HarnessError::Io { path: csv, source })?;
    write_json(&dir.join("summary.json"), &output.summary)
}

/// Loads every trace file of a campaign directory, in file-name order.
pub fn load_traces(dir: &Path) -> Result<Vec<AttackResult>, HarnessError> {
    let traces = if dir.join("traces").is_dir() { dir.join("traces") } else { dir.to_path_buf() };
    let mut paths: Vec<PathBuf> = fs::read_dir(&traces)
        .map_err(|source| HarnessError::Io { path: traces.clone(), source })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_result(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_seeds_differ_and_repeat() {
        assert_eq!(graph_seed(1, 4), graph_seed(1, 4));
        assert_ne!(graph_seed(1, 4), graph_seed(1, 5));
        assert_ne!(graph_seed(1, 4), graph_seed(2, 4));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[1.0, 2.0, 4.0]), Some(2.0));
        assert_eq!(median(&[1.0, 2.0, 4.0, 5.0]), Some(3.0));
        assert_eq!(median(&[]), None);
    }
}
