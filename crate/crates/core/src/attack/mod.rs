//! Attack loss, budget rules, the staged GRABNEL loop and baseline attackers.

mod baselines;
mod features;
mod staged;

pub use baselines::{genetic_attack, grabnel_no_sequential_attack, random_attack};
pub use staged::{grabnel_attack, sequential_random_attack};

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{AcquisitionConfig, CandidateSpace, InjectInit, PerturbationKind, Sampler, MAX_ATTEMPTS};
use crate::data::GraphJson;
use crate::graph::{edit_distance_from_base, ConstraintSet, Graph, GraphError, Perturbation};
use crate::surrogate::SurrogateConfig;
use crate::victim::{QuerySession, VictimError, VictimResponse};
use crate::wl::{WlError, DEFAULT_LEVELS};

/// Scores are floored here before taking logs.
pub const SCORE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid attack configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Victim(#[from] VictimError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Features(#[from] WlError),
}

/// Margin loss, positive exactly when the attack has succeeded.
///
/// Untargeted: `max_{t != y} log f_t - log f_y`. Targeted: `log f_t - log f_y`.
pub fn attack_loss(resp: &VictimResponse, y: usize, target: Option<usize>) -> f64 {
    let log = |i: usize| resp.class_scores[i].max(SCORE_FLOOR).ln();
    let own = log(y);
    match target {
        Some(t) => log(t) - own,
        None => (0..resp.num_classes()).filter(|&t| t != y).map(log).fold(f64::NEG_INFINITY, f64::max) - own,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Attacker {
    Grabnel,
    Random,
    SequentialRandom,
    Genetic,
    GrabnelNoSequential,
}

impl Attacker {
    pub const ALL: [Attacker; 5] = [
        Attacker::Grabnel,
        Attacker::Random,
        Attacker::SequentialRandom,
        Attacker::Genetic,
        Attacker::GrabnelNoSequential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attacker::Grabnel => "grabnel",
            Attacker::Random => "random",
            Attacker::SequentialRandom => "sequential-random",
            Attacker::Genetic => "genetic",
            Attacker::GrabnelNoSequential => "grabnel-no-sequential",
        }
    }
}

impl std::str::FromStr for Attacker {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Attacker::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| format!("unknown attacker `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneticConfig {
    pub population_size: usize,
    /// Fittest individuals that breed each generation.
    pub parents: usize,
}

impl Default for GeneticConfig {
    fn default() -> Self {
        Self { population_size: 20, parents: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub mode: PerturbationKind,
    pub constraints: ConstraintSet,
    pub budget_ratio: f64,
    pub query_multiplier: usize,
    pub query_cap: usize,
    /// Overrides the edit budget derived from `budget_ratio`.
    pub edit_budget: Option<usize>,
    /// Overrides `query_multiplier * edits`; the cap still applies.
    pub query_budget: Option<usize>,
    /// Random one-edit queries issued before the first surrogate fit.
    pub n_init: usize,
    pub target: Option<usize>,
    pub seed: u64,
    pub wl_levels: usize,
    pub inject_init: InjectInit,
    pub acquisition: AcquisitionConfig,
    pub surrogate: SurrogateConfig,
    pub genetic: GeneticConfig,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            mode: PerturbationKind::Flip,
            constraints: ConstraintSet::default(),
            budget_ratio: 0.03,
            query_multiplier: 40,
            query_cap: 20_000,
            edit_budget: None,
            query_budget: None,
            n_init: 10,
            target: None,
            seed: 0,
            wl_levels: DEFAULT_LEVELS,
            inject_init: InjectInit::Zero,
            acquisition: AcquisitionConfig::default(),
            surrogate: SurrogateConfig::default(),
            genetic: GeneticConfig::default(),
        }
    }
}

impl AttackConfig {
    pub fn sampler(&self) -> Sampler {
        Sampler { kind: self.mode, constraints: self.constraints.clone(), inject: self.inject_init.clone() }
    }

    fn validate(&self, y: usize) -> Result<(), AttackError> {
        let bad = |m: &str| Err(AttackError::InvalidConfig(m.into()));
        if !(self.budget_ratio > 0.0 && self.budget_ratio.is_finite()) {
            return bad("budget_ratio must be positive");
        }
        if self.query_multiplier == 0 {
            return bad("query_multiplier must be at least 1");
        }
        if self.target == Some(y) {
            return bad("target class equals the true class");
        }
        if self.genetic.population_size == 0 || self.genetic.parents == 0 {
            return bad("genetic population and parents must be positive");
        }
        self.acquisition.validate().map_err(AttackError::InvalidConfig)
    }
}

/// Edit budget Δ and query budget B for one graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub edits: usize,
    pub queries: usize,
}

impl Budget {
    /// Queries per stage: `floor(B / Δ)` each, the remainder going to the last.
    pub fn stage_budgets(&self) -> Vec<usize> {
        let per = self.queries / self.edits;
        let mut out = vec![per; self.edits];
        if let Some(last) = out.last_mut() {
            *last += self.queries % self.edits;
        }
        out
    }
}

/// Δ = max(1, floor(r·n²)) for structural edits, max(1, floor(f·n)) injected
/// nodes for injection; B = min(multiplier·Δ, cap).
pub fn attack_budget(n: usize, cfg: &AttackConfig) -> Result<Budget, AttackError> {
    let derived = match cfg.mode {
        PerturbationKind::Inject => cfg.constraints.max_injected_fraction * n as f64,
        _ => cfg.budget_ratio * (n * n) as f64,
    };
    let edits = cfg.edit_budget.unwrap_or(((derived + 1e-9).floor() as usize).max(1));
    let queries = cfg.query_budget.unwrap_or(cfg.query_multiplier.saturating_mul(edits)).min(cfg.query_cap);
    if edits == 0 {
        return Err(AttackError::InvalidConfig("edit budget must be at least 1".into()));
    }
    if queries < edits {
        return Err(AttackError::InvalidConfig(format!("query budget {queries} is smaller than edit budget {edits}")));
    }
    Ok(Budget { edits, queries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub stage: usize,
    /// Edits applied to the stage base graph.
    pub edits: Vec<Perturbation>,
    pub loss: f64,
    /// Cumulative queries after this one.
    pub queries: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Success { graph: GraphJson, net_edits: usize, queries: u64 },
    Exhausted { queries: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackTrace {
    pub records: Vec<QueryRecord>,
    /// Base graph of every stage reached; the first is the clean graph.
    pub stage_bases: Vec<GraphJson>,
    /// Edit committed at the end of each completed stage.
    pub committed: Vec<Perturbation>,
    pub outcome: Outcome,
}

impl AttackTrace {
    pub fn is_success(&self) -> bool {
        matches!(self.outcome, Outcome::Success { .. })
    }

    pub fn queries(&self) -> u64 {
        match self.outcome {
            Outcome::Success { queries, .. } | Outcome::Exhausted { queries } => queries,
        }
    }

    /// The successful record, if any.
    pub fn winning_record(&self) -> Option<&QueryRecord> {
        self.is_success().then(|| self.records.last()).flatten()
    }

    /// All edits from the clean graph to the adversarial one.
    pub fn adversarial_edits(&self) -> Option<Vec<Perturbation>> {
        let rec = self.winning_record()?;
        let mut edits = self.committed[..rec.stage].to_vec();
        edits.extend(rec.edits.iter().cloned());
        Some(edits)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub attacker: Attacker,
    pub label: usize,
    pub target: Option<usize>,
    pub budget: Budget,
    pub trace: AttackTrace,
    pub success: bool,
    pub queries: u64,
    pub net_edits: Option<usize>,
    /// Best loss seen after each query.
    pub loss_curve: Vec<f64>,
    /// Training rows of every surrogate fit, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub surrogate_fits: Vec<usize>,
    /// Best fitness in the population after each generation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generation_best: Vec<f64>,
}

/// Runs `attacker` against the victim behind `session`.
pub fn run_attack(
    attacker: Attacker,
    session: &mut QuerySession<'_>,
    g: &Graph,
    y: usize,
    cfg: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    match attacker {
        Attacker::Grabnel => grabnel_attack(session, g, y, cfg),
        Attacker::Random => random_attack(session, g, y, cfg),
        Attacker::SequentialRandom => sequential_random_attack(session, g, y, cfg),
        Attacker::Genetic => genetic_attack(session, g, y, cfg),
        Attacker::GrabnelNoSequential => grabnel_no_sequential_attack(session, g, y, cfg),
    }
}

/// Query accounting and trace recording shared by all attackers.
pub(crate) struct Ledger<'s, 'v> {
    session: &'s mut QuerySession<'v>,
    start: u64,
    limit: u64,
    y: usize,
    target: Option<usize>,
    pub records: Vec<QueryRecord>,
    pub best: f64,
}

impl<'s, 'v> Ledger<'s, 'v> {
    fn new(session: &'s mut QuerySession<'v>, budget: Budget, y: usize, target: Option<usize>) -> Self {
        let start = session.queries();
        Self { session, start, limit: budget.queries as u64, y, target, records: Vec::new(), best: f64::NEG_INFINITY }
    }

    pub fn used(&self) -> u64 {
        self.session.queries() - self.start
    }

    pub fn remaining(&self) -> u64 {
        self.limit.saturating_sub(self.used())
    }

    /// Queries `g`, records the result and returns its loss.
    pub fn query(&mut self, g: &Graph, stage: usize, edits: Vec<Perturbation>) -> Result<f64, AttackError> {
        let resp = self.session.query(g)?;
        let classes = resp.num_classes();
        if self.y >= classes || self.target.is_some_and(|t| t >= classes) {
            return Err(AttackError::InvalidConfig(format!("class index out of range for a {classes}-class victim")));
        }
        let loss = attack_loss(&resp, self.y, self.target);
        self.best = self.best.max(loss);
        self.records.push(QueryRecord { stage, edits, loss, queries: self.used() });
        Ok(loss)
    }
}

/// Assembles the result once an attack has stopped.
pub(crate) struct Finish {
    pub attacker: Attacker,
    pub budget: Budget,
    pub stage_bases: Vec<GraphJson>,
    pub committed: Vec<Perturbation>,
    /// Adversarial graph when the last record succeeded.
    pub adversarial: Option<Graph>,
    pub surrogate_fits: Vec<usize>,
    pub generation_best: Vec<f64>,
}

impl Finish {
    fn into_result(self, ledger: Ledger<'_, '_>) -> AttackResult {
        let queries = ledger.used();
        let records = ledger.records;
        let mut best = f64::NEG_INFINITY;
        let loss_curve = records
            .iter()
            .map(|r| {
                best = best.max(r.loss);
                best
            })
            .collect();
        let outcome = match (&self.adversarial, records.last()) {
            (Some(g), Some(last)) => {
                let mut edits = self.committed[..last.stage].to_vec();
                edits.extend(last.edits.iter().cloned());
                Outcome::Success { graph: GraphJson::from(g), net_edits: edit_distance_from_base(&edits), queries }
            }
            _ => Outcome::Exhausted { queries },
        };
        let net_edits = match &outcome {
            Outcome::Success { net_edits, .. } => Some(*net_edits),
            Outcome::Exhausted { .. } => None,
        };
        AttackResult {
            attacker: self.attacker,
            label: ledger.y,
            target: ledger.target,
            budget: self.budget,
            success: net_edits.is_some(),
            queries,
            net_edits,
            loss_curve,
            surrogate_fits: self.surrogate_fits,
            generation_best: self.generation_best,
            trace: AttackTrace { records, stage_bases: self.stage_bases, committed: self.committed, outcome },
        }
    }
}

fn setup(g: &Graph, y: usize, cfg: &AttackConfig) -> Result<(Budget, ChaCha8Rng), AttackError> {
    cfg.validate(y)?;
    let budget = attack_budget(g.num_nodes(), cfg)?;
    Ok((budget, ChaCha8Rng::seed_from_u64(cfg.seed)))
}

/// Up to `k` random items not in `queried`, distinct from each other. When
/// the space has no fresh item left a repeated one is returned, so budgets
/// are still spent.
pub(crate) fn fresh_random<S: CandidateSpace>(
    space: &S,
    queried: &HashSet<S::Item>,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<S::Item> {
    let mut out: Vec<S::Item> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut fallback = None;
        let mut found = None;
        for _ in 0..MAX_ATTEMPTS {
            let Some(item) = space.random(rng) else { break };
            if !queried.contains(&item) && !out.contains(&item) {
                found = Some(item);
                break;
            }
            fallback.get_or_insert(item);
        }
        match found.or(fallback) {
            Some(item) => out.push(item),
            None => break,
        }
    }
    out
}

/// Items of `records` ordered by loss, highest first, earliest first on ties.
pub(crate) fn ranked_items<T: Clone>(records: &[(T, f64)], k: usize) -> Vec<T> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[b].1.total_cmp(&records[a].1).then(a.cmp(&b)));
    order.into_iter().take(k).map(|i| records[i].0.clone()).collect()
}
