//! Expected Improvement and its genetic optimiser over candidate perturbations.

mod space;

pub use space::{CandidateSpace, EditSetSpace, InjectInit, OneEditSpace, PerturbationKind, Sampler, MAX_ATTEMPTS};

use std::cmp::Ordering;
use std::collections::{HashMap, VecDeque};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

/// EI for maximisation: `(μ - f*)Φ(z) + σφ(z)` with `z = (μ - f*)/σ`.
pub fn expected_improvement(mean: f64, variance: f64, best: f64) -> f64 {
    let gain = mean - best;
    let sigma = variance.max(0.0).sqrt();
    if sigma == 0.0 {
        return gain.max(0.0);
    }
    let z = gain / sigma;
    let cdf = 0.5 * erfc(-z / std::f64::consts::SQRT_2);
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    (gain * cdf + sigma * pdf).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    pub max_acq_evaluations: usize,
    pub init_random_candidates: usize,
    /// Random candidates used instead when the stage has no queries yet.
    pub init_random_without_history: usize,
    pub mutation_pool_from_top_k: usize,
    pub population_fill: usize,
    pub evolution_rounds: usize,
    pub batch_query_size: usize,
    pub breeding_top_k: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            max_acq_evaluations: 500,
            init_random_candidates: 50,
            init_random_without_history: 100,
            mutation_pool_from_top_k: 3,
            population_fill: 50,
            evolution_rounds: 10,
            batch_query_size: 5,
            breeding_top_k: 3,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<(), String> {
        let counts = [
            self.max_acq_evaluations,
            self.init_random_candidates,
            self.init_random_without_history,
            self.mutation_pool_from_top_k,
            self.population_fill,
            self.evolution_rounds,
            self.batch_query_size,
            self.breeding_top_k,
        ];
        if counts.contains(&0) {
            return Err("acquisition counts must be positive".into());
        }
        if self.batch_query_size > self.population_fill {
            return Err("batch_query_size exceeds population_fill".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<T> {
    pub item: T,
    pub value: f64,
    pub birth_round: usize,
}

/// Best first: higher value, then earlier birth, then smaller item.
fn rank<T: Ord>(a: &Candidate<T>, b: &Candidate<T>) -> Ordering {
    b.value.total_cmp(&a.value).then(a.birth_round.cmp(&b.birth_round)).then_with(|| a.item.cmp(&b.item))
}

#[derive(Debug, Clone)]
pub struct AcquisitionOutcome<T> {
    /// Distinct candidates, best first.
    pub batch: Vec<Candidate<T>>,
    /// Unique candidates scored, at most `max_acq_evaluations`.
    pub evaluations: usize,
    /// Highest value in the initial population.
    pub initial_best: Option<f64>,
}

struct Evaluator<'f, T, F> {
    score: &'f F,
    cache: HashMap<T, Candidate<T>>,
    budget: usize,
}

impl<T, F> Evaluator<'_, T, F>
where
    T: Clone + Ord + std::hash::Hash,
    F: Fn(&[T]) -> Vec<f64>,
{
    /// Scores unseen items within budget; returns the candidates now known.
    fn evaluate(&mut self, items: Vec<T>, round: usize) -> Vec<Candidate<T>> {
        let mut fresh: Vec<T> = Vec::new();
        for it in &items {
            if !self.cache.contains_key(it) && !fresh.contains(it) && self.cache.len() + fresh.len() < self.budget {
                fresh.push(it.clone());
            }
        }
        if !fresh.is_empty() {
            let values = (self.score)(&fresh);
            assert_eq!(values.len(), fresh.len(), "score returned wrong number of values");
            for (item, value) in fresh.into_iter().zip(values) {
                let value = if value.is_nan() { f64::NEG_INFINITY } else { value };
                self.cache.insert(item.clone(), Candidate { item, value, birth_round: round });
            }
        }
        items.into_iter().filter_map(|it| self.cache.get(&it).cloned()).collect()
    }

    fn exhausted(&self) -> bool {
        self.cache.len() >= self.budget
    }
}

/// Genetic search for high-acquisition candidates.
///
/// `top_queried` holds the stage's best queried items, best first; `score`
/// maps items to acquisition values; items for which `skip` holds (already
/// queried) are never returned.
pub fn optimise_acquisition<S, F>(
    space: &S,
    score: &F,
    top_queried: &[S::Item],
    skip: impl Fn(&S::Item) -> bool,
    cfg: &AcquisitionConfig,
    rng: &mut ChaCha8Rng,
) -> AcquisitionOutcome<S::Item>
where
    S: CandidateSpace,
    F: Fn(&[S::Item]) -> Vec<f64>,
{
    let mut eval = Evaluator { score, cache: HashMap::new(), budget: cfg.max_acq_evaluations };
    let parents: Vec<&S::Item> = top_queried.iter().take(cfg.mutation_pool_from_top_k).collect();
    let mut initial: Vec<S::Item> = Vec::new();
    let random_count = if parents.is_empty() { cfg.init_random_without_history } else { cfg.init_random_candidates };
    initial.extend((0..random_count).filter_map(|_| space.random(rng)));
    if !parents.is_empty() {
        for i in 0..cfg.population_fill {
            if let Some(child) = space.mutate(parents[i % parents.len()], rng) {
                initial.push(child);
            }
        }
    }
    let scored = eval.evaluate(initial, 0);
    let initial_best = scored.iter().map(|c| c.value).reduce(f64::max);
    let mut population: VecDeque<Candidate<S::Item>> = scored.into();
    while population.len() > cfg.population_fill {
        population.pop_front();
    }

    for round in 1..=cfg.evolution_rounds {
        if eval.exhausted() || population.is_empty() {
            break;
        }
        let mut ranked: Vec<&Candidate<S::Item>> = population.iter().collect();
        ranked.sort_by(|a, b| rank(a, b));
        let breeders: Vec<S::Item> = ranked.iter().take(cfg.breeding_top_k).map(|c| c.item.clone()).collect();
        let children: Vec<S::Item> =
            (0..cfg.population_fill).filter_map(|i| space.mutate(&breeders[i % breeders.len()], rng)).collect();
        for c in eval.evaluate(children, round) {
            population.push_back(c);
        }
        while population.len() > cfg.population_fill {
            population.pop_front();
        }
    }

    let evaluations = eval.cache.len();
    let mut all: Vec<Candidate<S::Item>> = eval.cache.into_values().filter(|c| !skip(&c.item)).collect();
    all.sort_by(rank);
    all.truncate(cfg.batch_query_size);
    AcquisitionOutcome { batch: all, evaluations, initial_best }
}
