//! Attackers that search over whole edit sets instead of staging.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

use super::features::Observations;
use super::{fresh_random, ranked_items, setup, AttackConfig, AttackError, AttackResult, Attacker, Finish, Ledger};
use crate::acquisition::{optimise_acquisition, CandidateSpace, EditSetSpace};
use crate::data::GraphJson;
use crate::graph::{Graph, Perturbation};
use crate::victim::QuerySession;

type EditSet = Vec<Perturbation>;

fn finish(attacker: Attacker, budget: super::Budget, g: &Graph, adversarial: Option<Graph>) -> Finish {
    Finish {
        attacker,
        budget,
        stage_bases: vec![GraphJson::from(g)],
        committed: Vec::new(),
        adversarial,
        surrogate_fits: Vec::new(),
        generation_best: Vec::new(),
    }
}

/// Draws a full-budget edit set, falling back to a smaller one when the
/// graph cannot take Δ distinct admissible edits.
fn random_set(full: &EditSetSpace<'_>, any: &EditSetSpace<'_>, rng: &mut rand_chacha::ChaCha8Rng) -> Option<EditSet> {
    full.random(rng).or_else(|| any.random(rng))
}

/// Uniform random search over full-budget edit sets, sampled with replacement.
pub fn random_attack(
    session: &mut QuerySession<'_>,
    g: &Graph,
    y: usize,
    cfg: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    let (budget, mut rng) = setup(g, y, cfg)?;
    let sampler = cfg.sampler();
    let full = EditSetSpace { base: g, sampler: &sampler, sizes: budget.edits..=budget.edits };
    let any = EditSetSpace { sizes: 1..=budget.edits, ..full.clone() };
    let mut ledger = Ledger::new(session, budget, y, cfg.target);
    let mut adversarial = None;
    while ledger.remaining() > 0 {
        let Some(edits) = random_set(&full, &any, &mut rng) else { break };
        let Some(perturbed) = full.realise(&edits) else { break };
        if ledger.query(&perturbed, 0, edits)? > 0.0 {
            adversarial = Some(perturbed);
            break;
        }
    }
    Ok(finish(Attacker::Random, budget, g, adversarial).into_result(ledger))
}

/// Elitist genetic search over full-budget edit sets, each fitness
/// evaluation being one victim query. Repeated individuals reuse their
/// recorded loss.
pub fn genetic_attack(
    session: &mut QuerySession<'_>,
    g: &Graph,
    y: usize,
    cfg: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    let (budget, mut rng) = setup(g, y, cfg)?;
    let sampler = cfg.sampler();
    let full = EditSetSpace { base: g, sampler: &sampler, sizes: budget.edits..=budget.edits };
    let any = EditSetSpace { sizes: 1..=budget.edits, ..full.clone() };
    let mut ledger = Ledger::new(session, budget, y, cfg.target);
    let mut known: HashMap<EditSet, f64> = HashMap::new();
    let mut generation_best = Vec::new();
    let mut adversarial = None;
    let size = cfg.genetic.population_size;

    // Evaluates one individual; `None` once the budget is spent.
    let mut evaluate = |edits: EditSet,
                        ledger: &mut Ledger<'_, '_>,
                        adversarial: &mut Option<Graph>|
     -> Result<Option<(EditSet, f64)>, AttackError> {
        if let Some(&loss) = known.get(&edits) {
            return Ok(Some((edits, loss)));
        }
        if ledger.remaining() == 0 {
            return Ok(None);
        }
        let Some(perturbed) = full.realise(&edits) else { return Ok(None) };
        let loss = ledger.query(&perturbed, 0, edits.clone())?;
        if loss > 0.0 {
            *adversarial = Some(perturbed);
        }
        known.insert(edits.clone(), loss);
        Ok(Some((edits, loss)))
    };

    let mut population: Vec<(EditSet, f64)> = Vec::new();
    for _ in 0..size {
        let Some(edits) = random_set(&full, &any, &mut rng) else { break };
        let Some(ind) = evaluate(edits, &mut ledger, &mut adversarial)? else { break };
        population.push(ind);
        if adversarial.is_some() {
            break;
        }
    }
    let mut stale = 0;
    while !population.is_empty() {
        population.sort_by(|a, b| b.1.total_cmp(&a.1));
        generation_best.push(population[0].1);
        if adversarial.is_some() || ledger.remaining() == 0 || stale > 100 {
            break;
        }
        let before = ledger.used();
        let parents: Vec<EditSet> = population.iter().take(cfg.genetic.parents).map(|p| p.0.clone()).collect();
        let mut next = vec![population[0].clone()];
        for i in 0..size.saturating_sub(1) {
            let parent = &parents[i % parents.len()];
            let Some(child) = full.mutate(parent, &mut rng).or_else(|| random_set(&full, &any, &mut rng)) else {
                continue;
            };
            let Some(ind) = evaluate(child, &mut ledger, &mut adversarial)? else { break };
            next.push(ind);
            if adversarial.is_some() {
                break;
            }
        }
        stale = if ledger.used() == before { stale + 1 } else { 0 };
        population = next;
    }
    let mut out = finish(Attacker::Genetic, budget, g, adversarial);
    out.generation_best = generation_best;
    Ok(out.into_result(ledger))
}

/// GRABNEL's surrogate and acquisition search applied to whole edit sets of
/// size at most Δ, without stages.
pub fn grabnel_no_sequential_attack(
    session: &mut QuerySession<'_>,
    g: &Graph,
    y: usize,
    cfg: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    let (budget, mut rng) = setup(g, y, cfg)?;
    let sampler = cfg.sampler();
    let space = EditSetSpace { base: g, sampler: &sampler, sizes: 1..=budget.edits };
    let mut ledger = Ledger::new(session, budget, y, cfg.target);
    let mut obs = Observations::new(g, cfg.wl_levels, cfg.mode);
    let mut queried: HashSet<EditSet> = HashSet::new();
    let mut history: Vec<(EditSet, f64)> = Vec::new();
    let mut fits = Vec::new();
    let mut init_left = cfg.n_init.min(budget.queries);
    let mut adversarial = None;

    'search: while ledger.remaining() > 0 {
        let mut proposals: Vec<EditSet> = Vec::new();
        if init_left == 0 {
            if let Some(surrogate) = obs.fit(&cfg.surrogate) {
                fits.push(obs.len());
                let score = |items: &[EditSet]| {
                    let graphs: Vec<Option<Graph>> = items.par_iter().map(|e| space.realise(e)).collect();
                    surrogate.expected_improvement(&graphs)
                };
                let top = ranked_items(&history, cfg.acquisition.mutation_pool_from_top_k);
                proposals =
                    optimise_acquisition(&space, &score, &top, |e| queried.contains(e), &cfg.acquisition, &mut rng)
                        .batch
                        .into_iter()
                        .map(|c| c.item)
                        .collect();
            }
        }
        if proposals.is_empty() {
            let k = if init_left > 0 { init_left } else { cfg.acquisition.batch_query_size };
            proposals = fresh_random(&space, &queried, k, &mut rng);
        }
        if proposals.is_empty() {
            break;
        }
        proposals.truncate(ledger.remaining() as usize);
        let before = ledger.used();
        for edits in proposals {
            let Some(perturbed) = space.realise(&edits) else { continue };
            let loss = ledger.query(&perturbed, 0, edits.clone())?;
            init_left = init_left.saturating_sub(1);
            queried.insert(edits.clone());
            history.push((edits, loss));
            if loss > 0.0 {
                adversarial = Some(perturbed);
                break 'search;
            }
            obs.push(&perturbed, loss)?;
        }
        if ledger.used() == before {
            break;
        }
    }
    let mut out = finish(Attacker::GrabnelNoSequential, budget, g, adversarial);
    out.surrogate_fits = fits;
    Ok(out.into_result(ledger))
}
