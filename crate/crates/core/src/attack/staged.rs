//! Sequential perturbation selection: the query budget is split into Δ
//! stages, each committing the single edit with the highest observed loss.

use std::collections::HashSet;

use rayon::prelude::*;

use super::features::Observations;
use super::{fresh_random, ranked_items, setup, AttackConfig, AttackError, AttackResult, Attacker, Finish, Ledger};
use crate::acquisition::{optimise_acquisition, OneEditSpace};
use crate::data::GraphJson;
use crate::graph::{Graph, Perturbation};
use crate::victim::QuerySession;

/// GRABNEL: staged Bayesian optimisation with a WL surrogate and genetic
/// acquisition search.
pub fn grabnel_attack(
    session: &mut QuerySession<'_>,
    g: &Graph,
    y: usize,
    cfg: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    staged_attack(Attacker::Grabnel, session, g, y, cfg)
}

/// The staged loop with uniformly random one-edit proposals.
pub fn sequential_random_attack(
    session: &mut QuerySession<'_>,
    g: &Graph,
    y: usize,
    cfg: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    staged_attack(Attacker::SequentialRandom, session, g, y, cfg)
}

/// Position of the highest loss; the earliest query wins ties.
pub(crate) fn stage_argmax(losses: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, l) in losses.into_iter().enumerate() {
        if best.map_or(true, |(_, b)| l > b) {
            best = Some((i, l));
        }
    }
    best.map(|(i, _)| i)
}

fn staged_attack(
    attacker: Attacker,
    session: &mut QuerySession<'_>,
    g: &Graph,
    y: usize,
    cfg: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    let (budget, mut rng) = setup(g, y, cfg)?;
    let sampler = cfg.sampler();
    let guided = attacker == Attacker::Grabnel;
    let mut ledger = Ledger::new(session, budget, y, cfg.target);
    let mut obs = Observations::new(g, cfg.wl_levels, cfg.mode);
    let mut base = g.clone();
    let mut stage_bases = vec![GraphJson::from(g)];
    let mut committed: Vec<Perturbation> = Vec::new();
    let mut fits = Vec::new();
    let mut adversarial = None;
    let stage_budgets = budget.stage_budgets();

    'stages: for (stage, &stage_budget) in stage_budgets.iter().enumerate() {
        let mut queried: HashSet<Perturbation> = HashSet::new();
        let mut history: Vec<(Perturbation, f64)> = Vec::new();
        let mut init_left = if guided && stage == 0 { cfg.n_init.min(stage_budget) } else { 0 };
        let space = OneEditSpace { base: &base, sampler: &sampler };

        while history.len() < stage_budget && ledger.remaining() > 0 {
            let room = (stage_budget - history.len()).min(ledger.remaining() as usize);
            let mut proposals: Vec<Perturbation> = Vec::new();
            if guided && init_left == 0 {
                if let Some(surrogate) = obs.fit(&cfg.surrogate) {
                    fits.push(obs.len());
                    let score = |items: &[Perturbation]| {
                        let graphs: Vec<Option<Graph>> = items.par_iter().map(|p| base.apply(p).ok()).collect();
                        surrogate.expected_improvement(&graphs)
                    };
                    let top = ranked_items(&history, cfg.acquisition.mutation_pool_from_top_k);
                    proposals =
                        optimise_acquisition(&space, &score, &top, |p| queried.contains(p), &cfg.acquisition, &mut rng)
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
                break 'stages;
            }
            proposals.truncate(room);
            for p in proposals {
                let perturbed = base.apply(&p)?;
                let loss = ledger.query(&perturbed, stage, vec![p.clone()])?;
                init_left = init_left.saturating_sub(1);
                queried.insert(p.clone());
                history.push((p, loss));
                if loss > 0.0 {
                    adversarial = Some(perturbed);
                    break 'stages;
                }
                if guided {
                    obs.push(&perturbed, loss)?;
                }
            }
        }

        if stage + 1 == stage_budgets.len() || ledger.remaining() == 0 {
            break;
        }
        let Some(best) = stage_argmax(history.iter().map(|h| h.1)) else { break };
        let p = history.swap_remove(best).0;
        base = base.apply(&p)?;
        committed.push(p);
        stage_bases.push(GraphJson::from(&base));
    }

    Ok(Finish {
        attacker,
        budget,
        stage_bases,
        committed,
        adversarial,
        surrogate_fits: fits,
        generation_best: Vec::new(),
    }
    .into_result(ledger))
}
