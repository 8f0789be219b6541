use std::cell::Cell;
use std::collections::{BTreeSet, HashSet};

use grabnel_core::acquisition::{
    expected_improvement, optimise_acquisition, AcquisitionConfig, CandidateSpace, EditSetSpace, OneEditSpace,
    PerturbationKind, Sampler,
};
use grabnel_core::graph::{check_constraint, ConstraintMode, ConstraintSet, Graph, Perturbation};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;
use common::mc_improvement;

#[test]
fn ei_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for sd in [0.1, 1.0, 3.0] {
        for i in 0..=8 {
            let mean = -2.0 + 0.5 * i as f64;
            let mc = mc_improvement(mean, sd, 0.0, 1_000_000, &mut rng);
            let ei = expected_improvement(mean, sd * sd, 0.0);
            assert!((ei - mc).abs() < 1e-3, "mean {mean} sd {sd}: {ei} vs {mc}");
        }
    }
}

fn k4() -> Graph {
    Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap()
}

#[test]
fn flip_mutation_on_k4_keeps_one_end() {
    let g = k4();
    let sampler = Sampler::new(PerturbationKind::Flip, ConstraintSet::default());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let parent = Perturbation::flip(0, 1);
    let allowed: HashSet<Perturbation> =
        [(0, 2), (0, 3), (1, 2), (1, 3)].into_iter().map(|(u, v)| Perturbation::flip(u, v)).collect();
    let mut seen = HashSet::new();
    for _ in 0..1000 {
        let child = sampler.mutate(&g, &parent, &mut rng).unwrap();
        assert!(allowed.contains(&child), "{child:?}");
        seen.insert(child);
    }
    assert_eq!(seen, allowed);
}

#[test]
fn two_hop_mutations_stay_admissible() {
    let g = Graph::from_edges(8, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (2, 6)]).unwrap();
    let sampler = Sampler::new(PerturbationKind::Flip, ConstraintSet::new(ConstraintMode::TwoHop));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let parent = Perturbation::flip(2, 3);
    for _ in 0..10_000 {
        let child = sampler.mutate(&g, &parent, &mut rng).unwrap();
        assert!(check_constraint(&g, &child, &sampler.constraints));
    }
}

fn small_graph() -> Graph {
    Graph::from_edges(6, &[(0, 2), (2, 3), (3, 4), (4, 5), (1, 5)]).unwrap()
}

#[test]
fn rigged_surrogate_peak_is_always_returned() {
    let g = small_graph();
    let sampler = Sampler::new(PerturbationKind::Flip, ConstraintSet::default());
    let space = OneEditSpace { base: &g, sampler: &sampler };
    let target = Perturbation::flip(0, 1);
    let score =
        |items: &[Perturbation]| -> Vec<f64> { items.iter().map(|p| if *p == target { 10.0 } else { 0.0 }).collect() };
    let cfg = AcquisitionConfig::default();
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let history = [Perturbation::flip(0, 4)];
        let out = optimise_acquisition(&space, &score, &history, |_| false, &cfg, &mut rng);
        assert_eq!(out.batch[0].item, target, "seed {seed}");
    }
}

#[test]
fn batch_is_distinct_admissible_and_within_budget() {
    let g =
        Graph::from_edges(12, &[(0, 1), (1, 2), (2, 3), (4, 5), (5, 6), (7, 8), (9, 10), (10, 11), (3, 9)]).unwrap();
    for mode in [ConstraintMode::None, ConstraintMode::TwoHop, ConstraintMode::PreserveComponents] {
        let sampler = Sampler::new(PerturbationKind::Flip, ConstraintSet::new(mode));
        let space = OneEditSpace { base: &g, sampler: &sampler };
        let calls = Cell::new(0usize);
        let score = |items: &[Perturbation]| -> Vec<f64> {
            calls.set(calls.get() + items.len());
            items
                .iter()
                .map(|p| {
                    assert!(check_constraint(&g, p, &sampler.constraints));
                    let Perturbation::Flip { u, v } = p else { panic!() };
                    ((u * 7 + v * 3) % 11) as f64
                })
                .collect()
        };
        for (seed, history) in [(0, vec![]), (1, vec![Perturbation::flip(0, 1), Perturbation::flip(4, 5)])] {
            calls.set(0);
            let cfg = AcquisitionConfig { max_acq_evaluations: 60, ..Default::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = optimise_acquisition(&space, &score, &history, |_| false, &cfg, &mut rng);
            assert!(calls.get() <= 60 && out.evaluations == calls.get());
            let distinct: BTreeSet<_> = out.batch.iter().map(|c| c.item.clone()).collect();
            assert_eq!(distinct.len(), out.batch.len());
            assert_eq!(out.batch.len(), 5);
            assert!(out.batch[0].value >= out.initial_best.unwrap());
        }
    }
}

#[test]
fn skipped_items_are_not_returned() {
    let g = small_graph();
    let sampler = Sampler::new(PerturbationKind::Flip, ConstraintSet::default());
    let space = OneEditSpace { base: &g, sampler: &sampler };
    let target = Perturbation::flip(0, 1);
    let score =
        |items: &[Perturbation]| -> Vec<f64> { items.iter().map(|p| if *p == target { 10.0 } else { 0.0 }).collect() };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let out = optimise_acquisition(&space, &score, &[], |p| *p == target, &AcquisitionConfig::default(), &mut rng);
    assert!(out.batch.iter().all(|c| c.item != target));
}

#[test]
fn optimiser_is_deterministic() {
    let g = small_graph();
    let sampler = Sampler::new(PerturbationKind::Flip, ConstraintSet::default());
    let space = OneEditSpace { base: &g, sampler: &sampler };
    let score = |items: &[Perturbation]| -> Vec<f64> {
        items
            .iter()
            .map(|p| match p {
                Perturbation::Flip { u, v } => (*u as f64).sin() + (*v as f64).cos(),
                _ => 0.0,
            })
            .collect()
    };
    let run = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let history = [Perturbation::flip(2, 3)];
        optimise_acquisition(&space, &score, &history, |_| false, &AcquisitionConfig::default(), &mut rng)
            .batch
            .into_iter()
            .map(|c| c.item)
            .collect::<Vec<_>>()
    };
    assert_eq!(run(9), run(9));
}

#[test]
fn edit_set_candidates_respect_the_size_bound() {
    let g = small_graph();
    let sampler = Sampler::new(PerturbationKind::Flip, ConstraintSet::default());
    let space = EditSetSpace { base: &g, sampler: &sampler, sizes: 1..=3 };
    let score = |items: &[Vec<Perturbation>]| -> Vec<f64> {
        items
            .iter()
            .map(|set| {
                assert!((1..=3).contains(&set.len()));
                set.len() as f64
            })
            .collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let first = space.random(&mut rng).unwrap();
    let out = optimise_acquisition(&space, &score, &[first], |_| false, &AcquisitionConfig::default(), &mut rng);
    assert!(out.batch.iter().all(|c| c.item.len() == 3));
}
