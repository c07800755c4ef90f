mod common;

use common::{Enumerated, RandomInstance};
use gragra::maxent::{FitOptions, GroupModel, ModelSet};
use proptest::prelude::*;

fn check_instance(seed: u64) {
    let inst = RandomInstance::draw(seed, 8, 3);
    let oracle = Enumerated::fit(inst.m, &inst.edge_targets, &inst.patterns);
    let model = inst.model();
    assert!(model.max_residual() <= 1e-6, "seed {seed}: residual {}", model.max_residual());
    for e in 0..inst.m as u32 {
        let (a, b) = (model.query(&[e]), oracle.query(&[e]));
        assert!((a - b).abs() < 1e-5, "seed {seed} edge {e}: {a} vs {b}");
    }
    for (x, _) in &inst.patterns {
        let (a, b) = (model.query(x), oracle.query(x));
        assert!((a - b).abs() < 1e-5, "seed {seed} pattern {x:?}: {a} vs {b}");
    }
    // unconstrained joint queries follow from the same distribution
    let all: Vec<u32> = (0..inst.m as u32).collect();
    for len in 2..=inst.m.min(4) {
        let y = &all[..len];
        let (a, b) = (model.query(y), oracle.query(y));
        assert!((a - b).abs() < 1e-5, "seed {seed} query {y:?}: {a} vs {b}");
    }
}

#[test]
fn factorized_queries_match_enumeration() {
    for seed in 0..30 {
        check_instance(seed);
    }
}

#[test]
fn graph_probabilities_sum_to_one() {
    let inst = RandomInstance::draw(7, 6, 2);
    let model = inst.model();
    let m = inst.m as u32;
    let mass: f64 = (0..1u32 << m)
        .map(|w| {
            let g: Vec<u32> = (0..m).filter(|e| w >> e & 1 == 1).collect();
            model.graph_log_prob(&g).exp()
        })
        .sum();
    assert!((mass - 1.0).abs() < 1e-9, "{mass}");
}

#[test]
fn pattern_gain_is_nonnegative_and_bic_consistent() {
    let inst = RandomInstance::draw(11, 7, 1);
    let base = GroupModel::from_frequencies(0, 200, inst.edge_targets.clone(), FitOptions::default());
    let (x, q) = &inst.patterns[0];
    let gain = base.prepare_insert(x, *q).unwrap().log_likelihood_gain();
    assert!(gain >= -1e-9, "{gain}");
    let set = ModelSet::from_models(vec![base.clone()]);
    let delta = set.delta_exact(x, &[*q]).unwrap();
    assert!((delta - (gain - set.penalty())).abs() < 1e-9);
    let mut after = base;
    after.insert_pattern(x, *q).unwrap();
    let drop = ModelSet::from_models(vec![after]).log_likelihood() - set.log_likelihood();
    assert!((drop + gain).abs() < 1e-6 * (1.0 + gain.abs()), "{drop} vs {gain}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn queries_are_monotone(seed in 0u64..10_000, extra in 0u32..8) {
        let inst = RandomInstance::draw(seed, 8, 3);
        let model = inst.model();
        let (x, _) = &inst.patterns[0];
        let mut y = x.clone();
        let add = extra % inst.m as u32;
        if !y.contains(&add) {
            y.push(add);
            y.sort_unstable();
        }
        prop_assert!(model.query(&y) <= model.query(x) + 1e-12);
        for &e in x {
            prop_assert!(model.query(x) <= model.query(&[e]) + 1e-12);
        }
    }

    #[test]
    fn fitted_constraints_are_reproduced(seed in 0u64..10_000) {
        let inst = RandomInstance::draw(seed, 8, 3);
        let model = inst.model();
        prop_assert!(model.max_residual() <= 1e-6);
        for (x, q) in &inst.patterns {
            prop_assert!((model.query(x) - q).abs() <= 1e-6);
        }
        for (e, q) in inst.edge_targets.iter().enumerate() {
            prop_assert!((model.query(&[e as u32]) - q).abs() <= 1e-6);
        }
    }
}
