mod common;

use ccbp_core::messages::{init_messages, Domain};
use ccbp_core::model::{spin_glass_model, CouplingDistribution, SpinGlassInstance, WeightTable};
use ccbp_core::operators::{infer, run_fixed_point, step, Algorithm, OperatorConfig, Semiring};
use ccbp_core::oracle::{brute_marginals, brute_max_marginals, brute_min_marginals, energy};
use common::checks;
use common::*;

#[test]
fn contraction_small() {
    checks::contraction(40, 101).unwrap();
}

#[test]
fn geometric_rate_small() {
    checks::geometric_convergence(12, 102).unwrap();
}

#[test]
fn fixed_point_is_independent_of_start() {
    checks::uniqueness(12, 103).unwrap();
}

#[test]
fn bp_is_exact_on_trees() {
    checks::tree_bp_exactness(&checks::tree_corpus(30, 104)).unwrap();
}

#[test]
fn ccbp_beliefs_are_weighted_min_marginals_on_trees() {
    checks::tree_characterization(&checks::tree_corpus(30, 105), 105).unwrap();
}

#[test]
fn brute_marginals_are_distributions() {
    for seed in 0..20 {
        let model = random_model(seed, 1 + seed as usize % 8, 2 + seed as usize % 2, 0.5, 3.0);
        let exact = brute_marginals(&model).unwrap();
        assert!(exact.partition.unwrap() > 0.0);
        for row in &exact.values {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn max_marginals_match_direct_enumeration() {
    for seed in 0..20 {
        let (n, m) = (1 + seed as usize % 7, 2 + seed as usize % 2);
        let model = random_model(seed, n, m, 0.6, 3.0);
        // max_x exp(-E(x)) / Z with x_i fixed, straight from the definition
        let labellings = all_labellings(n, m);
        let energies: Vec<f64> = labellings
            .iter()
            .map(|x| energy(&model, x).unwrap())
            .collect();
        let z: f64 = energies.iter().map(|e| (-e).exp()).sum();
        let mut direct = vec![vec![0.0_f64; m]; n];
        for (x, e) in labellings.iter().zip(&energies) {
            for i in 0..n {
                direct[i][x[i]] = direct[i][x[i]].max((-e).exp() / z);
            }
        }
        let maxmarg = brute_max_marginals(&model).unwrap().values;
        assert!(rows_max_abs_diff(&maxmarg, &direct) <= 1e-10);
        let minmarg = brute_min_marginals(&model).unwrap().values;
        let via_min: Vec<Vec<f64>> = minmarg
            .iter()
            .map(|row| row.iter().map(|v| (-v).exp() / z).collect())
            .collect();
        assert!(rows_max_abs_diff(&via_min, &maxmarg) <= 1e-10);
    }
}

#[test]
fn ccbp_iterations_respect_geometric_bound() {
    const EPS: f64 = 1e-2;
    for seed in 0..30 {
        let inst = SpinGlassInstance::random(
            10,
            0.5,
            CouplingDistribution::Uniform { half_width: 5.0 },
            seed,
        )
        .unwrap();
        let model = spin_glass_model(&inst).unwrap();
        let cfg = OperatorConfig::uniform(&model, Semiring::SumProduct, Algorithm::Ccbp);
        let run = infer(&model, &cfg, EPS, 1000).unwrap();
        let (star, _) = run_fixed_point(
            |mu| step(&model, &cfg, mu),
            run.messages.clone(),
            1e-13,
            10_000,
        )
        .unwrap();
        let d0 = init_messages(&model, Domain::Probability)
            .distance(&star)
            .unwrap();
        let bound = ((EPS / d0).ln() / cfg.gamma().ln()).ceil() + 1.0;
        assert!(run.report.converged);
        assert!(
            run.report.iterations as f64 <= bound.max(1.0),
            "seed {seed}: {} iterations, bound {bound}",
            run.report.iterations
        );
    }
}

#[test]
fn gamma_zero_ignores_incoming_messages() {
    let model = random_model(7, 6, 3, 0.7, 2.0);
    let cfg = OperatorConfig::new(
        model.graph(),
        WeightTable::uniform(model.graph()),
        0.0,
        0.0,
        Semiring::MinSum,
        Algorithm::Ccbp,
    )
    .unwrap();
    let run = infer(&model, &cfg, 1e-12, 100).unwrap();
    assert!(run.report.converged && run.report.iterations <= 2);
}
