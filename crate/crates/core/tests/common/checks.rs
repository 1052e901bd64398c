//! Checks shared by the acceptance harness and the smaller integration runs.
//! Each returns a short summary on success and a description of the first
//! violation otherwise.

use ccbp_core::experiments::{
    oscillation_study, sweep_edge_prob, sweep_gamma, sweep_sigma, write_csv, SweepSettings,
    SweepTable,
};
use ccbp_core::image::{corrupt, minsum_message_fast, pixel_mse, restore, Image, RestoreParams};
use ccbp_core::messages::{init_messages, random_messages, Domain, MessageVector};
use ccbp_core::model::{build_model, GraphicalModel, WeightTable};
use ccbp_core::operators::{
    beliefs_minsum, beliefs_prob_normalized, decode, run_fixed_point, step, Algorithm,
    OperatorConfig, Semiring,
};
use ccbp_core::oracle::{
    brute_f, brute_map, brute_marginals, brute_max_marginals, energy, root_tree, weighted_energy,
    weighted_min_marginal,
};
use rand::Rng;

use super::*;

pub type Outcome = Result<String, String>;

const SEMIRINGS: [Semiring; 3] = [Semiring::SumProduct, Semiring::MaxProduct, Semiring::MinSum];

fn ccbp_config(
    model: &GraphicalModel,
    weights: WeightTable,
    gamma: f64,
    semiring: Semiring,
) -> OperatorConfig {
    OperatorConfig::new(
        model.graph(),
        weights,
        gamma,
        0.0,
        semiring,
        Algorithm::Ccbp,
    )
    .unwrap()
}

/// A random model with `n <= 10`, `m in {2, 3}` and a valid weight table.
fn random_case<R: Rng>(r: &mut R, seed: u64) -> (GraphicalModel, WeightTable) {
    let n = r.random_range(1..=10);
    let m = r.random_range(2..=3);
    let p = r.random_range(0.2..=1.0);
    let model = random_model(seed, n, m, p, 2.0);
    let weights = if r.random::<bool>() {
        WeightTable::uniform(model.graph())
    } else {
        random_weights(model.graph(), r)
    };
    (model, weights)
}

pub fn contraction(triples_per_semiring: usize, seed: u64) -> Outcome {
    let mut r = rng(seed);
    let mut worst: f64 = f64::NEG_INFINITY;
    for semiring in SEMIRINGS {
        for t in 0..triples_per_semiring {
            let (model, weights) = random_case(&mut r, seed ^ (t as u64) << 8);
            let gamma = if t % 2 == 0 { 0.3 } else { 0.9 };
            let cfg = ccbp_config(&model, weights, gamma, semiring);
            let domain = semiring.domain();
            let mu = random_messages(&model, domain, r.random(), (0.05, 20.0)).unwrap();
            let nu = random_messages(&model, domain, r.random(), (0.05, 20.0)).unwrap();
            let before = mu.distance(&nu).unwrap();
            let after = step(&model, &cfg, &mu)
                .unwrap()
                .distance(&step(&model, &cfg, &nu).unwrap())
                .unwrap();
            let slack = after - gamma * before;
            if slack > 1e-12 {
                return Err(format!(
                    "{semiring:?} triple {t}: d(S mu, S nu) = {after} > {gamma} * {before}"
                ));
            }
            worst = worst.max(slack);
        }
    }
    Ok(format!(
        "{} triples, max d(S mu, S nu) - gamma d(mu, nu) = {worst:.3e}",
        3 * triples_per_semiring
    ))
}

/// Iterates from `mu0` until the residual is zero or stops shrinking for a
/// while; the floating-point fixed point.
fn settle(model: &GraphicalModel, cfg: &OperatorConfig, mu0: MessageVector) -> MessageVector {
    let mut mu = mu0;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for _ in 0..20_000 {
        let next = step(model, cfg, &mu).unwrap();
        let r = next.distance(&mu).unwrap();
        mu = next;
        if r == 0.0 {
            break;
        }
        if r < best {
            best = r;
            stale = 0;
        } else {
            stale += 1;
            if stale > 50 {
                break;
            }
        }
    }
    mu
}

pub fn geometric_convergence(models: usize, seed: u64) -> Outcome {
    let mut r = rng(seed);
    let mut checked = 0;
    for t in 0..models {
        let (model, weights) = random_case(&mut r, seed ^ (t as u64) << 8);
        let semiring = SEMIRINGS[t % 3];
        let gamma = if t % 2 == 0 { 0.9 } else { 0.3 };
        let cfg = ccbp_config(&model, weights, gamma, semiring);
        let mut trajectory = vec![init_messages(&model, cfg.domain())];
        loop {
            let next = step(&model, &cfg, trajectory.last().unwrap()).unwrap();
            let residual = next.distance(trajectory.last().unwrap()).unwrap();
            trajectory.push(next);
            if residual < 1e-12 || trajectory.len() > 5000 {
                break;
            }
        }
        let star = settle(&model, &cfg, trajectory.last().unwrap().clone());
        let d0 = trajectory[0].distance(&star).unwrap();
        for (n, mu) in trajectory.iter().enumerate() {
            let dn = mu.distance(&star).unwrap();
            let bound = gamma.powi(n as i32) * d0 * (1.0 + 1e-9);
            if dn > bound {
                return Err(format!(
                    "model {t} ({semiring:?}, gamma {gamma}): d(mu^{n}, mu*) = {dn:e} > {bound:e}"
                ));
            }
            checked += 1;
        }
    }
    Ok(format!(
        "{models} models, {checked} iterates within gamma^n d0"
    ))
}

pub fn uniqueness(models: usize, seed: u64) -> Outcome {
    const EPS: f64 = 1e-8;
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for t in 0..models {
        let (model, weights) = random_case(&mut r, seed ^ (t as u64) << 8);
        let semiring = SEMIRINGS[t % 3];
        let cfg = ccbp_config(&model, weights, 0.9, semiring);
        let run = |mu0| {
            let (mu, report) =
                run_fixed_point(|mu| step(&model, &cfg, mu), mu0, EPS, 10_000).unwrap();
            assert!(report.converged);
            mu
        };
        let a = run(init_messages(&model, cfg.domain()));
        let b = run(random_messages(&model, cfg.domain(), r.random(), (1e-3, 1e3)).unwrap());
        let d = a.distance(&b).unwrap();
        if d >= 10.0 * EPS {
            return Err(format!(
                "model {t} ({semiring:?}): fixed points differ by {d:e}"
            ));
        }
        worst = worst.max(d);
    }
    Ok(format!(
        "{models} models, max distance between fixed points {worst:.3e}"
    ))
}

/// Random tree with costs on a 1/64 grid, so sums of costs are exact.
pub fn tree_corpus(instances: usize, seed: u64) -> Vec<GraphicalModel> {
    let mut r = rng(seed);
    (0..instances)
        .map(|_| {
            let n = r.random_range(1..=8);
            let m = r.random_range(2..=3);
            let graph = random_tree(n, &mut r);
            let mut draw = |len: usize| -> Vec<f64> {
                (0..len)
                    .map(|_| r.random_range(-192..=192) as f64 / 64.0)
                    .collect()
            };
            let node_costs = (0..n).map(|_| draw(m)).collect();
            let edge_costs = graph.edges().iter().map(|&e| (e, draw(m * m))).collect();
            build_model(graph, node_costs, edge_costs).unwrap()
        })
        .collect()
}

fn tie_free(rows: &[Vec<f64>]) -> bool {
    rows.iter().all(|row| {
        let mut sorted = row.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        sorted.len() < 2 || sorted[0] - sorted[1] > 1e-9 * sorted[0].abs()
    })
}

pub fn tree_bp_exactness(corpus: &[GraphicalModel]) -> Outcome {
    let mut map_checks = 0;
    let mut worst: f64 = 0.0;
    for (t, model) in corpus.iter().enumerate() {
        let bp = |semiring| {
            let cfg = OperatorConfig::new(
                model.graph(),
                WeightTable::uniform(model.graph()),
                0.9,
                0.0,
                semiring,
                Algorithm::Bp,
            )
            .unwrap();
            let (mu, report) = run_fixed_point(
                |mu| step(model, &cfg, mu),
                init_messages(model, cfg.domain()),
                1e-14,
                1000,
            )
            .unwrap();
            assert!(report.converged, "tree BP did not converge");
            beliefs_prob_normalized(model, &mu).unwrap()
        };
        let marg = brute_marginals(model).unwrap().values;
        let err = rows_max_abs_diff(&bp(Semiring::SumProduct).to_rows(), &marg);
        if err > 1e-9 {
            return Err(format!("tree {t}: sum-product beliefs off by {err:e}"));
        }
        worst = worst.max(err);
        let maxmarg = brute_max_marginals(model).unwrap().values;
        if tie_free(&maxmarg) {
            let labels = decode(&bp(Semiring::MaxProduct));
            let map = brute_map(model).unwrap().map_labelling.unwrap();
            if labels != map {
                return Err(format!(
                    "tree {t}: max-product decoded {labels:?}, MAP is {map:?}"
                ));
            }
            map_checks += 1;
        }
    }
    Ok(format!(
        "{} trees, marginal error {worst:.3e}, {map_checks} tie-free MAP checks",
        corpus.len()
    ))
}

pub fn tree_characterization(corpus: &[GraphicalModel], seed: u64) -> Outcome {
    let mut r = rng(seed);
    let (mut belief_err, mut f_err): (f64, f64) = (0.0, 0.0);
    let mut prop2 = 0;
    for (t, model) in corpus.iter().enumerate() {
        let graph = model.graph();
        let n = model.node_count();
        let weights = if t % 2 == 0 {
            WeightTable::uniform(graph)
        } else {
            random_weights(graph, &mut r)
        };
        let gamma = if t % 3 == 0 { 0.3 } else { 0.9 };
        let cfg = ccbp_config(model, weights.clone(), gamma, Semiring::MinSum);
        let (mu, report) = run_fixed_point(
            |mu| step(model, &cfg, mu),
            init_messages(model, Domain::NegLog),
            1e-14,
            5000,
        )
        .unwrap();
        assert!(report.converged, "min-sum CCBP did not converge on a tree");
        let beliefs = beliefs_minsum(model, &mu).unwrap();
        let ones = WeightTable::constant(graph, 1.0);
        for j in 0..n {
            let exact = weighted_min_marginal(model, &weights, gamma, j).unwrap();
            let err = max_abs_diff(beliefs.node(j), &exact);
            if err > 1e-8 {
                return Err(format!(
                    "tree {t}, root {j}: beliefs differ from E_j min-marginals by {err:e}"
                ));
            }
            belief_err = belief_err.max(err);

            let decomp = root_tree(graph, j).unwrap();
            for i in (0..n).filter(|&i| i != j) {
                let f = brute_f(model, &weights, gamma, &decomp, i).unwrap();
                let mut sum = vec![0.0; model.label_count()];
                for &k in &decomp.children[i] {
                    let e = graph.directed_edge(k, i).unwrap();
                    let w = weights.by_id(e);
                    for (slot, v) in sum.iter_mut().zip(mu.message(e)) {
                        *slot += gamma * w * v;
                    }
                }
                let err = max_abs_diff(&f, &sum);
                if err > 1e-8 {
                    return Err(format!(
                        "tree {t}, root {j}, node {i}: F differs from incoming sum by {err:e}"
                    ));
                }
                f_err = f_err.max(err);
            }

            for x in all_labellings(n, model.label_count()) {
                let weighted = weighted_energy(model, &ones, 1.0, &decomp, &x).unwrap();
                let plain = energy(model, &x).unwrap();
                if weighted != plain {
                    return Err(format!(
                        "tree {t}, root {j}: E_j = {weighted} but E = {plain} at {x:?}"
                    ));
                }
                prop2 += 1;
            }
        }
    }
    Ok(format!(
        "{} trees, belief error {belief_err:.3e}, F error {f_err:.3e}, {prop2} exact energy matches",
        corpus.len()
    ))
}

pub fn sweep_tables(instances: usize, seed: u64) -> (SweepTable, SweepTable) {
    let settings = SweepSettings {
        instances_per_point: instances,
        ..SweepSettings::default()
    };
    (
        sweep_sigma(seed, &settings).unwrap(),
        sweep_edge_prob(seed, &settings).unwrap(),
    )
}

pub fn spin_glass_sweeps(sigma: &SweepTable, edges: &SweepTable) -> Outcome {
    let mut max_iter: f64 = 0.0;
    for (name, table) in [("sigma", sigma), ("edges", edges)] {
        let ccbp: Vec<_> = table.rows_for(Algorithm::Ccbp).collect();
        let bp: Vec<_> = table.rows_for(Algorithm::Bp).collect();
        if ccbp.len() != 11 || bp.len() != 11 {
            return Err(format!(
                "{name} sweep has {} / {} rows",
                bp.len(),
                ccbp.len()
            ));
        }
        for (b, c) in bp.iter().zip(&ccbp) {
            if c.convergence_rate != 1.0 {
                return Err(format!(
                    "{name} = {}: CCBP converged on {}",
                    c.parameter, c.convergence_rate
                ));
            }
            if !(c.mean_iterations <= 60.0) {
                return Err(format!(
                    "{name} = {}: CCBP mean iterations {}",
                    c.parameter, c.mean_iterations
                ));
            }
            if b.convergence_rate > c.convergence_rate {
                return Err(format!(
                    "{name} = {}: BP rate {} above CCBP",
                    b.parameter, b.convergence_rate
                ));
            }
            max_iter = max_iter.max(c.mean_iterations);
        }
    }
    let bp_min = sigma
        .rows_for(Algorithm::Bp)
        .chain(edges.rows_for(Algorithm::Bp))
        .map(|r| r.convergence_rate)
        .fold(1.0, f64::min);
    Ok(format!(
        "CCBP rate 1.0 everywhere, max mean iterations {max_iter:.1}, lowest BP rate {bp_min:.2}"
    ))
}

pub fn gamma_trends(seeds: &[u64]) -> Outcome {
    let settings = SweepSettings::default();
    let (mut mse, mut iters) = ([0.0; 2], [0.0; 2]);
    for &seed in seeds {
        let table = sweep_gamma(seed, &settings).unwrap();
        for (slot, gamma) in [0.1, 0.9].into_iter().enumerate() {
            let row = table
                .rows
                .iter()
                .find(|r| (r.parameter - gamma).abs() < 1e-12)
                .unwrap();
            mse[slot] += row.mean_mse / seeds.len() as f64;
            iters[slot] += row.mean_iterations / seeds.len() as f64;
        }
    }
    let summary = format!(
        "MSE {:.4} -> {:.4}, iterations {:.1} -> {:.1} (gamma 0.1 -> 0.9)",
        mse[0], mse[1], iters[0], iters[1]
    );
    if mse[1] < mse[0] && iters[1] > iters[0] {
        Ok(summary)
    } else {
        Err(summary)
    }
}

pub fn oscillation(seeds: usize, base_seed: u64) -> Outcome {
    let report = oscillation_study(base_seed, seeds, &SweepSettings::default()).unwrap();
    let ccbp_ok = report.runs.iter().filter(|r| r.ccbp_converged).count();
    let bp_failed = report.runs.iter().filter(|r| !r.bp_converged).count();
    let agreement: Vec<usize> = report.runs.iter().map(|r| r.agreement).collect();
    let low = agreement.iter().filter(|&&a| a < 9).count();
    let summary = format!(
        "CCBP converged {ccbp_ok}/{seeds}, BP failed {bp_failed}/{seeds}, agreement per seed {agreement:?}"
    );
    if ccbp_ok == seeds && bp_failed >= 1 && low == 0 {
        Ok(summary)
    } else {
        Err(format!("{summary}; {low} seeds below 9/12"))
    }
}

/// Piecewise-constant test card with four flat regions and a bar.
pub fn test_card(width: usize, height: usize) -> Image {
    let pixels = (0..width * height)
        .map(|k| {
            let (row, col) = (k / width, k % width);
            if row >= height / 3 && row < height / 3 + height / 8 {
                230
            } else if row < height / 2 {
                if col < width / 2 {
                    40
                } else {
                    170
                }
            } else if col < width / 3 {
                110
            } else {
                70
            }
        })
        .collect();
    Image::gray(width, height, pixels).unwrap()
}

pub fn image_restoration(size: usize, rows: usize, seed: u64) -> Outcome {
    let clean = test_card(size, size);
    let noisy = corrupt(&clean, 50.0, seed).unwrap();
    let result = restore(&noisy, &RestoreParams::default()).unwrap();
    let ch = &result.channels[0];
    let (mse_noisy, mse_restored) = (
        pixel_mse(&noisy, &clean).unwrap(),
        pixel_mse(&result.image, &clean).unwrap(),
    );
    if !(ch.restored_energy < ch.noisy_energy) {
        return Err(format!(
            "energy {} not below noisy {}",
            ch.restored_energy, ch.noisy_energy
        ));
    }
    if !(mse_restored < mse_noisy) {
        return Err(format!("MSE {mse_restored} not below noisy {mse_noisy}"));
    }
    let mut r = rng(seed ^ 0xfa57);
    let mut worst: f64 = 0.0;
    for t in 0..rows {
        let y: f64 = r.random_range(0.0..256.0f64).floor();
        let g: Vec<f64> = (0..256).map(|x| (x as f64 - y).powi(2)).collect();
        let s: Vec<f64> = (0..256).map(|_| r.random_range(0.0..1000.0)).collect();
        let fast = minsum_message_fast(&g, &s, 3.0, 100.0);
        for b in 0..256 {
            let direct = (0..256)
                .map(|a| {
                    let d = a as f64 - b as f64;
                    g[a] + s[a] + 3.0 * (d * d).min(100.0)
                })
                .fold(f64::INFINITY, f64::min);
            let err = (fast[b] - direct).abs();
            if err > 1e-9 {
                return Err(format!(
                    "row {t}, label {b}: fast {} vs direct {direct}",
                    fast[b]
                ));
            }
            worst = worst.max(err);
        }
    }
    Ok(format!(
        "energy {:.0} -> {:.0}, MSE {mse_noisy:.1} -> {mse_restored:.1}, {} iterations, fast path error {worst:.1e} over {rows} rows",
        ch.noisy_energy, ch.restored_energy, ch.report.iterations
    ))
}

fn csv_bytes(table: &SweepTable) -> Vec<u8> {
    let mut out = Vec::new();
    write_csv(table, &mut out).unwrap();
    out
}

pub fn determinism(instances: usize, seed: u64, image_size: usize) -> Outcome {
    let settings = SweepSettings {
        instances_per_point: instances,
        ..SweepSettings::default()
    };
    for (name, run) in [
        ("sigma", sweep_sigma as fn(u64, &SweepSettings) -> _),
        ("edges", sweep_edge_prob),
        ("gamma", sweep_gamma),
    ] {
        let first = csv_bytes(&run(seed, &settings).unwrap());
        let second = csv_bytes(&run(seed, &settings).unwrap());
        if first != second {
            return Err(format!("{name} sweep CSV differs between runs"));
        }
    }
    let card = test_card(image_size, image_size);
    let rgb: Vec<u8> = card
        .plane(0)
        .iter()
        .flat_map(|&v| [v, 255 - v, v / 2])
        .collect();
    let rgb = Image::rgb(image_size, image_size, &rgb).unwrap();
    let params = RestoreParams {
        max_iter: 200,
        ..RestoreParams::default()
    };
    let run = || {
        let noisy = corrupt(&rgb, 50.0, seed).unwrap();
        restore(&noisy, &params).unwrap().image.encode_pnm()
    };
    if run() != run() {
        return Err("restore output differs between runs".into());
    }
    Ok(format!(
        "3 sweep CSVs at {instances} instances/point and an RGB corrupt+restore are byte-identical"
    ))
}
