//! Deterministic model generators shared by the integration suites.
#![allow(dead_code)]

pub mod checks;

use ccbp_core::model::{build_model, random_graph_with, Graph, GraphicalModel, WeightTable};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Node and edge costs drawn from `Unif(-scale, scale)`.
pub fn with_random_costs<R: Rng>(
    graph: Graph,
    m: usize,
    scale: f64,
    rng: &mut R,
) -> GraphicalModel {
    let mut draw =
        |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-scale..=scale)).collect() };
    let node_costs = (0..graph.node_count()).map(|_| draw(m)).collect();
    let edge_costs = graph.edges().iter().map(|&e| (e, draw(m * m))).collect();
    build_model(graph, node_costs, edge_costs).expect("generated model is valid")
}

/// `G(n, p)` with random costs.
pub fn random_model(seed: u64, n: usize, m: usize, p: f64, scale: f64) -> GraphicalModel {
    let mut r = rng(seed);
    let graph = random_graph_with(n, p, &mut r).unwrap();
    with_random_costs(graph, m, scale, &mut r)
}

/// Random labelled tree: node `k` of a random ordering attaches to a
/// uniformly chosen earlier node.
pub fn random_tree<R: Rng>(n: usize, rng: &mut R) -> Graph {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let edges: Vec<_> = (1..n)
        .map(|k| (order[rng.random_range(0..k)], order[k]))
        .collect();
    Graph::from_edges(n, edges).unwrap()
}

pub fn random_tree_model(seed: u64, n: usize, m: usize, scale: f64) -> GraphicalModel {
    let mut r = rng(seed);
    let graph = random_tree(n, &mut r);
    with_random_costs(graph, m, scale, &mut r)
}

/// Weights `w_ki ~ Unif(0, 1/(d(i)-1))`, which keep every incoming sum at
/// most one.
pub fn random_weights<R: Rng>(graph: &Graph, rng: &mut R) -> WeightTable {
    let values = graph
        .directed_edges()
        .iter()
        .map(|&(_, i)| match graph.degree(i) {
            0 | 1 => rng.random_range(0.0..=1.0),
            d => rng.random_range(0.0..=1.0 / (d - 1) as f64),
        })
        .collect();
    WeightTable::from_values(graph, values).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn rows_max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| max_abs_diff(x, y))
        .fold(0.0, f64::max)
}

/// Every labelling of `n` nodes with `m` labels, node 0 most significant.
pub fn all_labellings(n: usize, m: usize) -> Vec<Vec<usize>> {
    let total = m.pow(n as u32);
    (0..total)
        .map(|mut code| {
            let mut x = vec![0; n];
            for slot in x.iter_mut().rev() {
                *slot = code % m;
                code /= m;
            }
            x
        })
        .collect()
}
