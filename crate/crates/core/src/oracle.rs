//! Exact inference by enumeration, and the root-dependent weighted energy on
//! trees whose min-marginal at the root is the min-sum CCBP belief.
//!
//! Everything here is brute force and meant as ground truth for small models.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::{Graph, GraphicalModel, WeightTable};

/// Default cap on the number of enumerated configurations.
pub const DEFAULT_BUDGET: u64 = 20_000_000;

/// Energy `E(x) = sum_i g_i(x_i) + sum_{ij} h_ij(x_i, x_j)`.
pub fn energy(model: &GraphicalModel, x: &[usize]) -> Result<f64> {
    check_labelling(model, x)?;
    Ok(energy_unchecked(model, x))
}

fn check_labelling(model: &GraphicalModel, x: &[usize]) -> Result<()> {
    if x.len() != model.node_count() {
        return Err(Error::Dimension(format!(
            "labelling has {} entries for {} nodes",
            x.len(),
            model.node_count()
        )));
    }
    let m = model.label_count();
    if let Some((node, &label)) = x.iter().enumerate().find(|(_, &a)| a >= m) {
        return Err(Error::LabelOutOfRange {
            node,
            label,
            labels: m,
        });
    }
    Ok(())
}

fn energy_unchecked(model: &GraphicalModel, x: &[usize]) -> f64 {
    let m = model.label_count();
    let unary: f64 = x
        .iter()
        .enumerate()
        .map(|(i, &a)| model.node_cost(i)[a])
        .sum();
    let pairwise: f64 = model
        .graph()
        .edges()
        .iter()
        .enumerate()
        .map(|(idx, &(i, j))| model.canonical_edge_cost(idx)[x[i] * m + x[j]])
        .sum();
    unary + pairwise
}

/// Visits every labelling in lexicographic order (node 0 most significant).
fn enumerate<F>(n: usize, m: usize, budget: u64, mut visit: F) -> Result<()>
where
    F: FnMut(&[usize]),
{
    let configurations = (m as f64).powi(n as i32);
    if configurations > budget as f64 {
        return Err(Error::BudgetExceeded {
            configurations,
            budget,
        });
    }
    let mut x = vec![0; n];
    loop {
        visit(&x);
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            x[pos] += 1;
            if x[pos] < m {
                break;
            }
            x[pos] = 0;
        }
    }
}

/// Exact per-node quantities from enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactResult {
    /// One length-`m` vector per node.
    pub values: Vec<Vec<f64>>,
    /// Partition function `Z`, when computed.
    pub partition: Option<f64>,
    pub map_labelling: Option<Vec<usize>>,
    pub map_value: Option<f64>,
}

impl ExactResult {
    /// Each node's vector scaled to sum to one.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        self.values
            .iter()
            .map(|row| {
                let total: f64 = row.iter().sum();
                row.iter().map(|v| v / total).collect()
            })
            .collect()
    }

    /// Each node's vector shifted to mean zero.
    pub fn centered(&self) -> Vec<Vec<f64>> {
        self.values
            .iter()
            .map(|row| {
                let mean = row.iter().sum::<f64>() / row.len() as f64;
                row.iter().map(|v| v - mean).collect()
            })
            .collect()
    }
}

/// Minimum energy, and the energy-sorted sums needed for marginals.
struct Sweep {
    min_energy: f64,
    min_marginals: Vec<Vec<f64>>,
    map: Vec<usize>,
}

fn min_sweep(model: &GraphicalModel, budget: u64) -> Result<Sweep> {
    let (n, m) = (model.node_count(), model.label_count());
    let mut min_marginals = vec![vec![f64::INFINITY; m]; n];
    let mut best = f64::INFINITY;
    let mut map = vec![0; n];
    enumerate(n, m, budget, |x| {
        let e = energy_unchecked(model, x);
        for (i, &a) in x.iter().enumerate() {
            if e < min_marginals[i][a] {
                min_marginals[i][a] = e;
            }
        }
        if e < best {
            best = e;
            map.copy_from_slice(x);
        }
    })?;
    Ok(Sweep {
        min_energy: best,
        min_marginals,
        map,
    })
}

/// Exact marginals `P(X_i = tau)` and the partition function.
pub fn brute_marginals(model: &GraphicalModel) -> Result<ExactResult> {
    brute_marginals_with_budget(model, DEFAULT_BUDGET)
}

pub fn brute_marginals_with_budget(model: &GraphicalModel, budget: u64) -> Result<ExactResult> {
    let (n, m) = (model.node_count(), model.label_count());
    let shift = min_sweep(model, budget)?.min_energy;
    let mut sums = vec![vec![0.0; m]; n];
    let mut total = 0.0;
    enumerate(n, m, budget, |x| {
        let p = (shift - energy_unchecked(model, x)).exp();
        total += p;
        for (i, &a) in x.iter().enumerate() {
            sums[i][a] += p;
        }
    })?;
    let values = sums
        .into_iter()
        .map(|row| row.into_iter().map(|s| s / total).collect())
        .collect();
    Ok(ExactResult {
        values,
        partition: Some(total * (-shift).exp()),
        map_labelling: None,
        map_value: None,
    })
}

/// Min-marginals of the energy: `min { E(x) : x_i = tau }`.
pub fn brute_min_marginals(model: &GraphicalModel) -> Result<ExactResult> {
    let sweep = min_sweep(model, DEFAULT_BUDGET)?;
    Ok(ExactResult {
        values: sweep.min_marginals,
        partition: None,
        map_labelling: Some(sweep.map),
        map_value: Some(sweep.min_energy),
    })
}

/// Max-marginals `max { P(x) : x_i = tau } = exp(-min-marginal) / Z`.
pub fn brute_max_marginals(model: &GraphicalModel) -> Result<ExactResult> {
    let mins = brute_min_marginals(model)?;
    let z = brute_marginals(model)?
        .partition
        .expect("partition computed");
    let values = mins
        .values
        .iter()
        .map(|row| row.iter().map(|e| (-e).exp() / z).collect())
        .collect();
    Ok(ExactResult {
        values,
        partition: Some(z),
        map_labelling: mins.map_labelling,
        map_value: mins.map_value,
    })
}

/// Minimum-energy labelling; ties go to the lexicographically smallest.
pub fn brute_map(model: &GraphicalModel) -> Result<ExactResult> {
    let sweep = min_sweep(model, DEFAULT_BUDGET)?;
    Ok(ExactResult {
        values: Vec::new(),
        partition: None,
        map_labelling: Some(sweep.map),
        map_value: Some(sweep.min_energy),
    })
}

/// A tree rooted at `root`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeDecomposition {
    pub root: usize,
    /// `None` for the root.
    pub parent: Vec<Option<usize>>,
    /// Children in ascending order.
    pub children: Vec<Vec<usize>>,
    /// Proper descendants in BFS order.
    pub descendants: Vec<Vec<usize>>,
    /// Distance from the root.
    pub depth: Vec<usize>,
    /// `layers[d]` holds the nodes at distance `d` from the root.
    pub layers: Vec<Vec<usize>>,
    /// Number of layers of the subtree rooted at each node (a leaf has 1).
    pub subtree_depth: Vec<usize>,
}

impl TreeDecomposition {
    /// Nodes of the subtree rooted at `i` at relative depth `d`.
    pub fn subtree_layer(&self, i: usize, d: usize) -> Vec<usize> {
        let target = self.depth[i] + d;
        std::iter::once(i)
            .chain(self.descendants[i].iter().copied())
            .filter(|&k| self.depth[k] == target)
            .collect()
    }

    pub fn is_in_subtree(&self, k: usize, i: usize) -> bool {
        let mut node = k;
        loop {
            if node == i {
                return true;
            }
            match self.parent[node] {
                Some(p) => node = p,
                None => return false,
            }
        }
    }
}

/// BFS decomposition of a tree graph rooted at `root`.
pub fn root_tree(graph: &Graph, root: usize) -> Result<TreeDecomposition> {
    let n = graph.node_count();
    if root >= n {
        return Err(Error::InvalidGraph(format!("root {root} outside 0..{n}")));
    }
    if !graph.is_tree() {
        return Err(Error::NotATree);
    }
    let mut parent = vec![None; n];
    let mut children = vec![Vec::new(); n];
    let mut depth = vec![0; n];
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &v in graph.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                parent[v] = Some(u);
                depth[v] = depth[u] + 1;
                children[u].push(v);
                queue.push_back(v);
            }
        }
    }
    let height = depth.iter().copied().max().unwrap_or(0);
    let mut layers = vec![Vec::new(); height + 1];
    for &u in &order {
        layers[depth[u]].push(u);
    }
    let mut subtree_depth = vec![1; n];
    for &u in order.iter().rev() {
        if let Some(p) = parent[u] {
            subtree_depth[p] = subtree_depth[p].max(subtree_depth[u] + 1);
        }
    }
    let mut descendants = vec![Vec::new(); n];
    for &u in &order {
        let mut node = u;
        while let Some(p) = parent[node] {
            descendants[p].push(u);
            node = p;
        }
    }
    Ok(TreeDecomposition {
        root,
        parent,
        children,
        descendants,
        depth,
        layers,
        subtree_depth,
    })
}

/// Product of `w` over the directed edges on the path from `k` up to its
/// ancestor `i`; 1 when `k == i`.
pub fn path_weight(
    graph: &Graph,
    decomp: &TreeDecomposition,
    weights: &WeightTable,
    k: usize,
    i: usize,
) -> Result<f64> {
    if !decomp.is_in_subtree(k, i) {
        return Err(Error::NotInSubtree {
            node: k,
            ancestor: i,
        });
    }
    let mut w = 1.0;
    let mut node = k;
    while node != i {
        let p = decomp.parent[node].expect("ancestor reached before root");
        w *= weights.get(graph, node, p).expect("tree edge");
        node = p;
    }
    Ok(w)
}

/// `H_kp(x_k, x_p) = g_k(x_k) + h_kp(x_k, x_p)`.
fn h_cost(model: &GraphicalModel, k: usize, p: usize, x: &[usize]) -> f64 {
    model.node_cost(k)[x[k]] + model.edge_cost(k, p, x[k], x[p])
}

/// Per-node coefficient of `H_{k, parent(k)}` in the weighted energy,
/// computed layer by layer from [`path_weight`].
fn layer_coefficients(
    model: &GraphicalModel,
    weights: &WeightTable,
    gamma: f64,
    decomp: &TreeDecomposition,
) -> Result<Vec<f64>> {
    let graph = model.graph();
    let mut coef = vec![0.0; graph.node_count()];
    for &i in &decomp.children[decomp.root] {
        for d in 0..decomp.subtree_depth[i] {
            for k in decomp.subtree_layer(i, d) {
                coef[k] = gamma.powi(d as i32) * path_weight(graph, decomp, weights, k, i)?;
            }
        }
    }
    Ok(coef)
}

/// Root-dependent weighted energy
/// `E_j(x) = g_j(x_j) + sum_{i in N(j)} sum_d sum_{k in layer d of T(j,i)} gamma^d w(k,i) H_{k,P(k)}`.
pub fn weighted_energy(
    model: &GraphicalModel,
    weights: &WeightTable,
    gamma: f64,
    decomp: &TreeDecomposition,
    x: &[usize],
) -> Result<f64> {
    check_labelling(model, x)?;
    let j = decomp.root;
    let mut total = model.node_cost(j)[x[j]];
    for &i in &decomp.children[j] {
        for d in 0..decomp.subtree_depth[i] {
            let scale = gamma.powi(d as i32);
            for k in decomp.subtree_layer(i, d) {
                let p = decomp.parent[k].expect("non-root");
                let w = path_weight(model.graph(), decomp, weights, k, i)?;
                total += scale * w * h_cost(model, k, p, x);
            }
        }
    }
    Ok(total)
}

/// [`weighted_energy`] computed by walking edges away from the root and
/// carrying `gamma^(depth-1) * w(k, i)` down each branch.
pub fn weighted_energy_edge_walk(
    model: &GraphicalModel,
    weights: &WeightTable,
    gamma: f64,
    root: usize,
    x: &[usize],
) -> Result<f64> {
    check_labelling(model, x)?;
    let graph = model.graph();
    if !graph.is_tree() {
        return Err(Error::NotATree);
    }
    let mut total = model.node_cost(root)[x[root]];
    // (node, parent, coefficient of H_{node, parent})
    let mut stack: Vec<(usize, usize, f64)> = graph
        .neighbors(root)
        .iter()
        .map(|&i| (i, root, 1.0))
        .collect();
    while let Some((k, p, c)) = stack.pop() {
        total += c * h_cost(model, k, p, x);
        for &child in graph.neighbors(k).iter().filter(|&&v| v != p) {
            let w = weights.get(graph, child, k).expect("tree edge");
            stack.push((child, k, c * gamma * w));
        }
    }
    Ok(total)
}

/// Exhaustive min-marginal of `E_j` at the root `j`.
pub fn weighted_min_marginal(
    model: &GraphicalModel,
    weights: &WeightTable,
    gamma: f64,
    j: usize,
) -> Result<Vec<f64>> {
    let decomp = root_tree(model.graph(), j)?;
    let coef = layer_coefficients(model, weights, gamma, &decomp)?;
    let (n, m) = (model.node_count(), model.label_count());
    let mut best = vec![f64::INFINITY; m];
    enumerate(n, m, DEFAULT_BUDGET, |x| {
        let mut e = model.node_cost(j)[x[j]];
        for k in 0..n {
            if let Some(p) = decomp.parent[k] {
                e += coef[k] * h_cost(model, k, p, x);
            }
        }
        if e < best[x[j]] {
            best[x[j]] = e;
        }
    })?;
    Ok(best)
}

/// `F_ji(x_i)`: minimum over the labels of the proper descendants of `i` of
/// the weighted cost of the subtree below `i`, by enumeration.
pub fn brute_f(
    model: &GraphicalModel,
    weights: &WeightTable,
    gamma: f64,
    decomp: &TreeDecomposition,
    i: usize,
) -> Result<Vec<f64>> {
    if decomp.parent[i].is_none() {
        return Err(Error::InvalidGraph(format!("node {i} is the root")));
    }
    let m = model.label_count();
    let below = &decomp.descendants[i];
    let mut terms = Vec::new();
    for d in 1..decomp.subtree_depth[i] {
        for k in decomp.subtree_layer(i, d) {
            let p = decomp.parent[k].expect("non-root");
            let c = gamma.powi(d as i32) * path_weight(model.graph(), decomp, weights, k, i)?;
            terms.push((k, p, c));
        }
    }
    let mut x = vec![0; model.node_count()];
    let mut out = vec![f64::INFINITY; m];
    for (a, slot) in out.iter_mut().enumerate() {
        x[i] = a;
        enumerate(below.len(), m, DEFAULT_BUDGET, |sub| {
            for (&k, &label) in below.iter().zip(sub) {
                x[k] = label;
            }
            let total: f64 = terms
                .iter()
                .map(|&(k, p, c)| c * h_cost(model, k, p, &x))
                .sum();
            if total < *slot {
                *slot = total;
            }
        })?;
    }
    Ok(out)
}
