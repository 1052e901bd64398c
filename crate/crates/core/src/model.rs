//! Pairwise Markov random fields.
//!
//! A [`GraphicalModel`] stores costs in the negative-log domain: the node cost
//! `g_i(a) = -log phi_i(a)` and the edge cost `h_ij(a, b) = -log psi_ij(a, b)`.
//! Probability-domain potentials are derived on demand.
//!
//! Edge costs are stored once per undirected edge under the orientation
//! `(min(i, j), max(i, j))`; [`GraphicalModel::edge_cost`] reads them in
//! either direction. Several edges may share one [`PairwiseTable`], which is
//! how 256-label image models stay small.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};

/// Simple undirected graph with nodes `0..n`.
///
/// Directed edges `(i -> j)` are numbered by source node, then by target in
/// ascending order, so the id of `(i -> j)` is `offset(i) + position of j in
/// N(i)`. Message vectors and weight tables are indexed by this id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    directed: Vec<(usize, usize)>,
    reverse: Vec<usize>,
    undirected_of: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from undirected edges given in any order or orientation.
    pub fn from_edges<I>(node_count: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if node_count == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut adjacency = vec![Vec::new(); node_count];
        for (a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) references a node outside 0..{node_count}"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self loop at node {a}")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for (i, nbrs) in adjacency.iter_mut().enumerate() {
            nbrs.sort_unstable();
            if nbrs.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidGraph(format!("duplicate edge at node {i}")));
            }
        }
        Ok(Self::from_sorted_adjacency(adjacency))
    }

    fn from_sorted_adjacency(adjacency: Vec<Vec<usize>>) -> Self {
        let mut offsets = Vec::with_capacity(adjacency.len() + 1);
        let mut directed = Vec::new();
        offsets.push(0);
        for (i, nbrs) in adjacency.iter().enumerate() {
            directed.extend(nbrs.iter().map(|&j| (i, j)));
            offsets.push(directed.len());
        }
        let mut edges = Vec::with_capacity(directed.len() / 2);
        let mut undirected_of = vec![0; directed.len()];
        let mut reverse = vec![0; directed.len()];
        for (e, &(i, j)) in directed.iter().enumerate() {
            let p = adjacency[j].binary_search(&i).expect("symmetric adjacency");
            reverse[e] = offsets[j] + p;
            if i < j {
                undirected_of[e] = edges.len();
                edges.push((i, j));
            }
        }
        for e in 0..directed.len() {
            let (i, j) = directed[e];
            if i > j {
                undirected_of[e] = undirected_of[reverse[e]];
            }
        }
        Self {
            adjacency,
            offsets,
            directed,
            reverse,
            undirected_of,
            edges,
        }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn directed_edge_count(&self) -> usize {
        self.directed.len()
    }

    /// Neighbors of `i` in ascending order.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// Undirected edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Directed edges in id order.
    pub fn directed_edges(&self) -> &[(usize, usize)] {
        &self.directed
    }

    /// Id of the directed edge `(i -> j)`.
    pub fn directed_edge(&self, i: usize, j: usize) -> Option<usize> {
        let nbrs = self.adjacency.get(i)?;
        nbrs.binary_search(&j).ok().map(|p| self.offsets[i] + p)
    }

    /// Ids of the directed edges leaving `i`, aligned with [`Graph::neighbors`].
    pub fn outgoing(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Id of `(j -> i)` given the id of `(i -> j)`.
    pub fn reverse(&self, e: usize) -> usize {
        self.reverse[e]
    }

    /// Index into [`Graph::edges`] of the undirected edge under directed edge `e`.
    pub fn undirected(&self, e: usize) -> usize {
        self.undirected_of[e]
    }

    /// Index into [`Graph::edges`] of `{i, j}`.
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        self.directed_edge(i, j).map(|e| self.undirected_of[e])
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.directed_edge(i, j).is_some()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == n
    }

    pub fn is_tree(&self) -> bool {
        self.edge_count() + 1 == self.node_count() && self.is_connected()
    }
}

/// Erdős–Rényi graph: each of the `n(n-1)/2` pairs is included independently
/// with probability `p`. Pairs are visited in lexicographic order.
pub fn random_graph(n: usize, p: f64, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_graph_with(n, p, &mut rng)
}

pub fn random_graph_with<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidGraph(format!(
            "edge probability {p} outside [0, 1]"
        )));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, edges)
}

/// Complete graph on `n` nodes.
pub fn complete_graph(n: usize) -> Result<Graph> {
    Graph::from_edges(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
}

/// 4-connected `width x height` lattice with node id `row * width + col`.
pub fn grid_graph(width: usize, height: usize) -> Result<Graph> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidGraph(
            "grid dimensions must be positive".into(),
        ));
    }
    let n = width * height;
    let mut adjacency = vec![Vec::with_capacity(4); n];
    for row in 0..height {
        for col in 0..width {
            let id = row * width + col;
            // ascending id order: up, left, right, down
            if row > 0 {
                adjacency[id].push(id - width);
            }
            if col > 0 {
                adjacency[id].push(id - 1);
            }
            if col + 1 < width {
                adjacency[id].push(id + 1);
            }
            if row + 1 < height {
                adjacency[id].push(id + width);
            }
        }
    }
    Ok(Graph::from_sorted_adjacency(adjacency))
}

/// Parameters of a truncated-quadratic pairwise cost `lambda * min((a - b)^2, tau)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedQuadratic {
    pub lambda: f64,
    pub tau: f64,
}

impl TruncatedQuadratic {
    pub fn cost(&self, a: usize, b: usize) -> f64 {
        let d = a as f64 - b as f64;
        self.lambda * (d * d).min(self.tau)
    }
}

/// An `m x m` row-major cost matrix `h(a, b)` for the canonical orientation
/// `(min, max)` of the edges that use it.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseTable {
    values: Vec<f64>,
    truncated_quadratic: Option<TruncatedQuadratic>,
}

impl PairwiseTable {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            truncated_quadratic: None,
        }
    }

    /// Tabulates `lambda * min((a - b)^2, tau)` and remembers the parameters so
    /// that message updates can take the lower-envelope path.
    pub fn truncated_quadratic(labels: usize, lambda: f64, tau: f64) -> Self {
        let tq = TruncatedQuadratic { lambda, tau };
        let mut values = Vec::with_capacity(labels * labels);
        for a in 0..labels {
            values.extend((0..labels).map(|b| tq.cost(a, b)));
        }
        Self {
            values,
            truncated_quadratic: Some(tq),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn as_truncated_quadratic(&self) -> Option<TruncatedQuadratic> {
        self.truncated_quadratic
    }
}

/// Pairwise MRF with costs in the negative-log domain.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphicalModel {
    graph: Graph,
    labels: usize,
    node_costs: Vec<f64>,
    tables: Vec<Arc<PairwiseTable>>,
    edge_table: Vec<usize>,
}

/// Builds a model from one cost vector per node and one row-major `m x m`
/// cost matrix per edge.
///
/// An edge cost keyed `(i, j)` is read as `h_ij(x_i, x_j)`; a key with
/// `i > j` is transposed into the canonical orientation.
pub fn build_model(
    graph: Graph,
    node_costs: Vec<Vec<f64>>,
    edge_costs: Vec<((usize, usize), Vec<f64>)>,
) -> Result<GraphicalModel> {
    let n = graph.node_count();
    if node_costs.len() != n {
        return Err(Error::Dimension(format!(
            "{} node cost vectors for {n} nodes",
            node_costs.len()
        )));
    }
    let labels = node_costs[0].len();
    if labels == 0 {
        return Err(Error::Dimension("label count must be positive".into()));
    }
    let mut flat = Vec::with_capacity(n * labels);
    for (i, g) in node_costs.iter().enumerate() {
        if g.len() != labels {
            return Err(Error::Dimension(format!(
                "node {i} has {} costs, expected {labels}",
                g.len()
            )));
        }
        flat.extend_from_slice(g);
    }
    let mut slots: Vec<Option<Vec<f64>>> = vec![None; graph.edge_count()];
    for ((i, j), h) in edge_costs {
        let idx = graph.edge_index(i, j).ok_or(Error::NotAnEdge(i, j))?;
        if h.len() != labels * labels {
            return Err(Error::Dimension(format!(
                "edge ({i}, {j}) has {} costs, expected {}",
                h.len(),
                labels * labels
            )));
        }
        if slots[idx].is_some() {
            return Err(Error::InvalidGraph(format!(
                "duplicate cost for edge ({i}, {j})"
            )));
        }
        let canonical = if i < j {
            h
        } else {
            let mut t = vec![0.0; labels * labels];
            for a in 0..labels {
                for b in 0..labels {
                    t[b * labels + a] = h[a * labels + b];
                }
            }
            t
        };
        slots[idx] = Some(canonical);
    }
    let mut tables = Vec::with_capacity(slots.len());
    for (idx, slot) in slots.into_iter().enumerate() {
        let (i, j) = graph.edges()[idx];
        let values = slot
            .ok_or_else(|| Error::Dimension(format!("missing cost matrix for edge ({i}, {j})")))?;
        tables.push(Arc::new(PairwiseTable::new(values)));
    }
    let edge_table = (0..tables.len()).collect();
    GraphicalModel::assemble(graph, labels, flat, tables, edge_table)
}

impl GraphicalModel {
    /// Model whose edges all share one pairwise table, with node costs given
    /// as a flat `n * m` row-major array.
    pub fn with_shared_table(
        graph: Graph,
        labels: usize,
        node_costs: Vec<f64>,
        table: PairwiseTable,
    ) -> Result<Self> {
        if labels == 0 || node_costs.len() != graph.node_count() * labels {
            return Err(Error::Dimension(format!(
                "{} node costs for {} nodes with {labels} labels",
                node_costs.len(),
                graph.node_count()
            )));
        }
        if table.values.len() != labels * labels {
            return Err(Error::Dimension(format!(
                "pairwise table has {} entries, expected {}",
                table.values.len(),
                labels * labels
            )));
        }
        let edge_table = vec![0; graph.edge_count()];
        Self::assemble(graph, labels, node_costs, vec![Arc::new(table)], edge_table)
    }

    fn assemble(
        graph: Graph,
        labels: usize,
        node_costs: Vec<f64>,
        tables: Vec<Arc<PairwiseTable>>,
        edge_table: Vec<usize>,
    ) -> Result<Self> {
        if let Some(pos) = node_costs.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFiniteCost(format!(
                "node {} label {}",
                pos / labels,
                pos % labels
            )));
        }
        for (idx, &t) in edge_table.iter().enumerate() {
            if let Some(pos) = tables[t].values.iter().position(|c| !c.is_finite()) {
                let (i, j) = graph.edges()[idx];
                return Err(Error::NonFiniteCost(format!(
                    "edge ({i}, {j}) entry ({}, {})",
                    pos / labels,
                    pos % labels
                )));
            }
        }
        Ok(Self {
            graph,
            labels,
            node_costs,
            tables,
            edge_table,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn label_count(&self) -> usize {
        self.labels
    }

    /// `g_i` as a slice of length `m`.
    pub fn node_cost(&self, i: usize) -> &[f64] {
        &self.node_costs[i * self.labels..(i + 1) * self.labels]
    }

    /// `phi_i(a) = exp(-g_i(a))`.
    pub fn node_potential(&self, i: usize, a: usize) -> f64 {
        (-self.node_cost(i)[a]).exp()
    }

    /// Table of undirected edge `idx` (an index into `graph().edges()`).
    pub fn edge_table(&self, idx: usize) -> &PairwiseTable {
        &self.tables[self.edge_table[idx]]
    }

    /// `h_ij(a, b)` read in the orientation of the arguments.
    ///
    /// Panics if `{i, j}` is not an edge.
    pub fn edge_cost(&self, i: usize, j: usize, a: usize, b: usize) -> f64 {
        let idx = self
            .graph
            .edge_index(i, j)
            .unwrap_or_else(|| panic!("({i}, {j}) is not an edge"));
        let m = self.labels;
        let values = &self.edge_table(idx).values;
        if i < j {
            values[a * m + b]
        } else {
            values[b * m + a]
        }
    }

    /// `psi_ij(a, b) = exp(-h_ij(a, b))`.
    pub fn edge_potential(&self, i: usize, j: usize, a: usize, b: usize) -> f64 {
        (-self.edge_cost(i, j, a, b)).exp()
    }

    /// The row-major `m x m` matrix `h_ij(x_i, x_j)` for directed edge id `e = (i -> j)`.
    pub fn oriented_cost(&self, e: usize) -> OrientedCost<'_> {
        let (i, j) = self.graph.directed_edges()[e];
        OrientedCost {
            values: &self.edge_table(self.graph.undirected(e)).values,
            labels: self.labels,
            transposed: i > j,
        }
    }

    /// `h_ij(a, b) = h_ji(b, a)` is exact by construction; this returns the
    /// full `m x m` matrix for edge `(i, j)` in its canonical orientation.
    pub fn canonical_edge_cost(&self, idx: usize) -> &[f64] {
        &self.edge_table(idx).values
    }
}

/// View of an edge cost matrix from the perspective of a directed edge.
#[derive(Debug, Clone, Copy)]
pub struct OrientedCost<'a> {
    values: &'a [f64],
    labels: usize,
    transposed: bool,
}

impl OrientedCost<'_> {
    /// `h(x_src, x_dst)`.
    #[inline]
    pub fn get(&self, src: usize, dst: usize) -> f64 {
        if self.transposed {
            self.values[dst * self.labels + src]
        } else {
            self.values[src * self.labels + dst]
        }
    }
}

/// Map from label index to spin: 0 -> -1, 1 -> +1.
pub fn spin(label: usize) -> i8 {
    if label == 0 {
        -1
    } else {
        1
    }
}

/// How edge couplings are drawn for random spin glasses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingDistribution {
    /// `Unif(-half_width, half_width)`.
    Uniform { half_width: f64 },
    /// `Normal(0, std_dev^2)`.
    Normal { std_dev: f64 },
}

impl CouplingDistribution {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Uniform { half_width } if half_width > 0.0 => {
                Uniform::new(-half_width, half_width)
                    .expect("finite positive width")
                    .sample(rng)
            }
            Self::Uniform { .. } => 0.0,
            Self::Normal { std_dev } => Normal::new(0.0, std_dev)
                .expect("finite non-negative std dev")
                .sample(rng),
        }
    }
}

/// Ising spin glass with energy `sum_i x_i y_i + sum_ij lambda_ij x_i x_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinGlassInstance {
    pub graph: Graph,
    /// External field per node, each `-1` or `+1`.
    pub y: Vec<i8>,
    /// Coupling per undirected edge, aligned with `graph.edges()`.
    pub lambda: Vec<f64>,
    pub seed: u64,
}

impl SpinGlassInstance {
    /// Samples `y` uniformly from `{-1, +1}` and couplings from `coupling`
    /// for a given graph.
    pub fn sample_on<R: Rng + ?Sized>(
        graph: Graph,
        coupling: CouplingDistribution,
        seed: u64,
        rng: &mut R,
    ) -> Self {
        let y = (0..graph.node_count())
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        let lambda = (0..graph.edge_count())
            .map(|_| coupling.sample(rng))
            .collect();
        Self {
            graph,
            y,
            lambda,
            seed,
        }
    }

    /// Random graph `G(n, p)` followed by field and coupling draws, all from
    /// one ChaCha8 stream seeded with `seed`.
    pub fn random(n: usize, p: f64, coupling: CouplingDistribution, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = random_graph_with(n, p, &mut rng)?;
        Ok(Self::sample_on(graph, coupling, seed, &mut rng))
    }

    /// Closed-form energy of a labelling (label 0 is spin -1).
    pub fn energy(&self, labels: &[usize]) -> f64 {
        let s = |i: usize| f64::from(spin(labels[i]));
        let field: f64 = (0..self.y.len()).map(|i| s(i) * f64::from(self.y[i])).sum();
        let coupling: f64 = self
            .graph
            .edges()
            .iter()
            .zip(&self.lambda)
            .map(|(&(i, j), &l)| l * s(i) * s(j))
            .sum();
        field + coupling
    }
}

/// `g_i(a) = s(a) y_i`, `h_ij(a, b) = lambda_ij s(a) s(b)` with two labels.
pub fn spin_glass_model(inst: &SpinGlassInstance) -> Result<GraphicalModel> {
    let node_costs = inst
        .y
        .iter()
        .map(|&y| (0..2).map(|a| f64::from(spin(a) * y)).collect())
        .collect();
    let edge_costs = inst
        .graph
        .edges()
        .iter()
        .zip(&inst.lambda)
        .map(|(&(i, j), &l)| {
            let h = (0..4)
                .map(|ab| l * f64::from(spin(ab / 2) * spin(ab % 2)))
                .collect();
            ((i, j), h)
        })
        .collect();
    build_model(inst.graph.clone(), node_costs, edge_costs)
}

/// Nonnegative weight `w_ki` per directed edge `(k -> i)`, indexed by directed edge id.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    values: Vec<f64>,
}

impl WeightTable {
    pub fn from_values(graph: &Graph, values: Vec<f64>) -> Result<Self> {
        if values.len() != graph.directed_edge_count() {
            return Err(Error::Dimension(format!(
                "{} weights for {} directed edges",
                values.len(),
                graph.directed_edge_count()
            )));
        }
        Ok(Self { values })
    }

    /// The same weight on every directed edge.
    pub fn constant(graph: &Graph, w: f64) -> Self {
        Self {
            values: vec![w; graph.directed_edge_count()],
        }
    }

    /// `w_ki = 1 / (d(i) - 1)`; a degree-1 target gets 1, which no update reads.
    pub fn uniform(graph: &Graph) -> Self {
        let values = graph
            .directed_edges()
            .iter()
            .map(|&(_, i)| match graph.degree(i) {
                0 | 1 => 1.0,
                d => 1.0 / (d - 1) as f64,
            })
            .collect();
        Self { values }
    }

    /// Weight of directed edge id `e`.
    #[inline]
    pub fn by_id(&self, e: usize) -> f64 {
        self.values[e]
    }

    /// `w_ki` for the directed edge `(k -> i)`.
    pub fn get(&self, graph: &Graph, k: usize, i: usize) -> Option<f64> {
        graph.directed_edge(k, i).map(|e| self.values[e])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest `sum_{k in N(i) \ j} w_ki` over all directed edges `(i -> j)`,
    /// or 0 when every source has degree 1.
    pub fn max_incoming_sum(&self, graph: &Graph) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..graph.node_count() {
            let incoming: Vec<f64> = graph
                .outgoing(i)
                .map(|e| self.values[graph.reverse(e)])
                .collect();
            let total: f64 = incoming.iter().sum();
            for w in &incoming {
                worst = worst.max(total - w);
            }
        }
        worst
    }
}

/// Uniform CCBP weights for a model's graph.
pub fn uniform_weights(model: &GraphicalModel) -> WeightTable {
    WeightTable::uniform(model.graph())
}
