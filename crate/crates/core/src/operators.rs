//! Message-passing operators.
//!
//! Every step is a parallel update: all `2|E|` outgoing messages are computed
//! from the previous iterate. Within one message, incoming messages are
//! combined in ascending source-node order and labels in ascending order, so
//! results are reproducible bit for bit.
//!
//! BP steps normalize each message (`T = N T^`). CCBP steps do not normalize;
//! their messages live in the unnormalized product space, on which the CCBP
//! operator is a contraction with constant `gamma` under
//! [`MessageVector::distance`].

use crate::error::{Error, Result};
use crate::image::truncated_quadratic_min_convolution;
use crate::messages::{Domain, FixedPointReport, MessageVector};
use crate::model::{Graph, GraphicalModel, WeightTable};

/// Slack allowed on `sum_k w_ki <= 1` for weights such as `3 * (1/3)`.
const WEIGHT_SUM_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Semiring {
    SumProduct,
    MaxProduct,
    MinSum,
}

impl Semiring {
    /// Domain in which messages of this semiring are stored.
    pub fn domain(self) -> Domain {
        match self {
            Self::SumProduct | Self::MaxProduct => Domain::Probability,
            Self::MinSum => Domain::NegLog,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Bp,
    Ccbp,
}

/// Parameters shared by all operators. `gamma` and `weights` are read by
/// CCBP only, `alpha` by BP only.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorConfig {
    weights: WeightTable,
    gamma: f64,
    alpha: f64,
    semiring: Semiring,
    algorithm: Algorithm,
}

impl OperatorConfig {
    pub fn new(
        graph: &Graph,
        weights: WeightTable,
        gamma: f64,
        alpha: f64,
        semiring: Semiring,
        algorithm: Algorithm,
    ) -> Result<Self> {
        if weights.values().len() != graph.directed_edge_count() {
            return Err(Error::InvalidConfig(format!(
                "{} weights for {} directed edges",
                weights.values().len(),
                graph.directed_edge_count()
            )));
        }
        if let Some(w) = weights
            .values()
            .iter()
            .find(|w| !(w.is_finite() && **w >= 0.0))
        {
            return Err(Error::InvalidConfig(format!(
                "weight {w} is not a finite nonnegative value"
            )));
        }
        let worst = weights.max_incoming_sum(graph);
        if worst > 1.0 + WEIGHT_SUM_SLACK {
            return Err(Error::InvalidConfig(format!(
                "incoming weights sum to {worst}, which exceeds 1"
            )));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidConfig(format!(
                "gamma {gamma} outside [0, 1)"
            )));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha {alpha} outside [0, 1)"
            )));
        }
        Ok(Self {
            weights,
            gamma,
            alpha,
            semiring,
            algorithm,
        })
    }

    /// Uniform weights with `gamma = alpha = 0.9`.
    pub fn uniform(model: &GraphicalModel, semiring: Semiring, algorithm: Algorithm) -> Self {
        Self::new(
            model.graph(),
            WeightTable::uniform(model.graph()),
            0.9,
            0.9,
            semiring,
            algorithm,
        )
        .expect("uniform weights are valid")
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidConfig(format!(
                "gamma {gamma} outside [0, 1)"
            )));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha {alpha} outside [0, 1)"
            )));
        }
        self.alpha = alpha;
        Ok(self)
    }

    pub fn weights(&self) -> &WeightTable {
        &self.weights
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn semiring(&self) -> Semiring {
        self.semiring
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn domain(&self) -> Domain {
        self.semiring.domain()
    }
}

/// How incoming messages are scaled before they are combined.
#[derive(Clone, Copy)]
enum Incoming<'a> {
    /// Plain product or sum (BP).
    Unit,
    /// Exponent or factor `gamma * w_ki` (CCBP).
    Weighted(&'a WeightTable, f64),
}

impl Incoming<'_> {
    #[inline]
    fn scale(self, e: usize) -> f64 {
        match self {
            Self::Unit => 1.0,
            Self::Weighted(w, gamma) => gamma * w.by_id(e),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Reduce {
    Sum,
    Max,
}

fn check(model: &GraphicalModel, mu: &MessageVector, domain: Domain) -> Result<()> {
    mu.expect_domain(domain)?;
    mu.expect_shape(model)
}

/// `out_ij(x_j) = reduce_{x_i} phi_i(x_i) psi_ij(x_i, x_j) prod_k mu_ki(x_i)^{s_ki}`.
fn product_update(
    model: &GraphicalModel,
    mu: &MessageVector,
    incoming: Incoming<'_>,
    reduce: Reduce,
) -> MessageVector {
    let graph = model.graph();
    let m = model.label_count();
    let mut out = MessageVector::filled(graph.directed_edge_count(), m, Domain::Probability, 0.0);
    let mut acc = vec![0.0; m];
    for i in 0..graph.node_count() {
        let g = model.node_cost(i);
        let outgoing = graph.outgoing(i);
        for e in outgoing.clone() {
            for (a, slot) in acc.iter_mut().enumerate() {
                *slot = (-g[a]).exp();
            }
            for other in outgoing.clone().filter(|&o| o != e) {
                let k_to_i = graph.reverse(other);
                let msg = mu.message(k_to_i);
                match incoming {
                    Incoming::Unit => {
                        for (slot, v) in acc.iter_mut().zip(msg) {
                            *slot *= v;
                        }
                    }
                    Incoming::Weighted(..) => {
                        let s = incoming.scale(k_to_i);
                        for (slot, v) in acc.iter_mut().zip(msg) {
                            *slot *= (s * v.ln()).exp();
                        }
                    }
                }
            }
            let h = model.oriented_cost(e);
            for (b, slot) in out.message_mut(e).iter_mut().enumerate() {
                let terms = acc
                    .iter()
                    .enumerate()
                    .map(|(a, v)| v * (-h.get(a, b)).exp());
                *slot = match reduce {
                    Reduce::Sum => terms.sum(),
                    Reduce::Max => terms.fold(f64::NEG_INFINITY, f64::max),
                };
            }
        }
    }
    out
}

/// `out_ij(x_j) = min_{x_i} g_i(x_i) + sum_k s_ki mu_ki(x_i) + h_ij(x_i, x_j)`.
fn minsum_update(
    model: &GraphicalModel,
    mu: &MessageVector,
    incoming: Incoming<'_>,
    fast: bool,
) -> MessageVector {
    let graph = model.graph();
    let m = model.label_count();
    let mut out = MessageVector::filled(graph.directed_edge_count(), m, Domain::NegLog, 0.0);
    let mut acc = vec![0.0; m];
    let mut scratch = EnvelopeScratch::new(m);
    for i in 0..graph.node_count() {
        let g = model.node_cost(i);
        let outgoing = graph.outgoing(i);
        for e in outgoing.clone() {
            acc.copy_from_slice(g);
            for other in outgoing.clone().filter(|&o| o != e) {
                let k_to_i = graph.reverse(other);
                let s = incoming.scale(k_to_i);
                for (slot, v) in acc.iter_mut().zip(mu.message(k_to_i)) {
                    *slot += s * v;
                }
            }
            let table = model.edge_table(graph.undirected(e));
            match table.as_truncated_quadratic() {
                Some(tq) if fast => truncated_quadratic_min_convolution(
                    &acc,
                    tq.lambda,
                    tq.tau,
                    out.message_mut(e),
                    &mut scratch.vertices,
                    &mut scratch.bounds,
                ),
                _ => {
                    let h = model.oriented_cost(e);
                    for (b, slot) in out.message_mut(e).iter_mut().enumerate() {
                        *slot = acc
                            .iter()
                            .enumerate()
                            .map(|(a, v)| v + h.get(a, b))
                            .fold(f64::INFINITY, f64::min);
                    }
                }
            }
        }
    }
    out
}

struct EnvelopeScratch {
    vertices: Vec<usize>,
    bounds: Vec<f64>,
}

impl EnvelopeScratch {
    fn new(m: usize) -> Self {
        Self {
            vertices: vec![0; m],
            bounds: vec![0.0; m + 1],
        }
    }
}

/// Unnormalized BP update `T^ mu` in the sum-product or max-product semiring.
pub fn bp_raw_update(
    model: &GraphicalModel,
    mu: &MessageVector,
    semiring: Semiring,
) -> Result<MessageVector> {
    check(model, mu, Domain::Probability)?;
    let reduce = match semiring {
        Semiring::SumProduct => Reduce::Sum,
        Semiring::MaxProduct => Reduce::Max,
        Semiring::MinSum => {
            return Err(Error::InvalidConfig(
                "raw probability-domain update needs sum-product or max-product".into(),
            ))
        }
    };
    Ok(product_update(model, mu, Incoming::Unit, reduce))
}

/// Max-product BP step `T = N T^`.
pub fn bp_step_max(model: &GraphicalModel, mu: &MessageVector) -> Result<MessageVector> {
    bp_raw_update(model, mu, Semiring::MaxProduct)?.normalize()
}

/// Sum-product BP step `T = N T^`.
pub fn bp_step_sum(model: &GraphicalModel, mu: &MessageVector) -> Result<MessageVector> {
    bp_raw_update(model, mu, Semiring::SumProduct)?.normalize()
}

/// Max-product BP in negative-log form. Each message is shifted so that
/// `sum_x exp(-mu(x)) = 1`, the image of [`bp_step_max`] under `-log`.
pub fn bp_step_minsum(model: &GraphicalModel, mu: &MessageVector) -> Result<MessageVector> {
    check(model, mu, Domain::NegLog)?;
    let mut out = minsum_update(model, mu, Incoming::Unit, true);
    for e in 0..out.edge_count() {
        let msg = out.message_mut(e);
        let low = msg.iter().copied().fold(f64::INFINITY, f64::min);
        let log_total = low - msg.iter().map(|v| (low - v).exp()).sum::<f64>().ln();
        msg.iter_mut().for_each(|v| *v -= log_total);
    }
    Ok(out)
}

/// `(1 - alpha) * base_step(mu) + alpha * mu`, entrywise in `mu`'s domain.
pub fn damped_step<F>(base_step: F, mu: &MessageVector, alpha: f64) -> Result<MessageVector>
where
    F: FnOnce(&MessageVector) -> Result<MessageVector>,
{
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!(
            "alpha {alpha} outside [0, 1)"
        )));
    }
    let next = base_step(mu)?;
    if alpha == 0.0 {
        return Ok(next);
    }
    let values = next
        .values()
        .iter()
        .zip(mu.values())
        .map(|(t, m)| (1.0 - alpha) * t + alpha * m)
        .collect();
    MessageVector::from_values(next.domain(), next.labels(), values)
}

/// Max-product CCBP operator
/// `(S mu)_ij(x_j) = max_{x_i} phi_i psi_ij prod_k mu_ki(x_i)^{gamma w_ki}`.
pub fn ccbp_step_max(
    model: &GraphicalModel,
    cfg: &OperatorConfig,
    mu: &MessageVector,
) -> Result<MessageVector> {
    check(model, mu, Domain::Probability)?;
    Ok(product_update(
        model,
        mu,
        Incoming::Weighted(&cfg.weights, cfg.gamma),
        Reduce::Max,
    ))
}

/// Sum-product CCBP operator, the max replaced by a sum over `x_i`.
pub fn ccbp_step_sum(
    model: &GraphicalModel,
    cfg: &OperatorConfig,
    mu: &MessageVector,
) -> Result<MessageVector> {
    check(model, mu, Domain::Probability)?;
    Ok(product_update(
        model,
        mu,
        Incoming::Weighted(&cfg.weights, cfg.gamma),
        Reduce::Sum,
    ))
}

/// Min-sum CCBP operator
/// `(S mu)_ij(x_j) = min_{x_i} g_i + h_ij + gamma sum_k w_ki mu_ki(x_i)`.
///
/// Edges whose cost is a truncated quadratic use the linear-time
/// lower-envelope update; all other edges use the direct `O(m^2)` minimum.
pub fn ccbp_step_minsum(
    model: &GraphicalModel,
    cfg: &OperatorConfig,
    mu: &MessageVector,
) -> Result<MessageVector> {
    check(model, mu, Domain::NegLog)?;
    Ok(minsum_update(
        model,
        mu,
        Incoming::Weighted(&cfg.weights, cfg.gamma),
        true,
    ))
}

/// [`ccbp_step_minsum`] with the direct `O(m^2)` minimum on every edge.
pub fn ccbp_step_minsum_naive(
    model: &GraphicalModel,
    cfg: &OperatorConfig,
    mu: &MessageVector,
) -> Result<MessageVector> {
    check(model, mu, Domain::NegLog)?;
    Ok(minsum_update(
        model,
        mu,
        Incoming::Weighted(&cfg.weights, cfg.gamma),
        false,
    ))
}

/// One iteration of the algorithm selected by `cfg`. BP steps are damped by
/// `cfg.alpha()`.
pub fn step(
    model: &GraphicalModel,
    cfg: &OperatorConfig,
    mu: &MessageVector,
) -> Result<MessageVector> {
    match (cfg.algorithm, cfg.semiring) {
        (Algorithm::Ccbp, Semiring::SumProduct) => ccbp_step_sum(model, cfg, mu),
        (Algorithm::Ccbp, Semiring::MaxProduct) => ccbp_step_max(model, cfg, mu),
        (Algorithm::Ccbp, Semiring::MinSum) => ccbp_step_minsum(model, cfg, mu),
        (Algorithm::Bp, Semiring::SumProduct) => {
            damped_step(|m| bp_step_sum(model, m), mu, cfg.alpha)
        }
        (Algorithm::Bp, Semiring::MaxProduct) => {
            damped_step(|m| bp_step_max(model, m), mu, cfg.alpha)
        }
        (Algorithm::Bp, Semiring::MinSum) => {
            damped_step(|m| bp_step_minsum(model, m), mu, cfg.alpha)
        }
    }
}

/// Iterates `mu <- step(mu)` until `d(mu^(t+1), mu^(t)) < epsilon` or
/// `max_iter` steps have run. Non-convergence is reported, not an error.
pub fn run_fixed_point<F>(
    step: F,
    mu0: MessageVector,
    epsilon: f64,
    max_iter: usize,
) -> Result<(MessageVector, FixedPointReport)>
where
    F: FnMut(&MessageVector) -> Result<MessageVector>,
{
    run_fixed_point_observed(step, mu0, epsilon, max_iter, |_, _| {})
}

/// [`run_fixed_point`] calling `observe(t, mu^(t))` after every step.
pub fn run_fixed_point_observed<F, O>(
    mut step: F,
    mu0: MessageVector,
    epsilon: f64,
    max_iter: usize,
    mut observe: O,
) -> Result<(MessageVector, FixedPointReport)>
where
    F: FnMut(&MessageVector) -> Result<MessageVector>,
    O: FnMut(usize, &MessageVector),
{
    if !(epsilon > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "epsilon {epsilon} must be positive"
        )));
    }
    if max_iter == 0 {
        return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
    }
    let mut current = mu0;
    let mut history = Vec::new();
    let mut converged = false;
    for t in 1..=max_iter {
        let next = step(&current)?;
        let residual = next.distance(&current)?;
        history.push(residual);
        observe(t, &next);
        current = next;
        if residual < epsilon {
            converged = true;
            break;
        }
    }
    let report = FixedPointReport {
        iterations: history.len(),
        converged,
        final_residual: *history.last().expect("at least one iteration"),
        residual_history: history,
    };
    Ok((current, report))
}

/// Per-node beliefs.
#[derive(Debug, Clone, PartialEq)]
pub struct Beliefs {
    domain: Domain,
    labels: usize,
    values: Vec<f64>,
}

impl Beliefs {
    pub fn from_values(domain: Domain, labels: usize, values: Vec<f64>) -> Result<Self> {
        if labels == 0 || !values.len().is_multiple_of(labels) {
            return Err(Error::ShapeMismatch(format!(
                "{} belief entries do not split into vectors of length {labels}",
                values.len()
            )));
        }
        Ok(Self {
            domain,
            labels,
            values,
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn node_count(&self) -> usize {
        self.values.len() / self.labels
    }

    pub fn node(&self, j: usize) -> &[f64] {
        &self.values[j * self.labels..(j + 1) * self.labels]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rows as owned vectors.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values
            .chunks_exact(self.labels)
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Probability-domain beliefs scaled to sum to one per node.
    pub fn normalized(&self) -> Result<Self> {
        if self.domain != Domain::Probability {
            return Err(Error::DomainMismatch {
                expected: Domain::Probability,
                found: self.domain,
            });
        }
        let mut out = self.clone();
        for row in out.values.chunks_exact_mut(self.labels) {
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= total);
        }
        Ok(out)
    }

    /// Each node's vector shifted to mean zero.
    pub fn centered(&self) -> Self {
        let mut out = self.clone();
        for row in out.values.chunks_exact_mut(self.labels) {
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            row.iter_mut().for_each(|v| *v -= mean);
        }
        out
    }

    pub fn decode(&self) -> Vec<usize> {
        decode(self)
    }
}

/// `b_j(x_j) = phi_j(x_j) prod_i mu_ij(x_j)`.
pub fn beliefs_prob(model: &GraphicalModel, mu: &MessageVector) -> Result<Beliefs> {
    check(model, mu, Domain::Probability)?;
    let graph = model.graph();
    let m = model.label_count();
    let mut values = Vec::with_capacity(graph.node_count() * m);
    for j in 0..graph.node_count() {
        let g = model.node_cost(j);
        let mut row: Vec<f64> = g.iter().map(|c| (-c).exp()).collect();
        for out in graph.outgoing(j) {
            for (slot, v) in row.iter_mut().zip(mu.message(graph.reverse(out))) {
                *slot *= v;
            }
        }
        values.extend(row);
    }
    Beliefs::from_values(Domain::Probability, m, values)
}

/// Normalized probability-domain beliefs computed in log space, so that
/// large unnormalized messages do not overflow the product.
pub fn beliefs_prob_normalized(model: &GraphicalModel, mu: &MessageVector) -> Result<Beliefs> {
    check(model, mu, Domain::Probability)?;
    let logs = beliefs_minsum(model, &mu.convert(Domain::NegLog))?;
    let m = model.label_count();
    let mut values = Vec::with_capacity(logs.values.len());
    for row in logs.values.chunks_exact(m) {
        let low = row.iter().copied().fold(f64::INFINITY, f64::min);
        let unnorm: Vec<f64> = row.iter().map(|v| (low - v).exp()).collect();
        let total: f64 = unnorm.iter().sum();
        values.extend(unnorm.into_iter().map(|v| v / total));
    }
    Beliefs::from_values(Domain::Probability, m, values)
}

/// `b_j(x_j) = g_j(x_j) + sum_i mu_ij(x_j)`.
pub fn beliefs_minsum(model: &GraphicalModel, mu: &MessageVector) -> Result<Beliefs> {
    check(model, mu, Domain::NegLog)?;
    let graph = model.graph();
    let m = model.label_count();
    let mut values = Vec::with_capacity(graph.node_count() * m);
    for j in 0..graph.node_count() {
        let mut row = model.node_cost(j).to_vec();
        for out in graph.outgoing(j) {
            for (slot, v) in row.iter_mut().zip(mu.message(graph.reverse(out))) {
                *slot += v;
            }
        }
        values.extend(row);
    }
    Beliefs::from_values(Domain::NegLog, m, values)
}

/// Per node, argmax (probability) or argmin (negative log); ties go to the
/// lowest label.
pub fn decode(b: &Beliefs) -> Vec<usize> {
    b.values
        .chunks_exact(b.labels)
        .map(|row| {
            let mut best = 0;
            for (a, &v) in row.iter().enumerate().skip(1) {
                let better = match b.domain {
                    Domain::Probability => v > row[best],
                    Domain::NegLog => v < row[best],
                };
                if better {
                    best = a;
                }
            }
            best
        })
        .collect()
}

/// Result of [`infer`].
#[derive(Debug, Clone)]
pub struct Inference {
    pub messages: MessageVector,
    pub report: FixedPointReport,
    /// Normalized beliefs for the product semirings, raw min-sum beliefs otherwise.
    pub beliefs: Beliefs,
}

/// Runs the algorithm selected by `cfg` from the all-ones (or all-zeros)
/// initialization and computes beliefs at the final iterate.
pub fn infer(
    model: &GraphicalModel,
    cfg: &OperatorConfig,
    epsilon: f64,
    max_iter: usize,
) -> Result<Inference> {
    let mu0 = crate::messages::init_messages(model, cfg.domain());
    let (messages, report) = run_fixed_point(|mu| step(model, cfg, mu), mu0, epsilon, max_iter)?;
    let beliefs = match cfg.domain() {
        Domain::Probability => beliefs_prob_normalized(model, &messages)?,
        Domain::NegLog => beliefs_minsum(model, &messages)?,
    };
    Ok(Inference {
        messages,
        report,
        beliefs,
    })
}
