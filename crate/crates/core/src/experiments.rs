//! Spin-glass experiment harness.
//!
//! Every random instance draws from its own ChaCha8 stream whose seed is
//! derived from `(base_seed, parameter index, instance index)`, so a sweep is
//! reproducible and independent of evaluation order.

use std::collections::VecDeque;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::messages::init_messages;
use crate::model::{complete_graph, spin_glass_model, CouplingDistribution, SpinGlassInstance};
use crate::operators::{
    beliefs_minsum, beliefs_prob_normalized, infer, run_fixed_point_observed, step, Algorithm,
    Beliefs, OperatorConfig, Semiring,
};
use crate::oracle::{brute_marginals, brute_max_marginals, brute_min_marginals};

/// Mixes a base seed with two indices (SplitMix64 finalizer on each step).
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(base) ^ a) ^ b.rotate_left(32))
}

/// `(1/n) sum_i sum_x |b_i(x) - p_i(x)|^2`.
pub fn mse(beliefs: &[Vec<f64>], exact: &[Vec<f64>]) -> Result<f64> {
    if beliefs.len() != exact.len() || beliefs.iter().zip(exact).any(|(b, p)| b.len() != p.len()) {
        return Err(Error::ShapeMismatch(
            "belief and exact tables differ in shape".into(),
        ));
    }
    if beliefs.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = beliefs
        .iter()
        .zip(exact)
        .flat_map(|(b, p)| b.iter().zip(p))
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(total / beliefs.len() as f64)
}

/// Settings shared by the sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    pub nodes: usize,
    pub instances_per_point: usize,
    pub epsilon: f64,
    pub max_iter: usize,
    /// BP damping.
    pub alpha: f64,
    /// CCBP discount.
    pub gamma: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            nodes: 10,
            instances_per_point: 100,
            epsilon: 1e-2,
            max_iter: 1000,
            alpha: 0.9,
            gamma: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepKind {
    /// Coupling scale `sigma` in `0, 0.5, ..., 5`.
    Sigma,
    /// Edge probability `p` in `0, 0.1, ..., 1`.
    EdgeProb,
    /// CCBP discount `gamma` in `0, 0.1, ..., 0.9`.
    Gamma,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub parameter: f64,
    pub algorithm: Algorithm,
    /// Fraction of instances that converged.
    pub convergence_rate: f64,
    /// Mean iteration count over converged instances; NaN when none converged.
    pub mean_iterations: f64,
    /// Mean MSE over all instances, measured at the final iterate.
    pub mean_mse: f64,
    pub instance_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub kind: SweepKind,
    pub settings: SweepSettings,
    pub base_seed: u64,
    /// Sorted by algorithm, then parameter.
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn rows_for(&self, algorithm: Algorithm) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.algorithm == algorithm)
    }
}

#[derive(Default)]
struct Tally {
    converged: usize,
    iterations: usize,
    mse: f64,
    count: usize,
}

impl Tally {
    fn add(&mut self, converged: bool, iterations: usize, mse: f64) {
        self.count += 1;
        self.mse += mse;
        if converged {
            self.converged += 1;
            self.iterations += iterations;
        }
    }

    fn row(&self, parameter: f64, algorithm: Algorithm, seed: u64) -> SweepRow {
        SweepRow {
            parameter,
            algorithm,
            convergence_rate: self.converged as f64 / self.count as f64,
            mean_iterations: if self.converged == 0 {
                f64::NAN
            } else {
                self.iterations as f64 / self.converged as f64
            },
            mean_mse: self.mse / self.count as f64,
            instance_count: self.count,
            seed,
        }
    }
}

fn sort_rows(rows: &mut [SweepRow]) {
    rows.sort_by(|a, b| {
        let key = |r: &SweepRow| matches!(r.algorithm, Algorithm::Ccbp);
        key(a)
            .cmp(&key(b))
            .then(a.parameter.total_cmp(&b.parameter))
    });
}

/// Runs damped sum-product BP and sum-product CCBP on random spin glasses
/// and scores normalized beliefs against exact marginals.
fn marginal_sweep(
    kind: SweepKind,
    base_seed: u64,
    settings: &SweepSettings,
    points: &[(f64, f64, CouplingDistribution)],
) -> Result<SweepTable> {
    let mut rows = Vec::with_capacity(2 * points.len());
    for (p_idx, &(parameter, edge_prob, coupling)) in points.iter().enumerate() {
        let mut bp = Tally::default();
        let mut ccbp = Tally::default();
        for t in 0..settings.instances_per_point {
            let seed = derive_seed(base_seed, p_idx as u64, t as u64);
            let inst = SpinGlassInstance::random(settings.nodes, edge_prob, coupling, seed)?;
            let model = spin_glass_model(&inst)?;
            let exact = brute_marginals(&model)?.values;
            for (algorithm, tally) in [(Algorithm::Bp, &mut bp), (Algorithm::Ccbp, &mut ccbp)] {
                let cfg = OperatorConfig::uniform(&model, Semiring::SumProduct, algorithm)
                    .with_alpha(settings.alpha)?
                    .with_gamma(settings.gamma)?;
                let res = infer(&model, &cfg, settings.epsilon, settings.max_iter)?;
                let err = mse(&res.beliefs.to_rows(), &exact)?;
                tally.add(res.report.converged, res.report.iterations, err);
            }
        }
        rows.push(bp.row(parameter, Algorithm::Bp, base_seed));
        rows.push(ccbp.row(parameter, Algorithm::Ccbp, base_seed));
    }
    sort_rows(&mut rows);
    Ok(SweepTable {
        kind,
        settings: *settings,
        base_seed,
        rows,
    })
}

/// Coupling sweep: `lambda ~ Unif(-sigma, sigma)` for `sigma = 0, 0.5, ..., 5`
/// on `G(n, 0.5)`.
pub fn sweep_sigma(base_seed: u64, settings: &SweepSettings) -> Result<SweepTable> {
    let points: Vec<_> = (0..=10)
        .map(|k| {
            let sigma = k as f64 * 0.5;
            (
                sigma,
                0.5,
                CouplingDistribution::Uniform { half_width: sigma },
            )
        })
        .collect();
    marginal_sweep(SweepKind::Sigma, base_seed, settings, &points)
}

/// Connectivity sweep: `p = 0, 0.1, ..., 1` with `lambda ~ Unif(-5, 5)`.
pub fn sweep_edge_prob(base_seed: u64, settings: &SweepSettings) -> Result<SweepTable> {
    let points: Vec<_> = (0..=10)
        .map(|k| {
            let p = k as f64 / 10.0;
            (p, p, CouplingDistribution::Uniform { half_width: 5.0 })
        })
        .collect();
    marginal_sweep(SweepKind::EdgeProb, base_seed, settings, &points)
}

/// Discount sweep on one instance (`G(n, 0.5)`, standard normal couplings):
/// max-product CCBP for `gamma = 0, 0.1, ..., 0.9`, scored against
/// normalized exact max-marginals.
pub fn sweep_gamma(base_seed: u64, settings: &SweepSettings) -> Result<SweepTable> {
    let seed = derive_seed(base_seed, 0, 0);
    let inst = SpinGlassInstance::random(
        settings.nodes,
        0.5,
        CouplingDistribution::Normal { std_dev: 1.0 },
        seed,
    )?;
    let model = spin_glass_model(&inst)?;
    let exact = brute_max_marginals(&model)?.normalized();
    let mut rows = Vec::with_capacity(10);
    for k in 0..10 {
        let gamma = k as f64 / 10.0;
        let cfg = OperatorConfig::uniform(&model, Semiring::MaxProduct, Algorithm::Ccbp)
            .with_gamma(gamma)?;
        let res = infer(&model, &cfg, settings.epsilon, settings.max_iter)?;
        let mut tally = Tally::default();
        tally.add(
            res.report.converged,
            res.report.iterations,
            mse(&res.beliefs.to_rows(), &exact)?,
        );
        rows.push(tally.row(gamma, Algorithm::Ccbp, base_seed));
    }
    Ok(SweepTable {
        kind: SweepKind::Gamma,
        settings: *settings,
        base_seed,
        rows,
    })
}

/// Dispatches on `kind`.
pub fn run_sweep(kind: SweepKind, base_seed: u64, settings: &SweepSettings) -> Result<SweepTable> {
    match kind {
        SweepKind::Sigma => sweep_sigma(base_seed, settings),
        SweepKind::EdgeProb => sweep_edge_prob(base_seed, settings),
        SweepKind::Gamma => sweep_gamma(base_seed, settings),
    }
}

/// One seed of the complete-graph oscillation study.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillationRun {
    pub seed: u64,
    pub bp_converged: bool,
    pub bp_iterations: usize,
    /// Per node, `(min, max)` of the mean-zero BP belief at label 1 over the
    /// last 100 iterations.
    pub bp_range: Vec<(f64, f64)>,
    pub ccbp_converged: bool,
    pub ccbp_iterations: usize,
    /// Mean-zero CCBP belief at label 1, per node.
    pub ccbp_centered: Vec<f64>,
    /// Mean-zero exact min-marginal at label 1, per node.
    pub min_marginal_centered: Vec<f64>,
    /// Nodes where the decoded CCBP label equals the min-marginal argmin.
    pub agreement: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillationReport {
    pub nodes: usize,
    pub runs: Vec<OscillationRun>,
}

/// Min-sum damped BP against min-sum CCBP on `K_12` spin glasses with
/// standard normal couplings, both started from zero messages.
pub fn oscillation_study(
    base_seed: u64,
    seed_count: usize,
    settings: &SweepSettings,
) -> Result<OscillationReport> {
    const NODES: usize = 12;
    const WINDOW: usize = 100;
    let mut runs = Vec::with_capacity(seed_count);
    for s in 0..seed_count {
        let seed = derive_seed(base_seed, 0, s as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = SpinGlassInstance::sample_on(
            complete_graph(NODES)?,
            CouplingDistribution::Normal { std_dev: 1.0 },
            seed,
            &mut rng,
        );
        let model = spin_glass_model(&inst)?;
        let exact = brute_min_marginals(&model)?;
        let exact_centered = exact.centered();

        let bp_cfg = OperatorConfig::uniform(&model, Semiring::MinSum, Algorithm::Bp)
            .with_alpha(settings.alpha)?;
        let mut window: VecDeque<Beliefs> = VecDeque::with_capacity(WINDOW);
        let (_, bp_report) = run_fixed_point_observed(
            |mu| step(&model, &bp_cfg, mu),
            init_messages(&model, bp_cfg.domain()),
            settings.epsilon,
            settings.max_iter,
            |_, mu| {
                if window.len() == WINDOW {
                    window.pop_front();
                }
                window.push_back(
                    beliefs_minsum(&model, mu)
                        .expect("shape checked")
                        .centered(),
                );
            },
        )?;
        let bp_range = (0..NODES)
            .map(|j| {
                window
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| {
                        (lo.min(b.node(j)[1]), hi.max(b.node(j)[1]))
                    })
            })
            .collect();

        let ccbp_cfg = OperatorConfig::uniform(&model, Semiring::MinSum, Algorithm::Ccbp)
            .with_gamma(settings.gamma)?;
        let ccbp = infer(&model, &ccbp_cfg, settings.epsilon, settings.max_iter)?;
        let ccbp_centered = ccbp.beliefs.centered();
        let decoded = ccbp.beliefs.decode();
        let agreement = decoded
            .iter()
            .zip(&exact.values)
            .filter(|(&label, row)| label == argmin(row))
            .count();

        runs.push(OscillationRun {
            seed,
            bp_converged: bp_report.converged,
            bp_iterations: bp_report.iterations,
            bp_range,
            ccbp_converged: ccbp.report.converged,
            ccbp_iterations: ccbp.report.iterations,
            ccbp_centered: (0..NODES).map(|j| ccbp_centered.node(j)[1]).collect(),
            min_marginal_centered: exact_centered.iter().map(|row| row[1]).collect(),
            agreement,
        });
    }
    Ok(OscillationReport { nodes: NODES, runs })
}

fn argmin(row: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in row.iter().enumerate() {
        if v < row[best] {
            best = a;
        }
    }
    best
}

/// Normalized probability-domain beliefs as one row per node.
pub fn normalized_rows(
    model: &crate::model::GraphicalModel,
    mu: &crate::messages::MessageVector,
) -> Result<Vec<Vec<f64>>> {
    Ok(beliefs_prob_normalized(model, mu)?.to_rows())
}

pub const CSV_HEADER: [&str; 7] = [
    "parameter",
    "algorithm",
    "convergence_rate",
    "mean_iterations",
    "mean_mse",
    "instances",
    "seed",
];

/// Six significant digits, plain decimal notation where it fits.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v == 0.0 {
        return "0".into();
    }
    let exponent = v.abs().log10().floor() as i32;
    if (-4..6).contains(&exponent) {
        let decimals = (5 - exponent).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.5e}")
    }
}

fn algorithm_name(a: Algorithm) -> &'static str {
    match a {
        Algorithm::Bp => "bp",
        Algorithm::Ccbp => "ccbp",
    }
}

/// Writes the table as CSV (header plus one line per row).
pub fn write_csv<W: std::io::Write>(table: &SweepTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &table.rows {
        w.write_record([
            format_number(r.parameter),
            algorithm_name(r.algorithm).to_string(),
            format_number(r.convergence_rate),
            format_number(r.mean_iterations),
            format_number(r.mean_mse),
            r.instance_count.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(table: &SweepTable, path: impl AsRef<Path>) -> Result<()> {
    write_csv(table, std::fs::File::create(path)?)
}

/// Parses rows written by [`write_csv`].
pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header {headers:?}"),
        });
    }
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = idx + 2;
        let bad = |what: &str| Error::Parse {
            line,
            message: format!("bad {what}"),
        };
        let num =
            |k: usize, what: &str| -> Result<f64> { record[k].parse().map_err(|_| bad(what)) };
        rows.push(SweepRow {
            parameter: num(0, "parameter")?,
            algorithm: match &record[1] {
                "bp" => Algorithm::Bp,
                "ccbp" => Algorithm::Ccbp,
                _ => return Err(bad("algorithm")),
            },
            convergence_rate: num(2, "convergence_rate")?,
            mean_iterations: num(3, "mean_iterations")?,
            mean_mse: num(4, "mean_mse")?,
            instance_count: record[5].parse().map_err(|_| bad("instances"))?,
            seed: record[6].parse().map_err(|_| bad("seed"))?,
        });
    }
    Ok(rows)
}
