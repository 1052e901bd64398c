use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use ccbp_core::experiments::{run_sweep, write_csv_file, SweepKind, SweepSettings};
use ccbp_core::image::{corrupt, read_image, restore, write_image, RestoreParams};
use ccbp_core::model::{spin_glass_model, CouplingDistribution, SpinGlassInstance};
use ccbp_core::model_file::{parse_model, serialize_model};
use ccbp_core::operators::{infer, Algorithm, Beliefs, OperatorConfig, Semiring};
use ccbp_core::oracle::{
    brute_marginals, brute_max_marginals, brute_min_marginals, weighted_min_marginal,
};
use ccbp_core::{Error, GraphicalModel};
use clap::{Parser, Subcommand, ValueEnum};

const EXIT_PARSE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "ccbp",
    version,
    about = "Loopy and convex combination belief propagation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run BP or CCBP on a model file and print beliefs.
    Infer(InferArgs),
    /// Run a spin-glass sweep and write it as CSV.
    Sweep(SweepArgs),
    /// Restore a noisy PGM/PPM image with min-sum CCBP.
    Restore(RestoreArgs),
    /// Add Gaussian noise to a PGM/PPM image.
    Corrupt(CorruptArgs),
    /// Write a random spin-glass model file.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Bp,
    Ccbp,
}

#[derive(Clone, Copy, ValueEnum)]
enum SemiringArg {
    Sum,
    Max,
    Minsum,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightsArg {
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Gamma,
    Sigma,
    Edges,
}

#[derive(Clone, Copy, ValueEnum)]
enum CouplingArg {
    Uniform,
    Normal,
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1)"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be non-negative"))
    }
}

fn probability(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

#[derive(clap::Args)]
struct InferArgs {
    /// Model file (`mrf 1` text format).
    model: PathBuf,
    #[arg(long, value_enum, default_value = "ccbp")]
    algorithm: AlgorithmArg,
    #[arg(long, value_enum, default_value = "sum")]
    semiring: SemiringArg,
    /// CCBP discount factor.
    #[arg(long, default_value = "0.9", value_parser = unit_interval)]
    gamma: f64,
    /// BP damping factor.
    #[arg(long, default_value = "0.9", value_parser = unit_interval)]
    alpha: f64,
    #[arg(long, default_value = "1e-2", value_parser = positive)]
    epsilon: f64,
    #[arg(long, default_value = "1000", value_parser = clap::value_parser!(u64).range(1..))]
    max_iter: u64,
    #[arg(long, value_enum, default_value = "uniform")]
    weights: WeightsArg,
    /// Compare against brute-force enumeration when the model is small enough.
    #[arg(long)]
    oracle: bool,
}

#[derive(clap::Args)]
struct SweepArgs {
    kind: SweepArg,
    #[arg(long, default_value = "0")]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Random instances per parameter value (sigma and edges sweeps).
    #[arg(long, default_value = "100", value_parser = clap::value_parser!(u64).range(1..))]
    instances: u64,
}

#[derive(clap::Args)]
struct RestoreArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long, default_value = "3", value_parser = positive)]
    lambda: f64,
    #[arg(long, default_value = "100", value_parser = non_negative)]
    tau: f64,
    #[arg(long, default_value = "0.99", value_parser = unit_interval)]
    gamma: f64,
    #[arg(long, default_value = "1e-2", value_parser = positive)]
    epsilon: f64,
    #[arg(long, default_value = "1000", value_parser = clap::value_parser!(u64).range(1..))]
    max_iter: u64,
}

#[derive(clap::Args)]
struct CorruptArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long, default_value = "50", value_parser = non_negative)]
    sigma: f64,
    #[arg(long, default_value = "0")]
    seed: u64,
}

#[derive(clap::Args)]
struct GenerateArgs {
    #[arg(long, default_value = "10")]
    nodes: usize,
    #[arg(long, default_value = "0.5", value_parser = probability)]
    edge_prob: f64,
    #[arg(long, value_enum, default_value = "normal")]
    coupling: CouplingArg,
    /// Half-width (uniform) or standard deviation (normal) of the couplings.
    #[arg(long, default_value = "1", value_parser = non_negative)]
    scale: f64,
    #[arg(long, default_value = "0")]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Failures carry their exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        anyhow::Error::from(error).into()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Infer(args) => cmd_infer(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Restore(args) => cmd_restore(&args),
        Command::Corrupt(args) => cmd_corrupt(&args),
        Command::Generate(args) => cmd_generate(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_model(path: &Path) -> Result<GraphicalModel, Failure> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_model(&text).map_err(|e| Failure {
        code: EXIT_PARSE,
        error: anyhow!(e).context(format!("parsing {}", path.display())),
    })
}

fn fmt_row(row: &[f64]) -> String {
    row.iter()
        .map(|v| format!("{v:.6}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn cmd_infer(args: &InferArgs) -> Result<(), Failure> {
    let model = load_model(&args.model)?;
    let (algorithm, alg_name) = match args.algorithm {
        AlgorithmArg::Bp => (Algorithm::Bp, "bp"),
        AlgorithmArg::Ccbp => (Algorithm::Ccbp, "ccbp"),
    };
    let (semiring, sr_name) = match args.semiring {
        SemiringArg::Sum => (Semiring::SumProduct, "sum"),
        SemiringArg::Max => (Semiring::MaxProduct, "max"),
        SemiringArg::Minsum => (Semiring::MinSum, "minsum"),
    };
    let WeightsArg::Uniform = args.weights;
    println!(
        "# ccbp infer {}: algorithm={alg_name} semiring={sr_name} gamma={} alpha={} epsilon={} max_iter={} weights=uniform",
        args.model.display(),
        args.gamma,
        args.alpha,
        args.epsilon,
        args.max_iter
    );
    println!(
        "# model: {} nodes, {} edges, {} labels",
        model.node_count(),
        model.graph().edge_count(),
        model.label_count()
    );
    let cfg = OperatorConfig::uniform(&model, semiring, algorithm)
        .with_gamma(args.gamma)?
        .with_alpha(args.alpha)?;
    let run = infer(&model, &cfg, args.epsilon, args.max_iter as usize)?;
    if !run.report.converged {
        eprintln!(
            "warning: no convergence after {} iterations (residual {:e})",
            run.report.iterations, run.report.final_residual
        );
    }
    println!("converged: {}", run.report.converged);
    println!("iterations: {}", run.report.iterations);
    println!("final_residual: {:e}", run.report.final_residual);
    println!("beliefs:");
    for j in 0..run.beliefs.node_count() {
        println!("  {j}: {}", fmt_row(run.beliefs.node(j)));
    }
    let labels = run.beliefs.decode();
    println!(
        "labels: {}",
        labels
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    );
    if args.oracle {
        report_oracle(&model, &cfg, &run.beliefs, &labels)?;
    }
    Ok(())
}

fn report_oracle(
    model: &GraphicalModel,
    cfg: &OperatorConfig,
    beliefs: &Beliefs,
    labels: &[usize],
) -> Result<(), Failure> {
    let exact = match cfg.semiring() {
        Semiring::SumProduct => brute_marginals(model).map(|r| ("exact marginals", r.values)),
        Semiring::MaxProduct => {
            brute_max_marginals(model).map(|r| ("exact max-marginals", r.normalized()))
        }
        Semiring::MinSum if cfg.algorithm() == Algorithm::Ccbp && model.graph().is_tree() => (0
            ..model.node_count())
            .map(|j| weighted_min_marginal(model, cfg.weights(), cfg.gamma(), j))
            .collect::<Result<Vec<_>, _>>()
            .map(|rows| ("weighted min-marginals of E_j", rows)),
        Semiring::MinSum => brute_min_marginals(model).map(|r| ("exact min-marginals", r.values)),
    };
    let (what, mut rows) = match exact {
        Ok(found) => found,
        Err(e @ Error::BudgetExceeded { .. }) => {
            println!("oracle: skipped ({e})");
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    let mut mine = beliefs.to_rows();
    let minimize = cfg.semiring() == Semiring::MinSum;
    if minimize {
        // min-sum beliefs are defined up to a per-node constant
        for row in mine.iter_mut().chain(rows.iter_mut()) {
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            row.iter_mut().for_each(|v| *v -= mean);
        }
    }
    let mse = ccbp_core::experiments::mse(&mine, &rows)?;
    let best: Vec<usize> = rows
        .iter()
        .map(|row| {
            (0..row.len()).fold(0, |b, a| {
                let better = if minimize {
                    row[a] < row[b]
                } else {
                    row[a] > row[b]
                };
                if better {
                    a
                } else {
                    b
                }
            })
        })
        .collect();
    let agree = labels.iter().zip(&best).filter(|(a, b)| a == b).count();
    println!("oracle: {what}");
    for (j, row) in rows.iter().enumerate() {
        println!("  {j}: {}", fmt_row(row));
    }
    println!("oracle_mse: {mse:e}");
    println!("oracle_agreement: {agree}/{}", labels.len());
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let (kind, name) = match args.kind {
        SweepArg::Gamma => (SweepKind::Gamma, "gamma"),
        SweepArg::Sigma => (SweepKind::Sigma, "sigma"),
        SweepArg::Edges => (SweepKind::EdgeProb, "edges"),
    };
    let settings = SweepSettings {
        instances_per_point: args.instances as usize,
        ..SweepSettings::default()
    };
    println!(
        "# ccbp sweep {name}: seed={} instances={} nodes={} epsilon={} max_iter={} alpha={} gamma={}",
        args.seed,
        settings.instances_per_point,
        settings.nodes,
        settings.epsilon,
        settings.max_iter,
        settings.alpha,
        settings.gamma
    );
    let table = run_sweep(kind, args.seed, &settings)?;
    write_csv_file(&table, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    println!("wrote {} rows to {}", table.rows.len(), args.out.display());
    Ok(())
}

fn cmd_restore(args: &RestoreArgs) -> Result<(), Failure> {
    let params = RestoreParams {
        lambda: args.lambda,
        tau: args.tau,
        gamma: args.gamma,
        epsilon: args.epsilon,
        max_iter: args.max_iter as usize,
    };
    println!(
        "# ccbp restore {}: lambda={} tau={} gamma={} epsilon={} max_iter={}",
        args.input.display(),
        params.lambda,
        params.tau,
        params.gamma,
        params.epsilon,
        params.max_iter
    );
    let noisy =
        read_image(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let result = restore(&noisy, &params)?;
    for (c, ch) in result.channels.iter().enumerate() {
        if !ch.report.converged {
            eprintln!(
                "warning: channel {c} stopped after {} iterations (residual {:e})",
                ch.report.iterations, ch.report.final_residual
            );
        }
        println!(
            "channel {c}: iterations={} converged={} noisy_energy={} restored_energy={}",
            ch.report.iterations, ch.report.converged, ch.noisy_energy, ch.restored_energy
        );
    }
    write_image(&result.image, &args.output)
        .with_context(|| format!("writing {}", args.output.display()))?;
    Ok(())
}

fn cmd_corrupt(args: &CorruptArgs) -> Result<(), Failure> {
    println!(
        "# ccbp corrupt {}: sigma={} seed={}",
        args.input.display(),
        args.sigma,
        args.seed
    );
    let clean =
        read_image(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let noisy = corrupt(&clean, args.sigma, args.seed)?;
    write_image(&noisy, &args.output)
        .with_context(|| format!("writing {}", args.output.display()))?;
    Ok(())
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), Failure> {
    let coupling = match args.coupling {
        CouplingArg::Uniform => CouplingDistribution::Uniform {
            half_width: args.scale,
        },
        CouplingArg::Normal => CouplingDistribution::Normal {
            std_dev: args.scale,
        },
    };
    let inst = SpinGlassInstance::random(args.nodes, args.edge_prob, coupling, args.seed)?;
    let model = spin_glass_model(&inst)?;
    std::fs::write(&args.out, serialize_model(&model))
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "wrote {} nodes, {} edges to {}",
        model.node_count(),
        model.graph().edge_count(),
        args.out.display()
    );
    Ok(())
}
