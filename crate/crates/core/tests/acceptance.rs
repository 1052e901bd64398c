//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails or overruns its time limit.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::checks::{self, Outcome};

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    run: Box<dyn Fn() -> Outcome>,
}

fn criterion(
    id: u32,
    name: &'static str,
    limit_secs: Option<u64>,
    run: impl Fn() -> Outcome + 'static,
) -> Criterion {
    Criterion {
        id,
        name,
        limit: limit_secs.map(Duration::from_secs),
        run: Box::new(run),
    }
}

fn main() -> ExitCode {
    // libtest flags such as --list or a name filter are ignored; the suite
    // always runs in full.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria = vec![
        criterion(1, "contraction suite", Some(10), || {
            checks::contraction(200, 1)
        }),
        criterion(2, "geometric convergence", Some(30), || {
            checks::geometric_convergence(50, 2)
        }),
        criterion(3, "uniqueness / init independence", Some(30), || {
            checks::uniqueness(50, 3)
        }),
        criterion(4, "tree exactness of BP", Some(30), || {
            checks::tree_bp_exactness(&checks::tree_corpus(100, 4))
        }),
        criterion(5, "tree characterization of CCBP", Some(60), || {
            checks::tree_characterization(&checks::tree_corpus(100, 4), 5)
        }),
        criterion(6, "spin-glass sweeps", Some(300), || {
            let (sigma, edges) = checks::sweep_tables(20, 6);
            checks::spin_glass_sweeps(&sigma, &edges)
        }),
        criterion(7, "gamma sweep trends", Some(60), || {
            checks::gamma_trends(&[70, 71, 72, 73, 74])
        }),
        criterion(8, "oscillation study", Some(120), || {
            checks::oscillation(20, 8)
        }),
        criterion(9, "image restoration", Some(120), || {
            checks::image_restoration(64, 1000, 9)
        }),
        criterion(10, "determinism", None, || checks::determinism(20, 10, 24)),
    ];

    let mut failures = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => {
                Err(format!("took {elapsed:.1?}, limit {limit:?}"))
            }
            (o, _) => o,
        };
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        if outcome.is_err() {
            failures += 1;
        }
        println!("{status} {:>2} {} [{elapsed:.1?}]: {detail}", c.id, c.name);
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        criteria.len() - failures
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
