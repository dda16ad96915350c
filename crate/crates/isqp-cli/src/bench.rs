//! Benchmark sweeps: batches of random instances per size cell, solved in
//! parallel, aggregated into a plot-ready CSV table.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;

use isqp::gen::{self, GenSpec, Prng};
use isqp::{SolveOptions, SolveStatus};

use crate::KindArg;

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 2000)]
    pub m: usize,
    /// Comma-separated list of variable counts.
    #[arg(long, default_value = "10,20,50")]
    pub n: String,
    /// Equality count per cell: `half` (= n/2) or `0`.
    #[arg(long, default_value = "0")]
    pub p: String,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sweep over the guaranteed-infeasible construction instead.
    #[arg(long)]
    pub infeasible: bool,
    /// Disable constraint reduction.
    #[arg(long = "no-cr")]
    pub no_cr: bool,
    #[arg(long = "max-iter", default_value_t = 300)]
    pub max_iter: usize,
    /// Output CSV path (stdout when absent).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

struct RunStats {
    iterations: usize,
    time_ms: f64,
    phi_increases: usize,
    failed: bool,
    false_positive: bool,
}

fn instance_seed(base: u64, n: usize, rep: usize) -> u64 {
    base.wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add((n as u64) << 20)
        .wrapping_add(rep as u64)
}

pub fn run(args: &BenchArgs) -> Result<u8> {
    if args.reps == 0 {
        bail!("--reps must be at least 1");
    }
    if args.infeasible && args.m < 2 {
        bail!("infeasible sweeps need m >= 2");
    }
    let ns: Vec<usize> = args
        .n
        .split(',')
        .map(|t| t.trim().parse::<usize>().context("invalid --n list"))
        .collect::<Result<_>>()?;
    if ns.is_empty() || ns.iter().any(|&n| n == 0) {
        bail!("--n needs positive sizes");
    }
    let half = match args.p.as_str() {
        "half" => true,
        "0" => false,
        other => bail!("--p must be `half` or `0`, got `{other}`"),
    };
    let kind_name = match args.kind {
        KindArg::Sc => "sc",
        KindArg::Lp => "lp",
    };

    let mut options = SolveOptions::default();
    options.constraint_reduction = !args.no_cr;
    options.max_iter = args.max_iter;

    let mut table = String::from(
        "kind,m,n,p,reps,mean_iters,mean_time_ms,failures,mean_phi_increases,false_positive_count\n",
    );
    for &n in &ns {
        let p = if half { n / 2 } else { 0 };
        let stats: Vec<RunStats> = (0..args.reps)
            .into_par_iter()
            .map(|rep| {
                let seed = instance_seed(args.seed, n, rep);
                let spec = GenSpec {
                    m: args.m,
                    n,
                    p,
                    kind: args.kind.into(),
                    seed,
                };
                let (problem, x0) = if args.infeasible {
                    let problem = gen::random_infeasible(&spec).expect("m >= 2 checked above");
                    let mut rng = Prng::new(seed ^ 0x5eed);
                    let x0 = (0..n).map(|_| rng.normal()).collect::<Vec<_>>();
                    (problem, x0)
                } else {
                    let (problem, _xfeas) = gen::random_feasible(&spec);
                    let (x0, _) = gen::infeasible_start_point(&problem, seed ^ 0x5eed);
                    (problem, x0)
                };
                match isqp::solve(&problem, &x0, &options) {
                    Ok(report) => {
                        let failed = if args.infeasible {
                            report.status != SolveStatus::Infeasible
                        } else {
                            report.status != SolveStatus::Optimal
                        };
                        RunStats {
                            iterations: report.iterations,
                            time_ms: report.time_ms,
                            phi_increases: report.phi_increases,
                            failed,
                            false_positive: !args.infeasible
                                && report.status == SolveStatus::Infeasible,
                        }
                    }
                    Err(_) => RunStats {
                        iterations: args.max_iter,
                        time_ms: 0.0,
                        phi_increases: 0,
                        failed: true,
                        false_positive: false,
                    },
                }
            })
            .collect();

        let reps = args.reps as f64;
        let mean_iters = stats.iter().map(|s| s.iterations as f64).sum::<f64>() / reps;
        let mean_time = stats.iter().map(|s| s.time_ms).sum::<f64>() / reps;
        let failures = stats.iter().filter(|s| s.failed).count();
        let mean_phi = stats.iter().map(|s| s.phi_increases as f64).sum::<f64>() / reps;
        let false_positives = stats.iter().filter(|s| s.false_positive).count();
        table.push_str(&format!(
            "{kind_name},{},{n},{p},{},{mean_iters},{mean_time},{failures},{mean_phi},{false_positives}\n",
            args.m, args.reps,
        ));
    }

    match &args.out {
        Some(path) => fs::write(path, table)
            .with_context(|| format!("cannot write CSV to {}", path.display()))?,
        None => {
            std::io::stdout().write_all(table.as_bytes())?;
        }
    }
    Ok(0)
}
