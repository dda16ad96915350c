//! `isqp` command line: solve problem files, generate random instances, run
//! benchmark sweeps, and train SVM classifiers.
//!
//! Exit codes for `solve` (and `svm`): 0 optimal, 2 infeasible (certificate
//! in the report), 3 iteration limit, 1 usage or I/O error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use isqp::gen::{self, GenSpec, HessianKind, Prng};
use isqp::{CqpProblem, ProblemJson, SolveOptions, SolveReport, SolveStatus};

mod bench;
mod svm;

#[derive(Parser)]
#[command(name = "isqp", version, about = "Infeasible-start convex QP solver")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a problem from a JSON file and print the report as JSON.
    Solve(SolveArgs),
    /// Generate a random problem instance file.
    Gen(GenArgs),
    /// Benchmark sweep over problem sizes; emits a CSV table.
    Bench(bench::BenchArgs),
    /// Train a max-margin classifier from labeled CSV data.
    Svm(svm::SvmArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Problem JSON file.
    problem: PathBuf,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long = "tol-infeas", default_value_t = 1e-6)]
    tol_infeas: f64,
    #[arg(long = "max-iter", default_value_t = 300)]
    max_iter: usize,
    #[arg(long, default_value_t = 1.0)]
    phi0: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma1: f64,
    #[arg(long, default_value_t = 10.0)]
    sigma2: f64,
    /// Disable constraint reduction.
    #[arg(long = "no-cr")]
    no_cr: bool,
    /// Disable row normalization.
    #[arg(long = "no-normalize")]
    no_normalize: bool,
    /// Starting point: `zeros`, `random:SEED`, or a JSON file with an array.
    #[arg(long, default_value = "zeros")]
    x0: String,
    /// Write the per-iteration trace to this CSV file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    /// Diagonal positive definite Hessian with uniform entries.
    Sc,
    /// Zero Hessian (linear objective).
    Lp,
}

impl From<KindArg> for HessianKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Sc => HessianKind::StronglyConvex,
            KindArg::Lp => HessianKind::Linear,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    p: usize,
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Use the guaranteed-infeasible construction (needs m >= 2).
    #[arg(long)]
    infeasible: bool,
    #[arg(long)]
    seed: u64,
    /// Output problem file; feasible instances also get a `<out>.xfeas.json`
    /// sidecar with the strictly feasible witness.
    #[arg(short, long)]
    out: PathBuf,
}

fn load_problem(path: &Path) -> Result<CqpProblem> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read problem file {}", path.display()))?;
    let json: ProblemJson = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse problem JSON in {}", path.display()))?;
    Ok(CqpProblem::try_from(json)?)
}

fn parse_x0(spec: &str, n: usize) -> Result<Vec<f64>> {
    if spec == "zeros" {
        return Ok(vec![0.0; n]);
    }
    if let Some(seed) = spec.strip_prefix("random:") {
        let seed: u64 = seed.parse().context("invalid seed in --x0 random:SEED")?;
        let mut rng = Prng::new(seed);
        return Ok((0..n).map(|_| rng.normal()).collect());
    }
    let text = fs::read_to_string(spec)
        .with_context(|| format!("cannot read starting-point file {spec}"))?;
    let x0: Vec<f64> = serde_json::from_str(&text)
        .with_context(|| format!("starting-point file {spec} must hold a JSON array"))?;
    if x0.len() != n {
        bail!("starting point has length {}, expected n = {n}", x0.len());
    }
    Ok(x0)
}

fn write_trace_csv(path: &Path, report: &SolveReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot write trace CSV {}", path.display()))?;
    w.write_record([
        "iter",
        "phi",
        "mu",
        "err",
        "q_size",
        "obj",
        "penalty_obj",
        "z_inf_norm",
    ])?;
    for r in &report.trace {
        w.write_record(&[
            r.iter.to_string(),
            r.phi.to_string(),
            r.mu.to_string(),
            r.err.to_string(),
            r.q_size.to_string(),
            r.obj.to_string(),
            r.penalty_obj.to_string(),
            r.z_inf_norm.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn status_exit_code(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Optimal => 0,
        SolveStatus::Infeasible => 2,
        SolveStatus::IterationLimit => 3,
    }
}

fn cmd_solve(args: &SolveArgs) -> Result<u8> {
    let problem = load_problem(&args.problem)?;
    let x0 = parse_x0(&args.x0, problem.n)?;
    let options = SolveOptions {
        tol: args.tol,
        tol_infeas: args.tol_infeas,
        max_iter: args.max_iter,
        phi0: args.phi0,
        sigma1: args.sigma1,
        sigma2: args.sigma2,
        constraint_reduction: !args.no_cr,
        normalize: !args.no_normalize,
    };
    let report = isqp::solve(&problem, &x0, &options)?;
    if let Some(path) = &args.trace {
        write_trace_csv(path, &report)?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(status_exit_code(report.status))
}

fn cmd_gen(args: &GenArgs) -> Result<u8> {
    let spec = GenSpec {
        m: args.m,
        n: args.n,
        p: args.p,
        kind: args.kind.into(),
        seed: args.seed,
    };
    let (problem, witness) = if args.infeasible {
        (gen::random_infeasible(&spec)?, None)
    } else {
        let (problem, xfeas) = gen::random_feasible(&spec);
        (problem, Some(xfeas))
    };
    // shape errors surface here rather than at solve time
    let (problem, _warnings) = problem.validate()?;
    let json = ProblemJson::from(&problem);
    fs::write(&args.out, serde_json::to_string(&json)?)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    if let Some(xfeas) = witness {
        let sidecar = sidecar_path(&args.out);
        fs::write(&sidecar, serde_json::to_string(&xfeas)?)
            .with_context(|| format!("cannot write {}", sidecar.display()))?;
    }
    Ok(0)
}

/// `problem.json` -> `problem.xfeas.json`
fn sidecar_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.xfeas.json"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> Result<u8> {
        match &cli.cmd {
            Cmd::Solve(args) => cmd_solve(args),
            Cmd::Gen(args) => cmd_gen(args),
            Cmd::Bench(args) => bench::run(args),
            Cmd::Svm(args) => svm::run(args),
        }
    };
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
