//! Max-margin classifier training: solve the hard-margin QP, and when the
//! data turns out non-separable (infeasibility certificate), fall back to
//! the margin-relaxed formulation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde_json::json;

use isqp::gen::{self, SvmData};
use isqp::linalg::{self, Mat};
use isqp::{SolveOptions, SolveStatus};

use crate::status_exit_code;

#[derive(Args)]
pub struct SvmArgs {
    /// Training data CSV: one row per pattern, features first, label
    /// (-1 or +1) in the final column. No header row.
    pub data: PathBuf,
    /// Penalty on the shared misclassification slack of the relaxed
    /// formulation.
    #[arg(long)]
    pub tau: f64,
    /// Fail with the certificate instead of solving the relaxed problem.
    #[arg(long = "hard-only")]
    pub hard_only: bool,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long = "max-iter", default_value_t = 300)]
    pub max_iter: usize,
    /// Disable constraint reduction.
    #[arg(long = "no-cr")]
    pub no_cr: bool,
}

fn read_csv(path: &Path) -> Result<SvmData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let mut vals = Vec::with_capacity(record.len());
        for field in record.iter() {
            vals.push(
                field.parse::<f64>().with_context(|| {
                    format!("non-numeric field `{field}` in {}", path.display())
                })?,
            );
        }
        let label = vals.pop().context("CSV rows need at least two columns")?;
        labels.push(label);
        rows.push(vals);
    }
    if rows.is_empty() {
        bail!("no training patterns in {}", path.display());
    }
    Ok(SvmData::new(Mat::from_rows(&rows), labels)?)
}

fn training_accuracy(data: &SvmData, w: &[f64], beta: f64) -> f64 {
    let mut correct = 0usize;
    for i in 0..data.num_patterns() {
        let score = linalg::dot(data.patterns.row(i), w) - beta;
        if data.labels[i] * score > 0.0 {
            correct += 1;
        }
    }
    correct as f64 / data.num_patterns() as f64
}

pub fn run(args: &SvmArgs) -> Result<u8> {
    if !(args.tau > 0.0) {
        bail!("--tau must be positive, got {}", args.tau);
    }
    let data = read_csv(&args.data)?;
    let nb = data.num_features();
    let mut options = SolveOptions::default();
    options.tol = args.tol;
    options.max_iter = args.max_iter;
    options.constraint_reduction = !args.no_cr;

    let hard = gen::svm_problem(&data);
    let hard_report = isqp::solve(&hard, &vec![0.0; hard.n], &options)?;

    let (formulation, report, certificate_gain) = match hard_report.status {
        SolveStatus::Infeasible if !args.hard_only => {
            let gain = hard_report.certificate.as_ref().map(|c| c.gain);
            let relaxed = gen::svm_relaxed_problem(&data, args.tau)?;
            let relaxed_report = isqp::solve(&relaxed, &vec![0.0; relaxed.n], &options)?;
            ("relaxed", relaxed_report, gain)
        }
        _ => ("hard", hard_report, None),
    };

    let w = report.x[..nb].to_vec();
    let beta = report.x[nb];
    let nu = if formulation == "relaxed" {
        Some(report.x[nb + 1])
    } else {
        None
    };
    let wnorm = linalg::norm2(&w);
    let out = json!({
        "formulation": formulation,
        "status": report.status,
        "w": w,
        "beta": beta,
        "nu": nu,
        "margin": if wnorm > 0.0 { Some(2.0 / wnorm) } else { None },
        "training_accuracy": training_accuracy(&data, &report.x[..nb], beta),
        "objective": report.objective,
        "iterations": report.iterations,
        "err": report.err,
        "certificate_gain": certificate_gain,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(status_exit_code(report.status))
}
