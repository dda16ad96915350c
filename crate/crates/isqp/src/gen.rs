//! Seeded problem generation: random feasible/infeasible instances,
//! infeasible starting points, and SVM training QPs.
//!
//! All randomness flows through [`Prng`], a ChaCha stream with Box-Muller
//! normal variates, so identical seeds produce bit-identical problems on
//! every platform.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::Error;
use crate::linalg::Mat;
use crate::problem::{CqpProblem, Hessian};

/// Deterministic, portable random stream.
pub struct Prng {
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Prng {
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Integer in [0, bound).
    pub fn below(&mut self, bound: usize) -> usize {
        ((self.uniform() * bound as f64) as usize).min(bound - 1)
    }

    /// Standard normal via Box-Muller (pairs cached).
    pub fn normal(&mut self) -> f64 {
        if let Some(v) = self.spare_normal.take() {
            return v;
        }
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    fn normal_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.normal()).collect()
    }

    fn normal_mat(&mut self, rows: usize, cols: usize) -> Mat {
        let data = self.normal_vec(rows * cols);
        Mat::from_row_major(rows, cols, data)
    }
}

/// Objective class of a generated instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HessianKind {
    /// Diagonal H with entries uniform in (0, 1).
    StronglyConvex,
    /// H = 0 (linear objective).
    Linear,
}

/// Size, class, and seed of a generated instance.
#[derive(Clone, Copy, Debug)]
pub struct GenSpec {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub kind: HessianKind,
    pub seed: u64,
}

impl GenSpec {
    fn hessian(&self, rng: &mut Prng) -> Hessian {
        match self.kind {
            HessianKind::StronglyConvex => {
                Hessian::Diag((0..self.n).map(|_| rng.uniform()).collect())
            }
            HessianKind::Linear => Hessian::Diag(vec![0.0; self.n]),
        }
    }
}

/// Strictly feasible instance: data is standard normal, then `b := A x_feas
/// - s_feas` with `s_feas` uniform in (1, 2) and `d := C x_feas`, so
/// `x_feas` is strictly feasible by construction. Returns it as the witness.
pub fn random_feasible(spec: &GenSpec) -> (CqpProblem, Vec<f64>) {
    let mut rng = Prng::new(spec.seed);
    let hess = spec.hessian(&mut rng);
    let c = rng.normal_vec(spec.n);
    let a = rng.normal_mat(spec.m, spec.n);
    let ceq = rng.normal_mat(spec.p, spec.n);
    let x_feas = rng.normal_vec(spec.n);
    let s_feas: Vec<f64> = (0..spec.m).map(|_| rng.uniform_in(1.0, 2.0)).collect();
    let ax = a.matvec(&x_feas);
    let b: Vec<f64> = (0..spec.m).map(|i| ax[i] - s_feas[i]).collect();
    let deq = ceq.matvec(&x_feas);
    let problem = CqpProblem {
        n: spec.n,
        m: spec.m,
        p: spec.p,
        hess,
        c,
        a,
        b,
        ceq,
        deq,
    };
    (problem, x_feas)
}

/// Certifiably infeasible instance: all data standard normal, then the last
/// inequality row is replaced by the negation of a random earlier row with a
/// right-hand side pushed past it (`-a_i'x >= -b_i + delta`, `delta` uniform
/// in (0, 1)), so rows `i` and `m` together imply `0 >= delta > 0`.
pub fn random_infeasible(spec: &GenSpec) -> Result<CqpProblem, Error> {
    if spec.m < 2 {
        return Err(Error::InvalidGenSpec(format!(
            "infeasible construction needs m >= 2, got m = {}",
            spec.m
        )));
    }
    let mut rng = Prng::new(spec.seed);
    let hess = spec.hessian(&mut rng);
    let c = rng.normal_vec(spec.n);
    let mut a = rng.normal_mat(spec.m, spec.n);
    let mut b = rng.normal_vec(spec.m);
    let ceq = rng.normal_mat(spec.p, spec.n);
    let deq = rng.normal_vec(spec.p);

    let i = rng.below(spec.m - 1);
    let delta = rng.uniform();
    let negated: Vec<f64> = a.row(i).iter().map(|v| -v).collect();
    a.row_mut(spec.m - 1).copy_from_slice(&negated);
    b[spec.m - 1] = -b[i] + delta;

    Ok(CqpProblem {
        n: spec.n,
        m: spec.m,
        p: spec.p,
        hess,
        c,
        a,
        b,
        ceq,
        deq,
    })
}

/// Samples standard-normal points until one violates a constraint of the
/// problem. Returns the point and whether it is actually infeasible; after
/// 100 failed draws the last sample is returned with `false` (a feasible
/// start is still a legal input to the solver).
pub fn infeasible_start_point(problem: &CqpProblem, seed: u64) -> (Vec<f64>, bool) {
    let mut rng = Prng::new(seed);
    let mut x0 = Vec::new();
    for _ in 0..100 {
        x0 = rng.normal_vec(problem.n);
        let ax = problem.a.matvec(&x0);
        let violated_ineq = (0..problem.m).any(|i| ax[i] < problem.b[i]);
        let cx = problem.ceq.matvec(&x0);
        let violated_eq = (0..problem.p).any(|j| (cx[j] - problem.deq[j]).abs() > 0.0);
        if violated_ineq || violated_eq {
            return (x0, true);
        }
    }
    (x0, false)
}

/// Labeled training data: one pattern per row, labels in {-1, +1}.
#[derive(Clone, Debug)]
pub struct SvmData {
    pub patterns: Mat,
    pub labels: Vec<f64>,
}

impl SvmData {
    pub fn new(patterns: Mat, labels: Vec<f64>) -> Result<Self, Error> {
        if patterns.nrows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} patterns but {} labels",
                patterns.nrows(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l != 1.0 && l != -1.0) {
            return Err(Error::InvalidInput("labels must be -1 or +1".into()));
        }
        Ok(SvmData { patterns, labels })
    }

    pub fn num_patterns(&self) -> usize {
        self.patterns.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.patterns.ncols()
    }
}

/// Hard-margin separating-hyperplane QP over `x = [w; beta]`:
/// minimize `1/2 ||w||^2` subject to `l_i (p_i'w - beta) >= 1`.
pub fn svm_problem(data: &SvmData) -> CqpProblem {
    let mb = data.num_patterns();
    let nb = data.num_features();
    let n = nb + 1;
    let mut hd = vec![1.0; n];
    hd[nb] = 0.0;
    let mut a = Mat::zeros(mb, n);
    for i in 0..mb {
        let l = data.labels[i];
        let row = a.row_mut(i);
        for (j, v) in data.patterns.row(i).iter().enumerate() {
            row[j] = l * v;
        }
        row[nb] = -l;
    }
    CqpProblem::inequality_form(Hessian::Diag(hd), vec![0.0; n], a, vec![1.0; mb])
}

/// Margin-relaxed variant over `x = [w; beta; nu]`: a shared slack `nu >= 0`
/// allows misclassification at price `tau` in the objective.
pub fn svm_relaxed_problem(data: &SvmData, tau: f64) -> Result<CqpProblem, Error> {
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!(
            "tau must be positive, got {tau}"
        )));
    }
    let mb = data.num_patterns();
    let nb = data.num_features();
    let n = nb + 2;
    let mut hd = vec![1.0; n];
    hd[nb] = 0.0;
    hd[nb + 1] = 0.0;
    let mut c = vec![0.0; n];
    c[nb + 1] = tau;
    let mut a = Mat::zeros(mb + 1, n);
    for i in 0..mb {
        let l = data.labels[i];
        let row = a.row_mut(i);
        for (j, v) in data.patterns.row(i).iter().enumerate() {
            row[j] = l * v;
        }
        row[nb] = -l;
        row[nb + 1] = 1.0;
    }
    a.set(mb, nb + 1, 1.0); // nu >= 0
    let mut b = vec![1.0; mb + 1];
    b[mb] = 0.0;
    Ok(CqpProblem::inequality_form(Hessian::Diag(hd), c, a, b))
}

/// Two seeded Gaussian clouds with means `+-offset/sqrt(nb) * 1`, labeled
/// +1/-1; `mb` patterns split evenly. Handy synthetic SVM workload.
pub fn gaussian_blobs(mb: usize, nb: usize, offset: f64, seed: u64) -> SvmData {
    let mut rng = Prng::new(seed);
    let shift = offset / (nb as f64).sqrt();
    let mut patterns = Mat::zeros(mb, nb);
    let mut labels = vec![0.0; mb];
    for i in 0..mb {
        let label = if i % 2 == 0 { 1.0 } else { -1.0 };
        labels[i] = label;
        let row = patterns.row_mut(i);
        for v in row.iter_mut() {
            *v = rng.normal() + label * shift;
        }
    }
    SvmData { patterns, labels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    fn spec(m: usize, n: usize, p: usize, kind: HessianKind, seed: u64) -> GenSpec {
        GenSpec {
            m,
            n,
            p,
            kind,
            seed,
        }
    }

    #[test]
    fn feasible_instances_are_strictly_feasible_by_construction() {
        for seed in 0..20 {
            let (pr, x) = random_feasible(&spec(30, 4, 2, HessianKind::StronglyConvex, seed));
            let ax = pr.a.matvec(&x);
            let min_slack = (0..pr.m)
                .map(|i| ax[i] - pr.b[i])
                .fold(f64::INFINITY, f64::min);
            assert!(min_slack > 1.0 - 1e-12, "seed {seed}: slack {min_slack}");
            let cx = pr.ceq.matvec(&x);
            for j in 0..pr.p {
                assert!((cx[j] - pr.deq[j]).abs() <= 1e-12);
            }
            if let Hessian::Diag(d) = &pr.hess {
                assert!(d.iter().all(|&v| v > 0.0 && v < 1.0));
            } else {
                panic!("expected diagonal");
            }
        }
    }

    #[test]
    fn infeasible_construction_is_inconsistent() {
        let pr = random_infeasible(&spec(5, 2, 0, HessianKind::Linear, 3)).unwrap();
        // The doctored pair: some row i and the last row are negatives with
        // right-hand sides that cannot both hold.
        let m = pr.m;
        let mut found = false;
        for i in 0..m - 1 {
            let negated: Vec<f64> = pr.a.row(i).iter().map(|v| -v).collect();
            if negated == pr.a.row(m - 1) {
                assert!(pr.b[m - 1] > -pr.b[i]);
                found = true;
            }
        }
        assert!(found, "no negated row pair");
    }

    #[test]
    fn infeasible_instances_certified_by_oracle() {
        for seed in 0..10 {
            let pr = random_infeasible(&spec(
                4 + (seed as usize % 3),
                2,
                0,
                HessianKind::StronglyConvex,
                seed,
            ))
            .unwrap();
            match oracle::feasibility_tiny(&pr).unwrap() {
                oracle::TinyFeasibility::Infeasible { .. } => {}
                other => panic!("seed {seed}: expected infeasible, got {other:?}"),
            }
        }
    }

    #[test]
    fn infeasible_needs_two_rows() {
        assert!(random_infeasible(&spec(1, 2, 0, HessianKind::Linear, 0)).is_err());
    }

    #[test]
    fn determinism_same_seed_same_problem() {
        let s = spec(12, 3, 1, HessianKind::StronglyConvex, 99);
        let (a1, x1) = random_feasible(&s);
        let (a2, x2) = random_feasible(&s);
        assert_eq!(a1, a2);
        assert_eq!(x1, x2);
        let i1 = random_infeasible(&s).unwrap();
        let i2 = random_infeasible(&s).unwrap();
        assert_eq!(i1, i2);
    }

    #[test]
    fn start_point_violates_something() {
        let (pr, _) = random_feasible(&spec(10, 3, 1, HessianKind::StronglyConvex, 5));
        let (x0, infeasible) = infeasible_start_point(&pr, 17);
        assert!(infeasible);
        let ax = pr.a.matvec(&x0);
        let cx = pr.ceq.matvec(&x0);
        let violated = (0..pr.m).any(|i| ax[i] < pr.b[i])
            || (0..pr.p).any(|j| (cx[j] - pr.deq[j]).abs() > 0.0);
        assert!(violated);
    }

    #[test]
    fn start_point_cap_on_trivially_feasible_problem() {
        // constraint x >= -10^6 is satisfied by every standard normal draw
        let pr = CqpProblem::inequality_form(
            Hessian::Diag(vec![1.0]),
            vec![0.0],
            Mat::from_rows(&[vec![1.0]]),
            vec![-1e6],
        );
        let (_, infeasible) = infeasible_start_point(&pr, 1);
        assert!(!infeasible);
    }

    #[test]
    fn svm_problem_shapes_and_toy_geometry() {
        // p1 = 1 (label +1), p2 = -1 (label -1): constraints w - b >= 1 and
        // w + b >= 1
        let data = SvmData::new(Mat::from_rows(&[vec![1.0], vec![-1.0]]), vec![1.0, -1.0]).unwrap();
        let pr = svm_problem(&data);
        assert_eq!((pr.n, pr.m, pr.p), (2, 2, 0));
        assert_eq!(pr.a.row(0), &[1.0, -1.0]);
        assert_eq!(pr.a.row(1), &[1.0, 1.0]);
        assert_eq!(pr.b, vec![1.0, 1.0]);
        if let Hessian::Diag(d) = &pr.hess {
            assert_eq!(d, &vec![1.0, 0.0]);
        } else {
            panic!("expected diagonal");
        }

        let relaxed = svm_relaxed_problem(&data, 1.0).unwrap();
        assert_eq!(relaxed.n, pr.n + 1);
        assert_eq!(relaxed.m, pr.m + 1);

        assert!(svm_relaxed_problem(&data, 0.0).is_err());
    }

    #[test]
    fn relaxed_svm_with_large_tau_matches_hard_margin() {
        // separable data: the slack price eventually forces nu to zero and
        // the relaxed solution coincides with the hard-margin one
        let data = SvmData::new(
            Mat::from_rows(&[
                vec![1.0, 0.3],
                vec![0.8, -0.2],
                vec![-1.0, 0.1],
                vec![-0.7, 0.5],
            ]),
            vec![1.0, 1.0, -1.0, -1.0],
        )
        .unwrap();
        let opts = crate::SolveOptions::default();
        let hard = svm_problem(&data);
        let hard_report = crate::solve(&hard, &vec![0.0; hard.n], &opts).unwrap();
        assert_eq!(hard_report.status, crate::SolveStatus::Optimal);

        let relaxed = svm_relaxed_problem(&data, 100.0).unwrap();
        let relaxed_report = crate::solve(&relaxed, &vec![0.0; relaxed.n], &opts).unwrap();
        assert_eq!(relaxed_report.status, crate::SolveStatus::Optimal);
        let nu = relaxed_report.x[relaxed.n - 1];
        assert!(nu.abs() <= 1e-6, "nu = {nu:.3e}");
        for k in 0..hard.n {
            assert!(
                (hard_report.x[k] - relaxed_report.x[k]).abs() <= 1e-5,
                "component {k}: {} vs {}",
                hard_report.x[k],
                relaxed_report.x[k]
            );
        }
    }
}
