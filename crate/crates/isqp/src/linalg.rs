//! Dense row-major matrices and the three factorizations the solver needs:
//! Cholesky for the condensed normal systems, LU with partial pivoting for
//! the reference oracles, and Householder QR with column pivoting for rank
//! decisions and null-space projections.
//!
//! Everything is sized for the solver's workloads (a few hundred columns at
//! most), so the kernels favor clarity over blocking.

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Mat {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from row slices. Panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            assert_eq!(r.len(), ncols, "ragged rows");
            data.extend_from_slice(r);
        }
        Mat { nrows, ncols, data }
    }

    pub fn from_row_major(nrows: usize, ncols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), nrows * ncols);
        Mat { nrows, ncols, data }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.ncols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `out = self * x`
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(out.len(), self.nrows);
        for i in 0..self.nrows {
            out[i] = dot(self.row(i), x);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        self.matvec_into(x, &mut out);
        out
    }

    /// `out += scale * self^T * x`
    pub fn tr_matvec_acc(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(out.len(), self.ncols);
        for i in 0..self.nrows {
            let xi = scale * x[i];
            if xi != 0.0 {
                axpy(xi, self.row(i), out);
            }
        }
    }

    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        self.tr_matvec_acc(x, 1.0, &mut out);
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Induced infinity norm (max absolute row sum).
    pub fn inf_norm(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum())
            .fold(0.0, f64::max)
    }

    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Mat {
        let mut out = Mat::zeros(idx.len(), self.ncols);
        for (k, &i) in idx.iter().enumerate() {
            out.row_mut(k).copy_from_slice(self.row(i));
        }
        out
    }

    pub fn vstack(&self, other: &Mat) -> Mat {
        assert_eq!(self.ncols, other.ncols);
        let mut data = Vec::with_capacity((self.nrows + other.nrows) * self.ncols);
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Mat {
            nrows: self.nrows + other.nrows,
            ncols: self.ncols,
            data,
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub struct Cholesky {
    l: Mat,
}

/// Attempts `A = L L^T` on the lower triangle. Returns `None` when a pivot
/// is non-positive or non-finite.
pub fn cholesky(a: &Mat) -> Option<Cholesky> {
    assert_eq!(a.nrows, a.ncols);
    let n = a.nrows;
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        d = d.sqrt();
        l.set(j, j, d);
        for i in j + 1..n {
            let mut v = a.get(i, j);
            let (ri, rj) = (i * n, j * n);
            for k in 0..j {
                v -= l.data[ri + k] * l.data[rj + k];
            }
            l.set(i, j, v / d);
        }
    }
    Some(Cholesky { l })
}

impl Cholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.nrows;
        debug_assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        // forward: L w = b
        for i in 0..n {
            let mut v = x[i];
            for k in 0..i {
                v -= self.l.get(i, k) * x[k];
            }
            x[i] = v / self.l.get(i, i);
        }
        // backward: L^T x = w
        for i in (0..n).rev() {
            let mut v = x[i];
            for k in i + 1..n {
                v -= self.l.get(k, i) * x[k];
            }
            x[i] = v / self.l.get(i, i);
        }
        x
    }
}

/// LU factorization with partial pivoting.
pub struct Lu {
    lu: Mat,
    piv: Vec<usize>,
}

/// Returns `None` when the matrix is numerically singular (a pivot falls
/// below `1e-13` times the largest entry).
pub fn lu_factor(a: &Mat) -> Option<Lu> {
    assert_eq!(a.nrows, a.ncols);
    let n = a.nrows;
    let mut lu = a.clone();
    let mut piv: Vec<usize> = (0..n).collect();
    let tiny = 1e-13 * a.max_abs().max(1e-300);
    for k in 0..n {
        let mut pk = k;
        let mut pmax = lu.get(k, k).abs();
        for i in k + 1..n {
            let v = lu.get(i, k).abs();
            if v > pmax {
                pmax = v;
                pk = i;
            }
        }
        if !(pmax > tiny) {
            return None;
        }
        if pk != k {
            piv.swap(k, pk);
            for j in 0..n {
                let (x, y) = (lu.get(k, j), lu.get(pk, j));
                lu.set(k, j, y);
                lu.set(pk, j, x);
            }
        }
        let pivot = lu.get(k, k);
        for i in k + 1..n {
            let f = lu.get(i, k) / pivot;
            lu.set(i, k, f);
            if f != 0.0 {
                for j in k + 1..n {
                    let v = lu.get(i, j) - f * lu.get(k, j);
                    lu.set(i, j, v);
                }
            }
        }
    }
    Some(Lu { lu, piv })
}

impl Lu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.nrows;
        debug_assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.piv.iter().map(|&i| b[i]).collect();
        for i in 1..n {
            let mut v = x[i];
            for k in 0..i {
                v -= self.lu.get(i, k) * x[k];
            }
            x[i] = v;
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            for k in i + 1..n {
                v -= self.lu.get(i, k) * x[k];
            }
            x[i] = v / self.lu.get(i, i);
        }
        x
    }
}

/// Householder QR with column pivoting: `A P = Q R`.
///
/// Reflectors are stored below the diagonal (with implicit unit leading
/// entry), R on and above it. The numerical rank is decided at factor time
/// against `rel_tol` times the largest initial column norm.
pub struct ColPivQr {
    qr: Mat,
    tau: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

pub fn qr_factor(a: &Mat, rel_tol: f64) -> ColPivQr {
    let (m, n) = (a.nrows, a.ncols);
    let kmax = m.min(n);
    let mut qr = a.clone();
    let mut tau = vec![0.0; kmax];
    let mut perm: Vec<usize> = (0..n).collect();
    // squared column norms, downdated as elimination proceeds
    let mut norms2: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| qr.get(i, j) * qr.get(i, j)).sum())
        .collect();
    let orig2 = norms2.clone();
    let scale = norms2.iter().cloned().fold(0.0, f64::max).sqrt();
    let thresh = rel_tol * scale.max(1e-300);
    let mut rank = 0;

    for k in 0..kmax {
        // pivot: remaining column with the largest norm
        let mut jmax = k;
        for j in k + 1..n {
            if norms2[j] > norms2[jmax] {
                jmax = j;
            }
        }
        if jmax != k {
            perm.swap(k, jmax);
            norms2.swap(k, jmax);
            for i in 0..m {
                let (x, y) = (qr.get(i, k), qr.get(i, jmax));
                qr.set(i, k, y);
                qr.set(i, jmax, x);
            }
        }
        // Householder vector for column k, rows k..m
        let mut nrm2 = 0.0;
        for i in k..m {
            nrm2 += qr.get(i, k) * qr.get(i, k);
        }
        let nrm = nrm2.sqrt();
        if !(nrm > thresh) {
            break;
        }
        rank = k + 1;
        let x0 = qr.get(k, k);
        let alpha = if x0 >= 0.0 { -nrm } else { nrm };
        let v0 = x0 - alpha;
        tau[k] = (alpha - x0) / alpha;
        for i in k + 1..m {
            let v = qr.get(i, k) / v0;
            qr.set(i, k, v);
        }
        qr.set(k, k, alpha);
        // apply H_k to the remaining columns
        for j in k + 1..n {
            let mut s = qr.get(k, j);
            for i in k + 1..m {
                s += qr.get(i, k) * qr.get(i, j);
            }
            s *= tau[k];
            if s != 0.0 {
                let v = qr.get(k, j) - s;
                qr.set(k, j, v);
                for i in k + 1..m {
                    let v = qr.get(i, j) - s * qr.get(i, k);
                    qr.set(i, j, v);
                }
            }
            // downdate the column norm; recompute on heavy cancellation
            let r = qr.get(k, j);
            norms2[j] -= r * r;
            if norms2[j] < 1e-4 * orig2[perm[j]] {
                norms2[j] = (k + 1..m).map(|i| qr.get(i, j) * qr.get(i, j)).sum();
            }
        }
    }
    ColPivQr {
        qr,
        tau,
        perm,
        rank,
    }
}

impl ColPivQr {
    pub fn rank(&self) -> usize {
        self.rank
    }

    fn apply_reflector(&self, k: usize, v: &mut [f64]) {
        let m = self.qr.nrows;
        let mut s = v[k];
        for i in k + 1..m {
            s += self.qr.get(i, k) * v[i];
        }
        s *= self.tau[k];
        if s != 0.0 {
            v[k] -= s;
            for i in k + 1..m {
                v[i] -= s * self.qr.get(i, k);
            }
        }
    }

    /// `v := Q^T v`
    pub fn apply_qt(&self, v: &mut [f64]) {
        assert_eq!(v.len(), self.qr.nrows);
        for k in 0..self.rank {
            self.apply_reflector(k, v);
        }
    }

    /// `v := Q v`
    pub fn apply_q(&self, v: &mut [f64]) {
        assert_eq!(v.len(), self.qr.nrows);
        for k in (0..self.rank).rev() {
            self.apply_reflector(k, v);
        }
    }

    /// Orthogonal projection of `v` onto the column space of the factored
    /// matrix.
    pub fn project_onto_col_space(&self, v: &[f64]) -> Vec<f64> {
        let mut w = v.to_vec();
        self.apply_qt(&mut w);
        for x in w.iter_mut().skip(self.rank) {
            *x = 0.0;
        }
        self.apply_q(&mut w);
        w
    }

    /// Column `j` of Q (an orthonormal basis vector of the column space for
    /// `j < rank`, of its complement otherwise).
    pub fn q_column(&self, j: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.qr.nrows];
        e[j] = 1.0;
        self.apply_q(&mut e);
        e
    }

    /// Minimum-norm-ish least-squares solution (free variables of a
    /// rank-deficient system are set to zero). Returns the solution in the
    /// original column order together with the residual norm.
    pub fn solve_ls(&self, b: &[f64]) -> (Vec<f64>, f64) {
        let (m, n) = (self.qr.nrows, self.qr.ncols);
        assert_eq!(b.len(), m);
        let mut w = b.to_vec();
        self.apply_qt(&mut w);
        let r = self.rank;
        let resid = w[r..].iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut xp = vec![0.0; n];
        for i in (0..r).rev() {
            let mut v = w[i];
            for k in i + 1..r {
                v -= self.qr.get(i, k) * xp[k];
            }
            xp[i] = v / self.qr.get(i, i);
        }
        let mut x = vec![0.0; n];
        for j in 0..n {
            x[self.perm[j]] = xp[j];
        }
        (x, resid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = Mat::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, 0.2],
            vec![0.5, 0.2, 2.0],
        ]);
        let ch = cholesky(&a).unwrap();
        let b = vec![1.0, -2.0, 0.5];
        let x = ch.solve(&b);
        let r = a.matvec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert_relative_eq!(ri, bi, epsilon = 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(cholesky(&a).is_none());
    }

    #[test]
    fn lu_solves_and_detects_singular() {
        let a = Mat::from_rows(&[
            vec![0.0, 2.0, 1.0],
            vec![1.0, -1.0, 0.0],
            vec![3.0, 0.0, 1.0],
        ]);
        let lu = lu_factor(&a).unwrap();
        let b = vec![3.0, 0.0, 4.0];
        let x = lu.solve(&b);
        let r = a.matvec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert_relative_eq!(ri, bi, epsilon = 1e-12);
        }
        let s = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(lu_factor(&s).is_none());
    }

    #[test]
    fn qr_rank_and_projection() {
        // rank-2 matrix: third column = col0 + col1
        let a = Mat::from_rows(&[
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0],
            vec![1.0, 1.0, 2.0],
            vec![2.0, -1.0, 1.0],
        ]);
        let qr = qr_factor(&a, 1e-10);
        assert_eq!(qr.rank(), 2);

        // projection onto col space is idempotent and reproduces columns
        let v = vec![1.0, 2.0, 3.0, 4.0];
        let pv = qr.project_onto_col_space(&v);
        let ppv = qr.project_onto_col_space(&pv);
        for (x, y) in pv.iter().zip(&ppv) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
        let col0: Vec<f64> = (0..4).map(|i| a.get(i, 0)).collect();
        let pc = qr.project_onto_col_space(&col0);
        for (x, y) in pc.iter().zip(&col0) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn qr_least_squares() {
        let a = Mat::from_rows(&[vec![1.0, 1.0], vec![1.0, 2.0], vec![1.0, 3.0]]);
        let b = vec![6.0, 0.0, 0.0];
        let qr = qr_factor(&a, 1e-12);
        let (x, _res) = qr.solve_ls(&b);
        // normal equations solution of this classic system: x = [8, -3]
        assert_relative_eq!(x[0], 8.0, epsilon = 1e-10);
        assert_relative_eq!(x[1], -3.0, epsilon = 1e-10);
    }

    #[test]
    fn matvec_and_norms() {
        let a = Mat::from_rows(&[vec![1.0, -2.0], vec![3.0, 4.0]]);
        assert_eq!(a.matvec(&[1.0, 1.0]), vec![-1.0, 7.0]);
        assert_eq!(a.tr_matvec(&[1.0, 1.0]), vec![4.0, 2.0]);
        assert_eq!(a.inf_norm(), 7.0);
    }
}
