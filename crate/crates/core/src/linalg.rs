//! Small dense linear-algebra helpers shared by the analysis modules.
//!
//! Rank decisions go through the SVD with a threshold of
//! `tol * max(sigma_max, 1)`, so unit-scale inputs are judged absolutely
//! and large-scale inputs relatively.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Default absolute tolerance used for every numeric comparison.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Matrix exponential (scaling and squaring with Padé approximants).
pub fn expm(m: &Matrix) -> Matrix {
    m.exp()
}

fn rank_threshold(sigma_max: f64, tol: f64) -> f64 {
    tol * sigma_max.max(1.0)
}

/// Numerical rank of `m`.
pub fn rank(m: &Matrix, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.max();
    let thr = rank_threshold(smax, tol);
    sv.iter().filter(|&&s| s > thr).count()
}

/// Orthonormal basis (as columns) of the column space of `m`.
pub fn orthonormal_basis(m: &Matrix, tol: f64) -> Matrix {
    let rows = m.nrows();
    if m.ncols() == 0 {
        return Matrix::zeros(rows, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let thr = rank_threshold(smax, tol);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > thr)
        .collect();
    let mut out = Matrix::zeros(rows, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        out.set_column(k, &u.column(i));
    }
    out
}

/// Stacks vectors as the columns of a matrix with `rows` rows.
pub fn columns(rows: usize, vs: &[Vector]) -> Matrix {
    let mut m = Matrix::zeros(rows, vs.len());
    for (k, v) in vs.iter().enumerate() {
        m.set_column(k, v);
    }
    m
}

/// A linear subspace stored through an orthonormal basis.
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: Matrix,
}

impl Subspace {
    pub fn span(ambient: usize, vs: &[Vector], tol: f64) -> Self {
        Self {
            basis: orthonormal_basis(&columns(ambient, vs), tol),
        }
    }

    pub fn from_matrix(m: &Matrix, tol: f64) -> Self {
        Self {
            basis: orthonormal_basis(m, tol),
        }
    }

    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Orthonormal basis as columns.
    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn vectors(&self) -> Vec<Vector> {
        self.basis.column_iter().map(|c| c.into_owned()).collect()
    }

    /// Distance from `v` to the subspace.
    pub fn distance(&self, v: &Vector) -> f64 {
        if self.dim() == 0 {
            return v.norm();
        }
        let proj = &self.basis * (self.basis.transpose() * v);
        (v - proj).norm()
    }

    pub fn contains(&self, v: &Vector, tol: f64) -> bool {
        self.distance(v) <= tol * v.norm().max(1.0)
    }

    pub fn with(&self, extra: &[Vector], tol: f64) -> Self {
        let mut vs = self.vectors();
        vs.extend_from_slice(extra);
        Self::span(self.ambient(), &vs, tol)
    }

    /// Smallest `op`-invariant subspace containing `self`.
    pub fn invariant_closure(&self, op: &Matrix, tol: f64) -> Self {
        let mut current = self.clone();
        loop {
            let images: Vec<Vector> = current.vectors().iter().map(|v| op * v).collect();
            let next = current.with(&images, tol);
            if next.dim() == current.dim() {
                return current;
            }
            current = next;
        }
    }

    pub fn is_invariant(&self, op: &Matrix, tol: f64) -> bool {
        let scale = op.norm().max(1.0);
        self.vectors()
            .iter()
            .all(|v| self.distance(&(op * v)) <= tol * scale)
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
pub fn sym_eigen(m: &Matrix) -> (Vector, Matrix) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = Matrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    sym_eigen(m).0[0]
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix; eigenvalues with
/// modulus at most `tol * max(|lambda|_max, 1)` are treated as zero.
pub fn pinv_sym(m: &Matrix, tol: f64) -> Matrix {
    let (vals, vecs) = sym_eigen(m);
    let thr = rank_threshold(vals.amax(), tol);
    let n = vals.len();
    let mut inv = Matrix::zeros(n, n);
    for i in 0..n {
        if vals[i].abs() > thr {
            let u = vecs.column(i);
            inv += (u * u.transpose()) / vals[i];
        }
    }
    inv
}

/// Orthonormal basis of the numerical null space of a symmetric matrix.
pub fn sym_null_space(m: &Matrix, tol: f64) -> Matrix {
    let (vals, vecs) = sym_eigen(m);
    let thr = rank_threshold(vals.amax(), tol);
    let idx: Vec<usize> = (0..vals.len()).filter(|&i| vals[i].abs() <= thr).collect();
    let mut out = Matrix::zeros(m.nrows(), idx.len());
    for (k, &i) in idx.iter().enumerate() {
        out.set_column(k, &vecs.column(i));
    }
    out
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// 2x2 adjugate.
pub fn adjugate2(m: &Matrix) -> Matrix {
    Matrix::from_row_slice(2, 2, &[m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taylor_exp(m: &Matrix) -> Matrix {
        let n = m.nrows();
        let mut term = Matrix::identity(n, n);
        let mut sum = term.clone();
        for k in 1..60 {
            term = &term * m / k as f64;
            sum += &term;
        }
        sum
    }

    #[test]
    fn expm_matches_taylor_series() {
        let m = Matrix::from_fn(5, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.6);
        let diff = expm(&m) - taylor_exp(&m);
        assert!(max_abs(&diff) <= 1e-10, "{diff}");
    }

    #[test]
    fn rank_and_closure() {
        let v1 = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let v2 = Vector::from_vec(vec![2.0, 0.0, 0.0]);
        let s = Subspace::span(3, &[v1.clone(), v2], DEFAULT_TOLERANCE);
        assert_eq!(s.dim(), 1);
        // shift operator e1 -> e2 -> e3
        let shift = Matrix::from_row_slice(3, 3, &[0., 0., 0., 1., 0., 0., 0., 1., 0.]);
        assert_eq!(s.invariant_closure(&shift, DEFAULT_TOLERANCE).dim(), 3);
        assert!(!s.is_invariant(&shift, DEFAULT_TOLERANCE));
        assert!(s.contains(&(v1 * 3.0), DEFAULT_TOLERANCE));
    }

    #[test]
    fn pinv_of_singular_diag() {
        let q = Matrix::from_diagonal(&Vector::from_vec(vec![0.5, 0.0]));
        let p = pinv_sym(&q, DEFAULT_TOLERANCE);
        assert!((p[(0, 0)] - 2.0).abs() < 1e-12);
        assert!(p[(1, 1)].abs() < 1e-12);
        assert_eq!(sym_null_space(&q, DEFAULT_TOLERANCE).ncols(), 1);
    }
}
