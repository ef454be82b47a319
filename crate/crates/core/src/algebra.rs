//! The Heisenberg Lie algebra h^n and group H^n in coordinates.
//!
//! Elements are stored as `(x, y, z)` with `x, y` in R^n. Whenever an element
//! is flattened to a vector of length `2n + 1` the order is interleaved:
//! `(x_1, y_1, ..., x_n, y_n, z)`, matching the basis `(X_1, Y_1, ..., X_n, Y_n, Z)`.
//!
//! The bracket is `[a, b] = l(a, b) Z` with
//! `l(a, b) = sum_i (x_a,i y_b,i - y_a,i x_b,i)`; the group law comes from the
//! unipotent matrix model `g = I + G`, which gives
//! `(x, y, z) * (x', y', z') = (x + x', y + y', z + z' + <y, x'>)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, HeisError, Result};
use crate::linalg::{self, Matrix, Vector};

/// Flattened index of `x_i` (0-based `i`).
#[inline]
pub fn x_index(i: usize) -> usize {
    2 * i
}

/// Flattened index of `y_i` (0-based `i`).
#[inline]
pub fn y_index(i: usize) -> usize {
    2 * i + 1
}

/// Flattened index of `z` for dimension parameter `n`.
#[inline]
pub fn z_index(n: usize) -> usize {
    2 * n
}

/// Symplectic form on flattened coordinates; ignores the `z` entry.
pub fn form(a: &Vector, b: &Vector) -> f64 {
    let n = a.len() / 2;
    (0..n)
        .map(|i| a[2 * i] * b[2 * i + 1] - a[2 * i + 1] * b[2 * i])
        .sum()
}

/// Bracket on flattened coordinates.
pub fn bracket_vec(a: &Vector, b: &Vector) -> Vector {
    let n = a.len() / 2;
    let mut out = Vector::zeros(a.len());
    out[2 * n] = form(a, b);
    out
}

/// An element of h^n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgebraElement {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: f64,
}

/// An element `g = I + G` of H^n, stored through the coordinates of `G`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: f64,
}

macro_rules! coordinate_impls {
    ($t:ty) => {
        impl $t {
            pub fn new(x: Vec<f64>, y: Vec<f64>, z: f64) -> Result<Self> {
                check_dim(x.len(), y.len())?;
                if x.is_empty() {
                    return Err(HeisError::InvalidArgument("n must be positive".into()));
                }
                Ok(Self { x, y, z })
            }

            pub fn n(&self) -> usize {
                self.x.len()
            }

            /// Flattened interleaved coordinates.
            pub fn to_vector(&self) -> Vector {
                let n = self.n();
                let mut v = Vector::zeros(2 * n + 1);
                for i in 0..n {
                    v[2 * i] = self.x[i];
                    v[2 * i + 1] = self.y[i];
                }
                v[2 * n] = self.z;
                v
            }

            pub fn from_slice(c: &[f64]) -> Result<Self> {
                if c.len() < 3 || c.len() % 2 == 0 {
                    return Err(HeisError::InvalidArgument(format!(
                        "coordinate vector must have odd length 2n+1 >= 3, got {}",
                        c.len()
                    )));
                }
                let n = c.len() / 2;
                Ok(Self {
                    x: (0..n).map(|i| c[2 * i]).collect(),
                    y: (0..n).map(|i| c[2 * i + 1]).collect(),
                    z: c[2 * n],
                })
            }

            pub fn from_vector(v: &Vector) -> Result<Self> {
                Self::from_slice(v.as_slice())
            }

            pub fn max_abs_diff(&self, other: &Self) -> f64 {
                linalg::max_abs(&Matrix::from_column_slice(
                    2 * self.n() + 1,
                    1,
                    (self.to_vector() - other.to_vector()).as_slice(),
                ))
            }
        }
    };
}

coordinate_impls!(AlgebraElement);
coordinate_impls!(GroupElement);

impl AlgebraElement {
    pub fn zero(n: usize) -> Self {
        Self {
            x: vec![0.0; n],
            y: vec![0.0; n],
            z: 0.0,
        }
    }

    /// Basis element `X_i` (0-based).
    pub fn basis_x(n: usize, i: usize) -> Self {
        let mut a = Self::zero(n);
        a.x[i] = 1.0;
        a
    }

    /// Basis element `Y_i` (0-based).
    pub fn basis_y(n: usize, i: usize) -> Self {
        let mut a = Self::zero(n);
        a.y[i] = 1.0;
        a
    }

    /// The center generator `Z`.
    pub fn basis_z(n: usize) -> Self {
        let mut a = Self::zero(n);
        a.z = 1.0;
        a
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            x: self.x.iter().zip(&other.x).map(|(a, b)| a + b).collect(),
            y: self.y.iter().zip(&other.y).map(|(a, b)| a + b).collect(),
            z: self.z + other.z,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            x: self.x.iter().map(|a| a * s).collect(),
            y: self.y.iter().map(|a| a * s).collect(),
            z: self.z * s,
        }
    }

    pub fn is_central(&self, tol: f64) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.abs() <= tol)
    }
}

impl GroupElement {
    pub fn identity(n: usize) -> Self {
        Self {
            x: vec![0.0; n],
            y: vec![0.0; n],
            z: 0.0,
        }
    }

    pub fn inverse(&self) -> Self {
        Self {
            x: self.x.iter().map(|v| -v).collect(),
            y: self.y.iter().map(|v| -v).collect(),
            z: -self.z + dot(&self.y, &self.x),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Lie bracket `[a, b] = l(a, b) Z`.
pub fn bracket(a: &AlgebraElement, b: &AlgebraElement) -> Result<AlgebraElement> {
    let l = symplectic_form(a, b)?;
    let mut out = AlgebraElement::zero(a.n());
    out.z = l;
    Ok(out)
}

/// The real number `l(a, b)` with `[a, b] = l(a, b) Z`.
pub fn symplectic_form(a: &AlgebraElement, b: &AlgebraElement) -> Result<f64> {
    check_dim(a.n(), b.n())?;
    Ok(dot(&a.x, &b.y) - dot(&a.y, &b.x))
}

/// `exp(A) = I + A + A^2 / 2`, i.e. `(x, y, z + <x, y> / 2)`.
pub fn group_exp(a: &AlgebraElement) -> GroupElement {
    GroupElement {
        x: a.x.clone(),
        y: a.y.clone(),
        z: a.z + 0.5 * dot(&a.x, &a.y),
    }
}

/// `log(g) = G - G^2 / 2`, i.e. `(x, y, z - <x, y> / 2)`.
pub fn group_log(g: &GroupElement) -> AlgebraElement {
    AlgebraElement {
        x: g.x.clone(),
        y: g.y.clone(),
        z: g.z - 0.5 * dot(&g.x, &g.y),
    }
}

pub fn group_multiply(g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
    check_dim(g.n(), h.n())?;
    Ok(GroupElement {
        x: g.x.iter().zip(&h.x).map(|(a, b)| a + b).collect(),
        y: g.y.iter().zip(&h.y).map(|(a, b)| a + b).collect(),
        z: g.z + h.z + dot(&g.y, &h.x),
    })
}

/// A basis `(X_1, Y_1, ..., X_n, Y_n, Z)` of h^n stored as the columns of a
/// matrix in canonical coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticFrame {
    n: usize,
    columns: Matrix,
    zscale: f64,
}

impl SymplecticFrame {
    pub fn canonical(n: usize) -> Self {
        let d = 2 * n + 1;
        Self {
            n,
            columns: Matrix::identity(d, d),
            zscale: 1.0,
        }
    }

    /// Wraps a square matrix of odd size; does not check the bracket table.
    pub fn from_columns(columns: Matrix) -> Result<Self> {
        let d = columns.nrows();
        if d != columns.ncols() || d < 3 || d % 2 == 0 {
            return Err(HeisError::InvalidArgument(format!(
                "frame must be a square matrix of odd size >= 3, got {}x{}",
                columns.nrows(),
                columns.ncols()
            )));
        }
        let n = d / 2;
        let zscale = columns[(2 * n, 2 * n)];
        Ok(Self { n, columns, zscale })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn columns(&self) -> &Matrix {
        &self.columns
    }

    /// Factor relating the frame's center generator to the canonical one.
    pub fn zscale(&self) -> f64 {
        self.zscale
    }

    pub fn element(&self, k: usize) -> AlgebraElement {
        AlgebraElement::from_vector(&self.columns.column(k).into_owned())
            .expect("frame columns have odd length")
    }

    /// Coordinates in this frame of a vector given in canonical coordinates.
    pub fn coordinates_of(&self, v: &Vector) -> Option<Vector> {
        self.columns.clone().lu().solve(v)
    }

    /// Frame obtained by expressing `inner` (given in this frame's
    /// coordinates) in canonical coordinates.
    pub fn compose(&self, inner: &Matrix) -> Result<Self> {
        Self::from_columns(&self.columns * inner)
    }
}

fn bracket_table_ok(cols: &Matrix, tol: f64) -> bool {
    let d = cols.nrows();
    if d != cols.ncols() || d < 3 || d % 2 == 0 {
        return false;
    }
    let n = d / 2;
    let scale = linalg::max_abs(cols).max(1.0).powi(2);
    let zcol = cols.column(2 * n).into_owned();
    let vs: Vec<Vector> = (0..d).map(|k| cols.column(k).into_owned()).collect();
    for a in 0..d {
        for b in (a + 1)..d {
            let got = bracket_vec(&vs[a], &vs[b]);
            let expected = if b == a + 1 && a % 2 == 0 && b < 2 * n {
                zcol.clone()
            } else {
                Vector::zeros(d)
            };
            if (got - expected).amax() > tol * scale {
                return false;
            }
        }
    }
    linalg::rank(cols, tol) == d
}

/// True iff the frame's columns satisfy `[X_i, Y_i] = Z` with all other
/// basis brackets zero and the matrix is invertible.
pub fn is_symplectic_frame(frame: &SymplecticFrame, tol: f64) -> bool {
    bracket_table_ok(&frame.columns, tol)
}

/// True iff `p[a, b] = [p a, p b]` for all basis pairs and `p` is invertible.
pub fn is_automorphism(p: &Matrix, tol: f64) -> bool {
    bracket_table_ok(p, tol)
}

/// How the partial family handed to [`complete_symplectic_basis`] is placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompletionMode {
    /// One non-central element becomes `X_1`.
    Single,
    /// Two elements with nonzero bracket become `(X_1, Y_1)`; `Z` is rescaled
    /// to their bracket.
    Pair,
    /// Commuting elements independent modulo the center become `X_1..X_m`.
    CommutingFamily,
}

/// Completes a partial family into a symplectic frame.
pub fn complete_symplectic_basis(
    partial: &[AlgebraElement],
    mode: CompletionMode,
    tol: f64,
) -> Result<SymplecticFrame> {
    let n = partial
        .first()
        .ok_or_else(|| HeisError::InvalidArgument("empty family".into()))?
        .n();
    for p in partial {
        check_dim(n, p.n())?;
    }
    let vs: Vec<Vector> = partial.iter().map(|a| a.to_vector()).collect();
    match mode {
        CompletionMode::Single => {
            if vs.len() != 1 {
                return Err(HeisError::InvalidArgument(
                    "single mode takes exactly one element".into(),
                ));
            }
            if partial[0].is_central(tol) {
                return Err(HeisError::Hypothesis("element is central".into()));
            }
            build_frame(n, &vs, &[None], 1.0, tol)
        }
        CompletionMode::Pair => {
            if vs.len() != 2 {
                return Err(HeisError::InvalidArgument(
                    "pair mode takes exactly two elements".into(),
                ));
            }
            let c = form(&vs[0], &vs[1]);
            let scale = vs[0].norm().max(1.0) * vs[1].norm().max(1.0);
            if c.abs() <= tol * scale {
                return Err(HeisError::Hypothesis("[X, Y] = 0".into()));
            }
            build_frame(n, &vs[..1], &[Some(vs[1].clone())], c, tol)
        }
        CompletionMode::CommutingFamily => {
            let hints = vec![None; vs.len()];
            build_frame(n, &vs, &hints, 1.0, tol)
        }
    }
}

/// Builds a symplectic frame whose first `m` `X` columns are `xs`, whose
/// `Y` partners are pinned where `ys[j]` is given, and whose center generator
/// is `zscale * Z`. Symplectic Gram–Schmidt with largest-|l| pivoting fills
/// the remaining pairs.
pub(crate) fn build_frame(
    n: usize,
    xs: &[Vector],
    ys: &[Option<Vector>],
    zscale: f64,
    tol: f64,
) -> Result<SymplecticFrame> {
    let dim = 2 * n + 1;
    let m = xs.len();
    debug_assert_eq!(m, ys.len());
    if m > n {
        return Err(HeisError::Hypothesis(format!(
            "{m} commuting elements cannot all be placed as X_i in h^{n}"
        )));
    }
    let omega = |a: &Vector, b: &Vector| form(a, b) / zscale;
    let proj = |v: &Vector| {
        let mut w = v.clone();
        w[2 * n] = 0.0;
        w
    };

    // independence modulo the center
    let xv: Vec<Vector> = xs.iter().map(&proj).collect();
    if linalg::rank(&linalg::columns(dim, &xv), tol) != m {
        return Err(HeisError::Hypothesis(
            "elements are dependent modulo the center".into(),
        ));
    }
    for i in 0..m {
        for j in (i + 1)..m {
            let s = xs[i].norm().max(1.0) * xs[j].norm().max(1.0);
            if form(&xs[i], &xs[j]).abs() > tol * s {
                return Err(HeisError::Hypothesis("elements do not commute".into()));
            }
        }
    }

    // partners: omega(x_i, yhat_j) = delta_ij
    let mut w = Matrix::zeros(m, dim);
    for i in 0..m {
        for k in 0..dim {
            let mut e = Vector::zeros(dim);
            e[k] = 1.0;
            w[(i, k)] = omega(&xs[i], &e);
        }
    }
    let w_pinv = w.clone().pseudo_inverse(1e-14).map_err(|e| {
        HeisError::Hypothesis(format!("cannot solve for symplectic partners: {e}"))
    })?;
    let mut yhat: Vec<Vector> = Vec::with_capacity(m);
    for j in 0..m {
        match &ys[j] {
            Some(y) => {
                for i in 0..m {
                    let target = if i == j { 1.0 } else { 0.0 };
                    let s = xs[i].norm().max(1.0) * y.norm().max(1.0);
                    if (omega(&xs[i], y) - target).abs() > tol * s {
                        return Err(HeisError::Hypothesis(format!(
                            "pinned partner {j} is not dual to the X family"
                        )));
                    }
                }
                yhat.push(y.clone());
            }
            None => {
                let mut e = Vector::zeros(m);
                e[j] = 1.0;
                let mut y = &w_pinv * e;
                y[2 * n] = 0.0;
                yhat.push(y);
            }
        }
    }
    let pinned: Vec<bool> = ys.iter().map(|y| y.is_some()).collect();
    let mut ys_final = yhat.clone();
    for i in 0..m {
        for j in (i + 1)..m {
            let om = omega(&yhat[i], &yhat[j]);
            match (pinned[i], pinned[j]) {
                (true, true) => {
                    let s = yhat[i].norm().max(1.0) * yhat[j].norm().max(1.0);
                    if om.abs() > tol * s {
                        return Err(HeisError::Hypothesis(
                            "pinned partners do not commute".into(),
                        ));
                    }
                }
                (true, false) => ys_final[j] += &xs[i] * om,
                (false, true) => ys_final[i] -= &xs[j] * om,
                (false, false) => {
                    ys_final[i] -= &xs[j] * (0.5 * om);
                    ys_final[j] += &xs[i] * (0.5 * om);
                }
            }
        }
    }

    let mut pairs: Vec<(Vector, Vector)> = xs
        .iter()
        .cloned()
        .zip(ys_final.iter().cloned())
        .collect();

    // complement of the fixed pairs, then greedy symplectic Gram–Schmidt
    let project_out = |v: &Vector, pairs: &[(Vector, Vector)]| {
        let mut r = proj(v);
        for (x, y) in pairs {
            let a = omega(&r, y);
            let b = omega(&r, x);
            r -= proj(x) * a;
            r += proj(y) * b;
        }
        r
    };
    let mut candidates: Vec<Vector> = (0..2 * n)
        .map(|k| {
            let mut e = Vector::zeros(dim);
            e[k] = 1.0;
            project_out(&e, &pairs)
        })
        .collect();
    candidates = linalg::orthonormal_basis(&linalg::columns(dim, &candidates), tol)
        .column_iter()
        .map(|c| c.into_owned())
        .collect();

    while pairs.len() < n {
        let mut best = (0, 0, 0.0_f64);
        for a in 0..candidates.len() {
            for b in (a + 1)..candidates.len() {
                let v = omega(&candidates[a], &candidates[b]);
                if v.abs() > best.2.abs() {
                    best = (a, b, v);
                }
            }
        }
        if best.2.abs() <= tol {
            return Err(HeisError::Hypothesis(
                "symplectic completion degenerated".into(),
            ));
        }
        let x = candidates[best.0].clone();
        let y = &candidates[best.1] / best.2;
        let new_pair = [(x, y)];
        let rest: Vec<Vector> = candidates
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != best.0 && *k != best.1)
            .map(|(_, c)| project_out(c, &new_pair))
            .collect();
        pairs.push(new_pair[0].clone());
        candidates = linalg::orthonormal_basis(&linalg::columns(dim, &rest), tol)
            .column_iter()
            .map(|c| c.into_owned())
            .collect();
    }

    let mut cols = Matrix::zeros(dim, dim);
    for (i, (x, y)) in pairs.iter().enumerate() {
        cols.set_column(2 * i, x);
        cols.set_column(2 * i + 1, y);
    }
    cols[(2 * n, 2 * n)] = zscale;
    let frame = SymplecticFrame::from_columns(cols)?;
    if !is_symplectic_frame(&frame, tol.max(1e-9) * 10.0) {
        return Err(HeisError::Hypothesis(
            "completed basis failed the symplectic check".into(),
        ));
    }
    Ok(frame)
}
