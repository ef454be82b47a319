//! Derivations of h^n and their linear vector fields on H^n.
//!
//! In a symplectic frame a matrix `D` is a derivation iff
//! * its last column is `(0, ..., 0, d)`,
//! * every diagonal 2x2 block `A_ii` has trace `d`,
//! * every strictly upper block satisfies `A_ij = -adj(A_ji)`.
//!
//! The last row is free. [`leibniz_holds`] checks the defining identity
//! `D[a, b] = [Da, b] + [a, Db]` on basis pairs and serves as the independent
//! oracle for the block test.

use crate::algebra::{bracket_vec, group_exp, AlgebraElement, GroupElement};
use crate::error::{check_dim, HeisError, Result};
use crate::linalg::{self, Matrix, Vector};

/// A derivation of h^n expressed in a symplectic frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivation {
    n: usize,
    matrix: Matrix,
}

/// Which test [`is_derivation_with`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivationCheck {
    /// Block conditions.
    Structural,
    /// Leibniz rule on all basis pairs.
    Leibniz,
}

impl Derivation {
    /// Validates `matrix` with the block test.
    pub fn new(matrix: Matrix, tol: f64) -> Result<Self> {
        let n = dimension_of(&matrix)?;
        if let Some(msg) = structural_violation(&matrix, tol) {
            return Err(HeisError::NotDerivation(msg));
        }
        Ok(Self { n, matrix })
    }

    /// The H^1 normal form `[[0, b, 0], [1, d, 0], [0, f, d]]`.
    pub fn h1_normal_form(b: f64, d: f64, f: f64) -> Self {
        Self {
            n: 1,
            matrix: Matrix::from_row_slice(3, 3, &[0.0, b, 0.0, 1.0, d, 0.0, 0.0, f, d]),
        }
    }

    pub fn zero(n: usize) -> Self {
        Self {
            n,
            matrix: Matrix::zeros(2 * n + 1, 2 * n + 1),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Eigenvalue on the center, `DZ = dZ`.
    pub fn d(&self) -> f64 {
        derivation_d(self)
    }

    /// Upper-left `2n x 2n` block: the drift induced on the quotient by the center.
    pub fn quotient_block(&self) -> Matrix {
        self.matrix.view((0, 0), (2 * self.n, 2 * self.n)).into_owned()
    }

    /// First `2n` entries of the last row.
    pub fn center_row(&self) -> Vector {
        let n = self.n;
        Vector::from_iterator(2 * n, (0..2 * n).map(|k| self.matrix[(2 * n, k)]))
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        &self.matrix * v
    }

    /// `P D P^{-1}`; the caller guarantees `P` is an automorphism.
    pub(crate) fn conjugate(&self, p: &Matrix, p_inv: &Matrix) -> Self {
        Self {
            n: self.n,
            matrix: p * &self.matrix * p_inv,
        }
    }
}

fn dimension_of(m: &Matrix) -> Result<usize> {
    let d = m.nrows();
    if d != m.ncols() {
        return Err(HeisError::InvalidArgument(format!(
            "derivation must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if d < 3 || d % 2 == 0 {
        return Err(HeisError::InvalidArgument(format!(
            "derivation size must be 2n+1 >= 3, got {d}"
        )));
    }
    Ok(d / 2)
}

fn block(m: &Matrix, i: usize, j: usize) -> Matrix {
    m.view((2 * i, 2 * j), (2, 2)).into_owned()
}

/// First violated block condition, if any.
pub fn structural_violation(m: &Matrix, tol: f64) -> Option<String> {
    let n = match dimension_of(m) {
        Ok(n) => n,
        Err(e) => return Some(e.to_string()),
    };
    let tol = tol * linalg::max_abs(m).max(1.0);
    let d = m[(2 * n, 2 * n)];
    if (0..2 * n).any(|k| m[(k, 2 * n)].abs() > tol) {
        return Some("center column must be (0,…,0,d)".into());
    }
    for i in 0..n {
        let a = block(m, i, i);
        let tr = a[(0, 0)] + a[(1, 1)];
        if (tr - d).abs() > tol {
            return Some(format!(
                "trace of diagonal block A_{k}{k} is {tr} but must equal d = {d}",
                k = i + 1
            ));
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let upper = block(m, i, j);
            let lower = block(m, j, i);
            let expected = -linalg::adjugate2(&lower);
            if linalg::max_abs(&(upper - expected)) > tol {
                return Some(format!(
                    "block A_{a}{b} must equal -adj(A_{b}{a})",
                    a = i + 1,
                    b = j + 1
                ));
            }
        }
    }
    None
}

/// Leibniz-rule oracle: `D[e_a, e_b] = [D e_a, e_b] + [e_a, D e_b]` for all
/// basis pairs.
pub fn leibniz_holds(m: &Matrix, tol: f64) -> Result<bool> {
    let n = dimension_of(m)?;
    let dim = 2 * n + 1;
    let tol = tol * linalg::max_abs(m).max(1.0);
    let basis: Vec<Vector> = (0..dim)
        .map(|k| {
            let mut e = Vector::zeros(dim);
            e[k] = 1.0;
            e
        })
        .collect();
    let images: Vec<Vector> = basis.iter().map(|e| m * e).collect();
    for a in 0..dim {
        for b in a..dim {
            let lhs = m * bracket_vec(&basis[a], &basis[b]);
            let rhs = bracket_vec(&images[a], &basis[b]) + bracket_vec(&basis[a], &images[b]);
            if (lhs - rhs).amax() > tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Block test, cross-checked against the Leibniz oracle in debug builds.
pub fn is_derivation(m: &Matrix, n: usize, tol: f64) -> Result<bool> {
    let ok = is_derivation_with(m, n, DerivationCheck::Structural, tol)?;
    debug_assert_eq!(
        ok,
        is_derivation_with(m, n, DerivationCheck::Leibniz, tol)?,
        "block test and Leibniz oracle disagree on {m}"
    );
    Ok(ok)
}

pub fn is_derivation_with(m: &Matrix, n: usize, check: DerivationCheck, tol: f64) -> Result<bool> {
    check_dim(2 * n + 1, m.nrows())?;
    check_dim(2 * n + 1, m.ncols())?;
    match check {
        DerivationCheck::Structural => Ok(structural_violation(m, tol).is_none()),
        DerivationCheck::Leibniz => leibniz_holds(m, tol),
    }
}

pub fn derivation_d(d: &Derivation) -> f64 {
    let k = 2 * d.n;
    d.matrix[(k, k)]
}

/// Value of the linear vector field at `g`, as flattened tangent coordinates:
/// `DG + (<y_G, x_DG> + <x_G, y_DG> - d <x_G, y_G>) / 2 * Z`.
pub fn linear_field_eval(d: &Derivation, g: &GroupElement) -> Result<Vector> {
    check_dim(d.n, g.n())?;
    let n = d.n;
    let gv = g.to_vector();
    let mut out = &d.matrix * &gv;
    let mut quad = 0.0;
    for i in 0..n {
        let (xg, yg) = (gv[2 * i], gv[2 * i + 1]);
        quad += yg * out[2 * i] + xg * out[2 * i + 1] - d.d() * xg * yg;
    }
    out[2 * n] += 0.5 * quad;
    Ok(out)
}

/// Closed-form flow on exponentials: `phi_t(exp a) = exp(e^{tD} a)`.
pub fn flow_on_exponentials(d: &Derivation, a: &AlgebraElement, t: f64) -> Result<GroupElement> {
    check_dim(d.n, a.n())?;
    let e = linalg::expm(&(&d.matrix * t));
    let moved = AlgebraElement::from_vector(&(e * a.to_vector()))?;
    Ok(group_exp(&moved))
}
