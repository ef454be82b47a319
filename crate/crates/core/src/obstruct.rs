//! Control-free dynamics of the center coordinate and quadratic
//! non-controllability certificates.
//!
//! In a symplectic frame where every control lies in `span{X_i}`, the last
//! group coordinate obeys `z' = d z + l(v) + v^T Q v` with `v = (x, y)`,
//! whatever the inputs. A change `w = z + v^T S v / 2 + p^T v` whose gradient
//! vanishes along the controls keeps that shape, and when the new
//! right-hand side `l'(v) + v^T Q' v` is bounded below by `mu`, the surface
//! `w = -mu/d` can only be crossed one way.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{complete_symplectic_basis, CompletionMode, SymplecticFrame};
use crate::error::{HeisError, Result};
use crate::linalg::{self, Matrix, Subspace, Vector};
use crate::system::{change_frame, detect_decoupled_cells, normal_form_decoupled, LinearSystem};

/// `z' = d z + l^T v + v^T q_hat v`, together with the quotient dynamics
/// `v' = drift v + inputs u` and the frame it was read in.
#[derive(Debug, Clone, PartialEq)]
pub struct ZDynamics {
    pub d: f64,
    pub l: Vector,
    pub q_hat: Matrix,
    pub drift: Matrix,
    /// `(x, y)`-parts of the controls, one per column.
    pub inputs: Matrix,
    /// Frame (in the system's coordinates) the dynamics are expressed in.
    pub frame: SymplecticFrame,
}

impl ZDynamics {
    /// `d z + l^T v + v^T q_hat v`.
    pub fn rhs(&self, z: f64, v: &Vector) -> f64 {
        self.d * z + self.l.dot(v) + v.dot(&(&self.q_hat * v))
    }
}

/// Symmetric matrix of the quadratic part for quotient drift `m` and center
/// eigenvalue `d`: `(K M + M^T K)/4 - (d/4) K` with `K` the block-diagonal
/// swap, so that `v^T Q v = (<x, y_{Mv}> + <y, x_{Mv}> - d <x, y>) / 2`.
pub fn quadratic_part(m: &Matrix, d: f64) -> Matrix {
    let k = m.nrows();
    let mut swap = Matrix::zeros(k, k);
    for i in 0..k / 2 {
        swap[(2 * i, 2 * i + 1)] = 1.0;
        swap[(2 * i + 1, 2 * i)] = 1.0;
    }
    (&swap * m + m.transpose() * &swap) * 0.25 - swap * (0.25 * d)
}

fn reading_frame(sys: &LinearSystem) -> Result<SymplecticFrame> {
    let n = sys.n();
    let tol = sys.tolerance();
    let controls = sys.independent_controls();
    let z = sys.z_vector();
    let span = Subspace::span(sys.dim(), &sys.control_vectors(), tol);
    if span.contains(&z, tol) {
        return Err(HeisError::Hypothesis("Z lies in the span of the controls".into()));
    }
    let in_x = controls.iter().all(|c| {
        c.y.iter().all(|v| v.abs() <= tol) && c.z.abs() <= tol
    });
    if in_x {
        return Ok(SymplecticFrame::canonical(n));
    }
    complete_symplectic_basis(&controls, CompletionMode::CommutingFamily, tol)
}

/// Reads the center dynamics in a frame where each control lies in
/// `span{X_i}`: the current coordinates when they already qualify, otherwise
/// a completion of the (independent, commuting) controls.
pub fn z_dynamics(sys: &LinearSystem) -> Result<ZDynamics> {
    let frame = reading_frame(sys)?;
    z_dynamics_in_frame(sys, &frame)
}

/// Center dynamics in the given frame (columns in the system's coordinates).
pub fn z_dynamics_in_frame(sys: &LinearSystem, frame: &SymplecticFrame) -> Result<ZDynamics> {
    let moved = change_frame(sys, frame)?;
    let n = moved.n();
    let tol = moved.tolerance();
    let bs = moved.control_vectors();
    for b in &bs {
        let scale = b.norm().max(1.0);
        let off = (0..n)
            .map(|i| b[2 * i + 1].abs())
            .fold(b[2 * n].abs(), f64::max);
        if off > tol * scale {
            return Err(HeisError::Hypothesis(
                "controls do not lie in span{X_i} in this frame".into(),
            ));
        }
    }
    let der = moved.derivation();
    let drift = der.quotient_block();
    let d = der.d();
    let mut inputs = Matrix::zeros(2 * n, bs.len());
    for (j, b) in bs.iter().enumerate() {
        inputs.set_column(j, &b.rows(0, 2 * n));
    }
    Ok(ZDynamics {
        d,
        l: der.center_row(),
        q_hat: quadratic_part(&drift, d),
        drift,
        inputs,
        frame: frame.clone(),
    })
}

/// Minimum of `l^T v + v^T Q v`, when finite: `Q` positive semidefinite and
/// `l` orthogonal to its null space; then `mu = -l^T Q^+ l / 4`.
pub fn bounded_below(l: &Vector, q_hat: &Matrix, tol: f64) -> Option<f64> {
    let scale = linalg::max_abs(q_hat).max(1.0);
    if linalg::min_eigenvalue(q_hat) < -tol * scale {
        return None;
    }
    let null = linalg::sym_null_space(q_hat, tol);
    if null.ncols() > 0 {
        let leak = (null.transpose() * l).amax();
        if leak > tol * l.norm().max(1.0) {
            return None;
        }
    }
    // + 0.0 turns -0 into 0
    let mu = -0.25 * l.dot(&(linalg::pinv_sym(q_hat, tol) * l)) + 0.0;
    mu.is_finite().then_some(mu)
}

/// Largest of `|S beta_j|` and `|p . beta_j|` over the controls.
pub fn admissibility_residual(z: &ZDynamics, s: &Matrix, p: &Vector) -> f64 {
    z.inputs
        .column_iter()
        .map(|beta| (s * beta).amax().max(p.dot(&beta).abs()))
        .fold(0.0, f64::max)
}

/// `(l', Q')` after the change `w = z + v^T S v / 2 + p^T v`:
/// `Q' = Q + (S M + M^T S)/2 - (d/2) S` and `l' = l + M^T p - d p`.
pub fn change_of_variable(
    z: &ZDynamics,
    s: &Matrix,
    p: &Vector,
    tol: f64,
) -> Result<(Vector, Matrix)> {
    let k = z.l.len();
    if s.nrows() != k || s.ncols() != k {
        return Err(HeisError::DimensionMismatch {
            expected: k,
            found: s.nrows(),
        });
    }
    if p.len() != k {
        return Err(HeisError::DimensionMismatch {
            expected: k,
            found: p.len(),
        });
    }
    let scale = linalg::max_abs(s).max(p.amax()).max(1.0) * z.inputs.amax().max(1.0);
    if linalg::max_abs(&(s - s.transpose())) > tol * scale {
        return Err(HeisError::InvalidArgument("S must be symmetric".into()));
    }
    if admissibility_residual(z, s, p) > tol * scale {
        return Err(HeisError::Hypothesis(
            "change of variable is not admissible (depends on a control direction)".into(),
        ));
    }
    let m = &z.drift;
    let q = &z.q_hat + (s * m + m.transpose() * s) * 0.5 - s * (0.5 * z.d);
    let l = &z.l + m.transpose() * p - p * z.d;
    Ok((l, (&q + q.transpose()) * 0.5))
}

/// Which stage of the search produced a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchStage {
    /// `S = 0, p = 0`.
    Trivial,
    /// Completing the square on decoupled cells.
    CompleteSquare,
    /// Numerical maximization of the smallest eigenvalue of `Q'`.
    Numeric,
}

/// Admissible change of variable with bounded-below right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstructionCertificate {
    pub s: Matrix,
    pub p: Vector,
    pub lprime: Vector,
    pub qprime: Matrix,
    pub mu: f64,
    pub d: f64,
    /// Frame (in the system's coordinates) in which `v`, `z` and `w` live.
    pub frame: SymplecticFrame,
    /// Largest admissibility residual at emission.
    pub residual: f64,
    pub stage: SearchStage,
}

impl ObstructionCertificate {
    /// `w = z + v^T S v / 2 + p^T v`.
    pub fn w(&self, z: f64, v: &Vector) -> f64 {
        z + 0.5 * v.dot(&(&self.s * v)) + self.p.dot(v)
    }

    /// Level `-mu/d` of the one-way surface.
    pub fn threshold(&self) -> f64 {
        -self.mu / self.d
    }
}

/// Multi-start budget of the numeric stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub starts: usize,
    pub iterations: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            starts: 64,
            iterations: 500,
        }
    }
}

fn certify(z: &ZDynamics, s: Matrix, p: Vector, stage: SearchStage, tol: f64) -> Option<ObstructionCertificate> {
    let (lprime, qprime) = change_of_variable(z, &s, &p, tol).ok()?;
    let mu = bounded_below(&lprime, &qprime, tol)?;
    Some(ObstructionCertificate {
        residual: admissibility_residual(z, &s, &p),
        s,
        p,
        lprime,
        qprime,
        mu,
        d: z.d,
        frame: z.frame.clone(),
        stage,
    })
}

/// Orthonormal basis of the orthogonal complement of the control directions
/// in `R^{2n}`: admissible `S` are `U T U^T`, admissible `p` are `U q`.
fn admissible_basis(z: &ZDynamics, tol: f64) -> Matrix {
    let k = z.l.len();
    let taken = Subspace::from_matrix(&z.inputs, tol);
    let projector = Matrix::identity(k, k) - taken.basis() * taken.basis().transpose();
    linalg::orthonormal_basis(&projector, tol)
}

/// Least-squares admissible `p` pushing `l'` into the range of `Q'(S)`.
fn fit_linear_part(z: &ZDynamics, s: &Matrix, u: &Matrix, tol: f64) -> Option<Vector> {
    let (l0, q) = change_of_variable(z, s, &Vector::zeros(z.l.len()), tol).ok()?;
    let null = linalg::sym_null_space(&q, tol);
    if null.ncols() == 0 || u.ncols() == 0 {
        return Some(Vector::zeros(z.l.len()));
    }
    let k = z.l.len();
    let a = (z.drift.transpose() - Matrix::identity(k, k) * z.d) * u;
    let lhs = null.transpose() * a;
    let rhs = -(null.transpose() * l0);
    let q = lhs.pseudo_inverse(tol).ok()? * rhs;
    Some(u * q)
}

/// Searches for a certificate in three stages: the trivial change, completing
/// the square on decoupled cells, then a multi-start ascent on the smallest
/// eigenvalue of `Q'` over admissible `S`. Every returned certificate has
/// passed [`verify_certificate`]; `None` proves nothing.
pub fn search_obstruction(
    sys: &LinearSystem,
    budget: &SearchBudget,
    seed: u64,
) -> Option<ObstructionCertificate> {
    let tol = sys.tolerance();
    if sys.d().abs() <= tol {
        return None;
    }
    let z = z_dynamics(sys).ok()?;
    let k = z.l.len();
    let flipped = z_dynamics_in_frame(sys, &reverse_orientation(&z.frame)).ok()?;
    let accept = |c: Option<ObstructionCertificate>| c.filter(|c| verify_certificate(sys, c));

    for zz in [&z, &flipped] {
        let trivial = certify(zz, Matrix::zeros(k, k), Vector::zeros(k), SearchStage::Trivial, tol);
        if let Some(c) = accept(trivial) {
            return Some(c);
        }
    }
    if let Some(c) = complete_square(sys) {
        return Some(c);
    }
    numeric_search(sys, &z, budget, seed).or_else(|| numeric_search(sys, &flipped, budget, seed))
}

/// The automorphism `(X_i, Y_i, Z) -> (X_i, -Y_i, -Z)` applied to a frame.
/// It fixes controls in `span{X_i}` and turns `Q'` into `-Q'`, so both
/// orientations have to be searched.
pub fn reverse_orientation(frame: &SymplecticFrame) -> SymplecticFrame {
    let mut cols = frame.columns().clone();
    let n = frame.n();
    for k in (0..n).map(|i| 2 * i + 1).chain([2 * n]) {
        let flipped = -cols.column(k);
        cols.set_column(k, &flipped);
    }
    SymplecticFrame::from_columns(cols).expect("same shape")
}

/// Completed-square certificate for systems with decoupled cells. Per cell
/// `[[0, b], [c, d]]` with center coefficient `f`: `S_{y y} = d / (2c)`, and
/// if needed `p_y = 2f/d`. Returns only verified certificates.
pub fn complete_square(sys: &LinearSystem) -> Option<ObstructionCertificate> {
    let tol = sys.tolerance();
    let cells = detect_decoupled_cells(sys).ok()?;
    if cells.is_empty() {
        return None;
    }
    let nf = normal_form_decoupled(sys, &cells).ok()?;
    let z = z_dynamics_in_frame(sys, &nf.frame).ok()?;
    let k = z.l.len();
    let d = nf.d;
    let mut s = Matrix::zeros(k, k);
    let mut p_fix = Vector::zeros(k);
    for cell in &nf.cells {
        let y = 2 * cell.index + 1;
        s[(y, y)] = d / (2.0 * cell.c);
        p_fix[y] = 2.0 * cell.f / d;
    }
    let u = admissible_basis(&z, tol);
    let candidates = [
        Some(Vector::zeros(k)),
        Some(p_fix),
        fit_linear_part(&z, &s, &u, tol),
    ];
    candidates
        .into_iter()
        .flatten()
        .filter_map(|p| certify(&z, s.clone(), p, SearchStage::CompleteSquare, tol))
        .find(|c| verify_certificate(sys, c))
}

/// `Q'` as an affine function of coordinates `theta` on the admissible
/// symmetric matrices `S = sum_k theta_k S_k`.
struct AdmissibleFamily {
    base: Matrix,
    /// `S_k`
    directions: Vec<Matrix>,
    /// `Q'(S_k) - Q'(0)`
    images: Vec<Matrix>,
}

impl AdmissibleFamily {
    fn new(z: &ZDynamics, u: &Matrix) -> Self {
        let r = u.ncols();
        let m = &z.drift;
        let mut directions = Vec::new();
        let mut images = Vec::new();
        for a in 0..r {
            for b in a..r {
                let mut e = Matrix::zeros(r, r);
                let w = if a == b { 1.0 } else { std::f64::consts::FRAC_1_SQRT_2 };
                e[(a, b)] = w;
                e[(b, a)] = w;
                let s = u * e * u.transpose();
                images.push((&s * m + m.transpose() * &s) * 0.5 - &s * (0.5 * z.d));
                directions.push(s);
            }
        }
        Self {
            base: z.q_hat.clone(),
            directions,
            images,
        }
    }

    fn dim(&self) -> usize {
        self.directions.len()
    }

    fn combine(start: &Matrix, mats: &[Matrix], theta: &[f64]) -> Matrix {
        let mut out = start.clone();
        for (t, m) in theta.iter().zip(mats) {
            out += m * *t;
        }
        out
    }

    fn q(&self, theta: &[f64]) -> Matrix {
        Self::combine(&self.base, &self.images, theta)
    }

    fn s(&self, theta: &[f64]) -> Matrix {
        let k = self.base.nrows();
        Self::combine(&Matrix::zeros(k, k), &self.directions, theta)
    }

    /// Smallest eigenvalue, the softmin `-tau log sum exp(-lambda_i / tau)`
    /// (concave in `theta`) and its gradient.
    fn softmin(&self, theta: &[f64], tau: f64) -> (f64, f64, Vec<f64>) {
        let (vals, vecs) = linalg::sym_eigen(&self.q(theta));
        let lam0 = vals[0];
        let weights: Vec<f64> = vals.iter().map(|v| (-(v - lam0) / tau).exp()).collect();
        let total: f64 = weights.iter().sum();
        let value = lam0 - tau * total.ln();
        let mut w = Matrix::zeros(vals.len(), vals.len());
        for (i, wi) in weights.iter().enumerate() {
            let e = vecs.column(i);
            w += e * e.transpose() * (wi / total);
        }
        let grad = self.images.iter().map(|l| l.dot(&w)).collect();
        (lam0, value, grad)
    }
}

/// BFGS ascent on the softmin with decreasing temperature. Returns the
/// coordinates with the largest smallest eigenvalue met.
fn maximize_min_eigenvalue(
    fam: &AdmissibleFamily,
    start: Vec<f64>,
    scale: f64,
    iterations: usize,
) -> (f64, Vec<f64>) {
    let k = fam.dim();
    let mut theta = start;
    let mut best = (linalg::min_eigenvalue(&fam.q(&theta)), theta.clone());
    let mut tau = 0.1 * scale;
    let mut budget = iterations;
    while tau > 1e-9 * scale && budget > 0 {
        let mut h = Matrix::identity(k, k);
        let (mut lam, mut f, mut g) = fam.softmin(&theta, tau);
        let per_level = (iterations / 6).max(10).min(budget);
        for _ in 0..per_level {
            budget -= 1;
            if lam > best.0 {
                best = (lam, theta.clone());
            }
            if lam > 1e-6 * scale {
                return best;
            }
            let gv = Vector::from_vec(g.clone());
            if gv.norm() <= 1e-14 * scale {
                break;
            }
            let dir = &h * &gv;
            let dir = if dir.dot(&gv) > 0.0 { dir } else { gv.clone() };
            let slope = dir.dot(&gv);
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<f64> = theta.iter().zip(dir.iter()).map(|(a, b)| a + step * b).collect();
                let (lt, ft, gt) = fam.softmin(&trial, tau);
                if ft >= f + 1e-4 * step * slope {
                    accepted = Some((trial, lt, ft, gt));
                    break;
                }
                step *= 0.5;
            }
            let Some((trial, lt, ft, gt)) = accepted else {
                break;
            };
            let sv = Vector::from_iterator(k, trial.iter().zip(&theta).map(|(a, b)| a - b));
            let yv = Vector::from_iterator(k, g.iter().zip(&gt).map(|(a, b)| b - a));
            // ascent: curvature pair of -F
            let sy = -sv.dot(&yv);
            if sy > 1e-16 {
                let rho = 1.0 / sy;
                let id = Matrix::identity(k, k);
                let left = &id + &sv * yv.transpose() * rho;
                let right = &id + &yv * sv.transpose() * rho;
                h = &left * &h * &right + &sv * sv.transpose() * rho;
            }
            theta = trial;
            lam = lt;
            f = ft;
            g = gt;
        }
        if lam > best.0 {
            best = (lam, theta.clone());
        }
        tau *= 0.2;
    }
    best
}

fn numeric_search(
    sys: &LinearSystem,
    z: &ZDynamics,
    budget: &SearchBudget,
    seed: u64,
) -> Option<ObstructionCertificate> {
    let tol = sys.tolerance();
    let u = admissible_basis(z, tol);
    if u.ncols() == 0 {
        return None;
    }
    let fam = AdmissibleFamily::new(z, &u);
    let scale = linalg::max_abs(&z.q_hat)
        .max(linalg::max_abs(&z.drift))
        .max(z.d.abs())
        .max(1.0);
    let mut settled = None;
    for start in 0..budget.starts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(start as u64);
        let spread = 10f64.powi((start % 4) as i32 - 1) * scale / z.d.abs().max(1e-3);
        let theta0: Vec<f64> = (0..fam.dim())
            .map(|_| if start == 0 { 0.0 } else { rng.gen_range(-spread..spread) })
            .collect();
        let (lam, theta) = maximize_min_eigenvalue(&fam, theta0, scale, budget.iterations);
        if lam < -tol * scale {
            // The smallest eigenvalue is concave in S: two starts reaching the
            // same negative optimum settle the question for this frame.
            if settled.is_some_and(|prev: f64| (prev - lam).abs() <= 1e-6 * scale) {
                return None;
            }
            settled = Some(lam);
            continue;
        }
        let s = fam.s(&theta);
        let s = (&s + s.transpose()) * 0.5;
        let Some(p) = fit_linear_part(z, &s, &u, tol) else {
            continue;
        };
        if let Some(c) = certify(z, s, p, SearchStage::Numeric, tol) {
            if verify_certificate(sys, &c) {
                return Some(c);
            }
        }
    }
    None
}

/// Recomputes everything from `(S, p)` and the certificate's frame:
/// admissibility, `(l', Q')`, positive semidefiniteness, boundedness and
/// `mu`. True iff all agree with the stored values.
pub fn verify_certificate(sys: &LinearSystem, cert: &ObstructionCertificate) -> bool {
    let tol = sys.tolerance();
    if sys.d().abs() <= tol || !cert.mu.is_finite() {
        return false;
    }
    let Ok(z) = z_dynamics_in_frame(sys, &cert.frame) else {
        return false;
    };
    if (z.d - cert.d).abs() > tol * z.d.abs().max(1.0) {
        return false;
    }
    let Ok((l, q)) = change_of_variable(&z, &cert.s, &cert.p, tol) else {
        return false;
    };
    let agree = |a: f64, b: f64| (a - b).abs() <= 1e-8 * a.abs().max(b.abs()).max(1.0);
    if l.len() != cert.lprime.len() || q.shape() != cert.qprime.shape() {
        return false;
    }
    if !l.iter().zip(cert.lprime.iter()).all(|(a, b)| agree(*a, *b))
        || !q.iter().zip(cert.qprime.iter()).all(|(a, b)| agree(*a, *b))
    {
        return false;
    }
    if linalg::min_eigenvalue(&q) < -tol * linalg::max_abs(&q).max(1.0) {
        return false;
    }
    match bounded_below(&l, &q, tol) {
        Some(mu) => agree(mu, cert.mu),
        None => false,
    }
}

/// Determinant of `Q'(s)` along the one-parameter admissible family of an
/// H^1 normal form `(b, d)` with control `X`: `S = diag(0, s)`.
pub fn h1_family_determinant(b: f64, d: f64, s: f64) -> f64 {
    let q11 = 0.5;
    let q12 = 0.5 * s;
    let q22 = 0.5 * b + 0.5 * s * d;
    q11 * q22 - q12 * q12
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{group_exp, AlgebraElement, GroupElement};
    use crate::derivation::{linear_field_eval, Derivation};
    use crate::linalg::DEFAULT_TOLERANCE as TOL;

    fn h1(b: f64, d: f64, f: f64) -> LinearSystem {
        LinearSystem::new(Derivation::h1_normal_form(b, d, f), vec![AlgebraElement::basis_x(1, 0)])
            .unwrap()
    }

    /// Normal form with two decoupled cells: `(b, 1, f)` and `(b2, c2, f2)`.
    pub(crate) fn two_cells(b: f64, f: f64, b2: f64, c2: f64, f2: f64, d: f64) -> LinearSystem {
        let m = Matrix::from_row_slice(
            5,
            5,
            &[
                0., b, 0., 0., 0., //
                1., d, 0., 0., 0., //
                0., 0., 0., b2, 0., //
                0., 0., c2, d, 0., //
                0., f, 0., f2, d,
            ],
        );
        LinearSystem::new(
            Derivation::new(m, TOL).unwrap(),
            vec![AlgebraElement::basis_x(2, 0), AlgebraElement::basis_x(2, 1)],
        )
        .unwrap()
    }

    #[test]
    fn z_dynamics_h1_and_cells() {
        let z = z_dynamics(&h1(0.7, -0.4, 2.0)).unwrap();
        assert_eq!(z.l, Vector::from_vec(vec![0.0, 2.0]));
        assert!(linalg::max_abs(&(&z.q_hat - Matrix::from_diagonal(&Vector::from_vec(vec![0.5, 0.35])))) < 1e-15);
        let z = z_dynamics(&two_cells(0.3, 1.5, -0.2, 2.0, -1.0, 0.6)).unwrap();
        assert_eq!(z.l, Vector::from_vec(vec![0.0, 1.5, 0.0, -1.0]));
        let expected = Matrix::from_diagonal(&Vector::from_vec(vec![0.5, 0.15, 1.0, -0.1]));
        assert!(linalg::max_abs(&(&z.q_hat - expected)) < 1e-15);
        let z = z_dynamics(&LinearSystem::new(Derivation::zero(2), vec![AlgebraElement::basis_x(2, 0)]).unwrap())
            .unwrap();
        assert_eq!(z.l.amax(), 0.0);
        assert_eq!(linalg::max_abs(&z.q_hat), 0.0);
    }

    #[test]
    fn z_dynamics_refuses_central_control() {
        let s = LinearSystem::new(Derivation::zero(1), vec![AlgebraElement::basis_z(1)]).unwrap();
        assert!(matches!(z_dynamics(&s), Err(HeisError::Hypothesis(_))));
    }

    #[test]
    fn z_dynamics_matches_field_in_built_frame() {
        // Control X + Y + Z forces a non-canonical reading frame.
        let s = LinearSystem::new(
            Derivation::h1_normal_form(0.4, 0.9, -1.3),
            vec![AlgebraElement::new(vec![1.0], vec![1.0], 1.0).unwrap()],
        )
        .unwrap();
        let z = z_dynamics(&s).unwrap();
        let moved = change_frame(&s, &z.frame).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let g = GroupElement::new(vec![rng.gen_range(-2.0..2.0)], vec![rng.gen_range(-2.0..2.0)], rng.gen_range(-2.0..2.0))
                .unwrap();
            let field = linear_field_eval(moved.derivation(), &g).unwrap();
            let v = Vector::from_vec(vec![g.x[0], g.y[0]]);
            assert!((field[2] - z.rhs(g.z, &v)).abs() < 1e-10);
        }
    }

    #[test]
    fn bounded_below_examples() {
        let q = Matrix::from_diagonal(&Vector::from_vec(vec![0.5, 0.5]));
        assert_eq!(bounded_below(&Vector::zeros(2), &q, TOL), Some(0.0));
        let mu = bounded_below(&Vector::from_vec(vec![1.0, 0.0]), &q, TOL).unwrap();
        assert!((mu + 0.5).abs() < 1e-14);
        let q = Matrix::from_diagonal(&Vector::from_vec(vec![0.5, 0.0]));
        assert_eq!(bounded_below(&Vector::from_vec(vec![0.0, 1.0]), &q, TOL), None);
        assert!(bounded_below(&Vector::from_vec(vec![3.0, 0.0]), &q, TOL).is_some());
        let q = Matrix::from_diagonal(&Vector::from_vec(vec![0.5, -0.1]));
        assert_eq!(bounded_below(&Vector::zeros(2), &q, TOL), None);
    }

    #[test]
    fn bounded_below_grid_oracle_example() {
        // brute force over [-10, 10]^2 for l = (1, 0), Q = diag(1/2, 1/2)
        let mut best = f64::INFINITY;
        for i in 0..=400 {
            for j in 0..=400 {
                let (a, b) = (-10.0 + 0.05 * i as f64, -10.0 + 0.05 * j as f64);
                best = best.min(a + 0.5 * a * a + 0.5 * b * b);
            }
        }
        assert!((best + 0.5).abs() < 1e-9);
    }

    #[test]
    fn change_of_variable_cases() {
        let z = z_dynamics(&h1(-1.0, 1.0, 0.0)).unwrap();
        let (l, q) = change_of_variable(&z, &Matrix::zeros(2, 2), &Vector::zeros(2), TOL).unwrap();
        assert_eq!(l, z.l);
        assert_eq!(q, z.q_hat);
        let s = 0.8;
        let (_, q) = change_of_variable(&z, &Matrix::from_diagonal(&Vector::from_vec(vec![0.0, s])), &Vector::zeros(2), TOL)
            .unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[0.5, s / 2.0, s / 2.0, s / 2.0 - 0.5]);
        assert!(linalg::max_abs(&(q.clone() - expected)) < 1e-15);
        assert!((q.determinant() - h1_family_determinant(-1.0, 1.0, s)).abs() < 1e-15);
        assert!((q.determinant() + (s * s - s + 1.0) / 4.0).abs() < 1e-15);

        let bad = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.0]));
        assert!(change_of_variable(&z, &bad, &Vector::zeros(2), TOL).is_err());
        assert!(change_of_variable(&z, &Matrix::zeros(2, 2), &Vector::from_vec(vec![1.0, 0.0]), TOL).is_err());
    }

    #[test]
    fn completing_the_square_on_two_cells() {
        let (b, f, c2, b2, f2, d) = (0.3, 0.7, 2.0, 0.1, -0.4, 1.5);
        let z = z_dynamics(&two_cells(b, f, b2, c2, f2, d)).unwrap();
        let mut s = Matrix::zeros(4, 4);
        s[(1, 1)] = d / 2.0;
        s[(3, 3)] = d / (2.0 * c2);
        let (l, q) = change_of_variable(&z, &s, &Vector::zeros(4), TOL).unwrap();
        assert_eq!(l, z.l);
        // (x1 + d y1 / 2)^2 / 2 + (b + d^2/4) y1^2 / 2 + c2 (x2 + d y2 / (2 c2))^2 / 2 + (b2 + d^2 / (4 c2)) y2^2 / 2
        let expected = Matrix::from_row_slice(
            4,
            4,
            &[
                0.5, d / 4.0, 0., 0., //
                d / 4.0, d * d / 8.0 + (b + d * d / 4.0) / 2.0, 0., 0., //
                0., 0., c2 / 2.0, d / 4.0, //
                0., 0., d / 4.0, d * d / (8.0 * c2) + (b2 + d * d / (4.0 * c2)) / 2.0,
            ],
        );
        assert!(linalg::max_abs(&(q - expected)) < 1e-14);
        let mut p = Vector::zeros(4);
        p[1] = 2.0 * f / d;
        let (l2, _) = change_of_variable(&z, &s, &p, TOL).unwrap();
        assert!((l2[0] - 2.0 * f / d).abs() < 1e-14 && (l2[1] - f).abs() < 1e-14);
        assert!((l2[2] - l[2]).abs() < 1e-14 && (l2[3] - l[3]).abs() < 1e-14);
    }

    #[test]
    fn change_of_variable_matches_differentiated_w() {
        let sys = two_cells(0.3, 0.7, 0.1, 2.0, -0.4, 1.5);
        let z = z_dynamics(&sys).unwrap();
        let mut s = Matrix::zeros(4, 4);
        s[(1, 1)] = 0.9;
        s[(1, 3)] = -0.2;
        s[(3, 1)] = -0.2;
        s[(3, 3)] = 0.4;
        let p = Vector::from_vec(vec![0.0, 0.3, 0.0, -1.1]);
        let (l, q) = change_of_variable(&z, &s, &p, TOL).unwrap();
        let w_of = |a: &Vector| {
            let g = group_exp(&AlgebraElement::from_vector(a).unwrap()).to_vector();
            let v = g.rows(0, 4).into_owned();
            g[4] + 0.5 * v.dot(&(&s * &v)) + p.dot(&v)
        };
        let a0 = Vector::from_vec(vec![0.2, -0.3, 0.5, 0.1, 0.4]);
        let h = 1e-5;
        let e = |t: f64| linalg::expm(&(sys.derivation().matrix() * t)) * &a0;
        let dw = (w_of(&e(h)) - w_of(&e(-h))) / (2.0 * h);
        let g0 = group_exp(&AlgebraElement::from_vector(&a0).unwrap()).to_vector();
        let v0 = g0.rows(0, 4).into_owned();
        let expect = z.d * w_of(&a0) + l.dot(&v0) + v0.dot(&(&q * &v0));
        assert!((dw - expect).abs() < 1e-6, "{dw} vs {expect}");
    }

    #[test]
    fn change_of_variable_is_affine() {
        let z = z_dynamics(&two_cells(0.3, 0.7, 0.1, 2.0, -0.4, 1.5)).unwrap();
        let mk = |a: f64, b: f64, c: f64| {
            let mut s = Matrix::zeros(4, 4);
            s[(1, 1)] = a;
            s[(1, 3)] = b;
            s[(3, 1)] = b;
            s[(3, 3)] = c;
            s
        };
        let (s1, s2) = (mk(0.3, -1.0, 2.0), mk(-0.7, 0.4, 0.1));
        let (p1, p2) = (Vector::from_vec(vec![0., 1., 0., 2.]), Vector::from_vec(vec![0., -3., 0., 0.5]));
        let (l1, q1) = change_of_variable(&z, &s1, &p1, TOL).unwrap();
        let (l2, q2) = change_of_variable(&z, &s2, &p2, TOL).unwrap();
        let (l12, q12) = change_of_variable(&z, &(&s1 + &s2), &(&p1 + &p2), TOL).unwrap();
        assert!((l12 - (l1 + l2 - &z.l)).amax() <= 1e-12);
        assert!(linalg::max_abs(&(q12 - (q1 + q2 - &z.q_hat))) <= 1e-12);
    }

    #[test]
    fn search_trivial_certificate() {
        let sys = h1(1.0, 1.0, 0.0);
        let c = search_obstruction(&sys, &SearchBudget::default(), 0).unwrap();
        assert_eq!(c.stage, SearchStage::Trivial);
        assert_eq!(c.mu, 0.0);
        assert_eq!(linalg::max_abs(&c.s), 0.0);
        assert_eq!(c.p.amax(), 0.0);
        assert!(verify_certificate(&sys, &c));
    }

    #[test]
    fn search_finds_nothing_for_controllable_h1() {
        let budget = SearchBudget { starts: 8, iterations: 200 };
        assert!(search_obstruction(&h1(-1.0, 1.0, 0.0), &budget, 3).is_none());
    }

    #[test]
    fn search_complete_square_stage() {
        // slightly negative b on both cells: Q is indefinite, the completed square is not
        let sys = two_cells(-0.1, 0.5, -0.05, 1.0, 0.3, 1.0);
        let c = search_obstruction(&sys, &SearchBudget::default(), 0).unwrap();
        assert!(verify_certificate(&sys, &c));
        assert_ne!(c.stage, SearchStage::Trivial);
    }

    #[test]
    fn equality_case_needs_linear_fix() {
        // b = -d^2/4 on both cells (c = 1): the completed square is singular,
        // and f must be moved by p_y = 2f/d.
        let d = 1.0;
        let sys = two_cells(-0.25, 0.8, -0.25, 1.0, -0.6, d);
        let c = search_obstruction(&sys, &SearchBudget::default(), 0).unwrap();
        assert_eq!(c.stage, SearchStage::CompleteSquare);
        assert!((c.p[1] - 1.6).abs() < 1e-9 && (c.p[3] + 1.2).abs() < 1e-9);
    }

    #[test]
    fn verify_rejects_tampering() {
        let sys = h1(1.0, 1.0, 0.0);
        let c = search_obstruction(&sys, &SearchBudget::default(), 0).unwrap();
        let mut bad = c.clone();
        bad.s[(0, 0)] = 0.5;
        assert!(!verify_certificate(&sys, &bad));
        let mut bad = c.clone();
        bad.mu = -1.0;
        assert!(!verify_certificate(&sys, &bad));
        let mut bad = c;
        bad.qprime[(1, 1)] = -0.5;
        assert!(!verify_certificate(&sys, &bad));
    }
}
