//! Linear control systems `g' = X(g) + sum_j u_j B_j(g)` on H^n and their
//! algebraic predicates.

use crate::algebra::{
    build_frame, complete_symplectic_basis, form, is_automorphism, AlgebraElement,
    CompletionMode, SymplecticFrame,
};
use crate::derivation::Derivation;
use crate::error::{check_dim, HeisError, Result};
use crate::linalg::{self, Matrix, Subspace, Vector, DEFAULT_TOLERANCE};

/// A linear system: derivation plus right-invariant control directions,
/// all expressed in `frame`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    derivation: Derivation,
    controls: Vec<AlgebraElement>,
    frame: SymplecticFrame,
    tolerance: f64,
}

impl LinearSystem {
    pub fn new(derivation: Derivation, controls: Vec<AlgebraElement>) -> Result<Self> {
        let n = derivation.n();
        Self::with_frame(derivation, controls, SymplecticFrame::canonical(n), DEFAULT_TOLERANCE)
    }

    pub fn with_frame(
        derivation: Derivation,
        controls: Vec<AlgebraElement>,
        frame: SymplecticFrame,
        tolerance: f64,
    ) -> Result<Self> {
        if controls.is_empty() {
            return Err(HeisError::InvalidArgument("at least one control is required".into()));
        }
        let n = derivation.n();
        for c in &controls {
            check_dim(n, c.n())?;
        }
        check_dim(n, frame.n())?;
        if !(tolerance > 0.0) {
            return Err(HeisError::InvalidArgument("tolerance must be positive".into()));
        }
        Ok(Self {
            derivation,
            controls,
            frame,
            tolerance,
        })
    }

    /// Convenience constructor from raw coordinates (interleaved order).
    pub fn from_raw(matrix: Matrix, controls: &[Vec<f64>], tolerance: f64) -> Result<Self> {
        let derivation = Derivation::new(matrix, tolerance)?;
        let n = derivation.n();
        let controls = controls
            .iter()
            .map(|c| {
                check_dim(2 * n + 1, c.len())?;
                AlgebraElement::from_slice(c)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_frame(derivation, controls, SymplecticFrame::canonical(n), tolerance)
    }

    pub fn n(&self) -> usize {
        self.derivation.n()
    }

    pub fn dim(&self) -> usize {
        2 * self.n() + 1
    }

    pub fn m(&self) -> usize {
        self.controls.len()
    }

    pub fn derivation(&self) -> &Derivation {
        &self.derivation
    }

    pub fn controls(&self) -> &[AlgebraElement] {
        &self.controls
    }

    pub fn frame(&self) -> &SymplecticFrame {
        &self.frame
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn d(&self) -> f64 {
        self.derivation.d()
    }

    pub fn control_vectors(&self) -> Vec<Vector> {
        self.controls.iter().map(|c| c.to_vector()).collect()
    }

    pub(crate) fn z_vector(&self) -> Vector {
        let mut z = Vector::zeros(self.dim());
        z[2 * self.n()] = 1.0;
        z
    }

    /// Same system with the controls replaced.
    pub fn with_controls(&self, controls: Vec<AlgebraElement>) -> Result<Self> {
        Self::with_frame(
            self.derivation.clone(),
            controls,
            self.frame.clone(),
            self.tolerance,
        )
    }

    /// Greedy maximal linearly independent subfamily of the controls, in
    /// declaration order. Unbounded inputs make the two systems equivalent.
    pub fn independent_controls(&self) -> Vec<AlgebraElement> {
        let mut kept: Vec<Vector> = Vec::new();
        let mut out = Vec::new();
        for c in &self.controls {
            let v = c.to_vector();
            let mut trial = kept.clone();
            trial.push(v.clone());
            if linalg::rank(&linalg::columns(self.dim(), &trial), self.tolerance) == trial.len() {
                kept = trial;
                out.push(c.clone());
            }
        }
        out
    }

    pub fn controls_independent(&self) -> bool {
        linalg::rank(
            &linalg::columns(self.dim(), &self.control_vectors()),
            self.tolerance,
        ) == self.m()
    }

    /// True iff every pair of controls commutes.
    pub fn controls_commute(&self) -> bool {
        let vs = self.control_vectors();
        pairwise_brackets_vanish(&vs, self.tolerance)
    }
}

fn pairwise_brackets_vanish(vs: &[Vector], tol: f64) -> bool {
    for i in 0..vs.len() {
        for j in (i + 1)..vs.len() {
            let s = vs[i].norm().max(1.0) * vs[j].norm().max(1.0);
            if form(&vs[i], &vs[j]).abs() > tol * s {
                return false;
            }
        }
    }
    true
}

/// Subalgebra generated by the controls: their span, plus the center as soon
/// as one bracket is nonzero (the algebra is 2-step nilpotent).
pub fn system_subalgebra_h(sys: &LinearSystem) -> Subspace {
    let tol = sys.tolerance;
    let vs = sys.control_vectors();
    let span = Subspace::span(sys.dim(), &vs, tol);
    if pairwise_brackets_vanish(&vs, tol) {
        span
    } else {
        span.with(&[sys.z_vector()], tol)
    }
}

/// Lie algebra generated by the smallest D-invariant subspace containing the
/// controls.
pub fn zero_time_ideal(sys: &LinearSystem) -> Subspace {
    let tol = sys.tolerance;
    let dv = Subspace::span(sys.dim(), &sys.control_vectors(), tol)
        .invariant_closure(sys.derivation.matrix(), tol);
    if pairwise_brackets_vanish(&dv.vectors(), tol) {
        dv
    } else {
        dv.with(&[sys.z_vector()], tol)
    }
}

pub fn rank_condition(sys: &LinearSystem) -> bool {
    zero_time_ideal(sys).dim() == sys.dim()
}

pub fn ad_rank_condition(sys: &LinearSystem) -> bool {
    system_subalgebra_h(sys)
        .invariant_closure(sys.derivation.matrix(), sys.tolerance)
        .dim()
        == sys.dim()
}

pub fn is_singular(sys: &LinearSystem) -> bool {
    sys.d().abs() <= sys.tolerance
}

/// Classical linear system induced on H^n / center.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientSystem {
    /// `2n x 2n` drift.
    pub drift: Matrix,
    /// `2n x m` control directions.
    pub inputs: Matrix,
}

impl QuotientSystem {
    /// Rank of `[B, MB, ..., M^{2n-1} B]`.
    pub fn kalman_rank(&self, tol: f64) -> usize {
        let k = self.drift.nrows();
        let m = self.inputs.ncols();
        let mut blocks = Matrix::zeros(k, k * m);
        let mut cur = self.inputs.clone();
        for p in 0..k {
            blocks.view_mut((0, p * m), (k, m)).copy_from(&cur);
            cur = &self.drift * cur;
        }
        linalg::rank(&blocks, tol)
    }
}

pub fn quotient_system(sys: &LinearSystem) -> QuotientSystem {
    let n2 = 2 * sys.n();
    let mut inputs = Matrix::zeros(n2, sys.m());
    for (j, c) in sys.control_vectors().iter().enumerate() {
        inputs.set_column(j, &c.rows(0, n2));
    }
    QuotientSystem {
        drift: sys.derivation.quotient_block(),
        inputs,
    }
}

/// Equivalent system under the automorphism `p`: derivation `p D p^-1`,
/// controls `p B_j`, frame composed with `p^-1`.
pub fn transform_system(sys: &LinearSystem, p: &Matrix) -> Result<LinearSystem> {
    if p.nrows() != sys.dim() || !is_automorphism(p, sys.tolerance) {
        return Err(HeisError::NotAutomorphism);
    }
    let p_inv = p.clone().try_inverse().ok_or(HeisError::NotAutomorphism)?;
    let derivation = sys.derivation.conjugate(p, &p_inv);
    let controls = sys
        .control_vectors()
        .iter()
        .map(|b| AlgebraElement::from_vector(&(p * b)))
        .collect::<Result<Vec<_>>>()?;
    let frame = sys.frame.compose(&p_inv)?;
    LinearSystem::with_frame(derivation, controls, frame, sys.tolerance)
}

/// Re-expresses the system in `frame` (columns given in the system's
/// current coordinates).
pub fn change_frame(sys: &LinearSystem, frame: &SymplecticFrame) -> Result<LinearSystem> {
    let p = frame
        .columns()
        .clone()
        .try_inverse()
        .ok_or(HeisError::NotAutomorphism)?;
    transform_system(sys, &p)
}

/// Parameters of the one-input normal form on H^1.
#[derive(Debug, Clone, PartialEq)]
pub struct H1NormalForm {
    pub b: f64,
    pub d: f64,
    pub f: f64,
    /// Columns `(B, DB, [B, DB])` in the system's coordinates.
    pub frame: SymplecticFrame,
}

/// Normal form `[[0, b, 0], [1, d, 0], [0, f, d]]` of a one-input system on
/// H^1 satisfying the rank condition, in the frame `(B, DB, [B, DB])`.
pub fn normal_form_h1(sys: &LinearSystem) -> Result<H1NormalForm> {
    if sys.n() != 1 || sys.m() != 1 {
        return Err(HeisError::InvalidArgument(
            "the H^1 normal form needs n = 1 and a single control".into(),
        ));
    }
    if !rank_condition(sys) {
        return Err(HeisError::RankCondition);
    }
    let b = sys.control_vectors().remove(0);
    let db = sys.derivation.apply(&b);
    let frame = build_pair_frame(&b, &db, sys.tolerance)?;
    let moved = change_frame(sys, &frame)?;
    let m = moved.derivation.matrix();
    Ok(H1NormalForm {
        b: m[(0, 1)],
        d: m[(2, 2)],
        f: m[(2, 1)],
        frame,
    })
}

fn build_pair_frame(x: &Vector, y: &Vector, tol: f64) -> Result<SymplecticFrame> {
    let xs = AlgebraElement::from_vector(x)?;
    let ys = AlgebraElement::from_vector(y)?;
    complete_symplectic_basis(&[xs, ys], CompletionMode::Pair, tol).map_err(|e| match e {
        HeisError::Hypothesis(_) => HeisError::Hypothesis("[B, DB] = 0".into()),
        other => other,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum CellShape {
    /// `DB_j` lies outside `span{B_j, Z}`; the cell is `span{B_j, DB_j, Z}`.
    Regular { decoupled: bool },
    /// `DB_j` lies in `span{B_j, Z}`.
    Degenerate,
}

fn check_commuting_family(sys: &LinearSystem) -> Result<()> {
    if !sys.controls_commute() {
        return Err(HeisError::Hypothesis("non-commuting controls".into()));
    }
    if sys.m() > sys.n() {
        return Err(HeisError::Hypothesis(format!(
            "{} controls cannot all be placed as X_i in h^{}",
            sys.m(),
            sys.n()
        )));
    }
    Ok(())
}

fn cell_shapes(sys: &LinearSystem) -> Vec<CellShape> {
    let tol = sys.tolerance;
    let dm = sys.derivation.matrix();
    let scale = linalg::max_abs(dm).max(1.0);
    let bs = sys.control_vectors();
    let z = sys.z_vector();
    bs.iter()
        .enumerate()
        .map(|(j, b)| {
            let db = dm * b;
            let base = Subspace::span(sys.dim(), &[b.clone(), z.clone()], tol);
            if base.distance(&db) <= tol * scale * b.norm().max(1.0) {
                return CellShape::Degenerate;
            }
            let cell = base.with(&[db.clone()], tol);
            let invariant = cell.distance(&(dm * &db)) <= tol * scale * db.norm().max(1.0);
            let orthogonal = bs.iter().enumerate().all(|(i, bi)| {
                i == j || form(bi, &db).abs() <= tol * scale * bi.norm().max(1.0) * b.norm()
            });
            CellShape::Regular {
                decoupled: invariant && orthogonal,
            }
        })
        .collect()
}

/// Indices (0-based) of the decoupled cells.
///
/// Cell `j` is decoupled when some symplectic frame with `B_i = X_i` makes
/// `span{B_j, Y_j, Z}` D-invariant. When `DB_j` is not in `span{B_j, Z}` the
/// only candidate is `span{B_j, DB_j, Z}`, which keeps the answer independent
/// of the completion chosen for the other partners; otherwise the min-norm
/// completion is tested directly.
pub fn detect_decoupled_cells(sys: &LinearSystem) -> Result<Vec<usize>> {
    check_commuting_family(sys)?;
    let shapes = cell_shapes(sys);
    let mut fallback: Option<(Matrix, Matrix)> = None;
    let mut out = Vec::new();
    for (j, shape) in shapes.iter().enumerate() {
        let decoupled = match shape {
            CellShape::Regular { decoupled } => *decoupled,
            CellShape::Degenerate => {
                if fallback.is_none() {
                    let frame = complete_symplectic_basis(
                        sys.controls(),
                        CompletionMode::CommutingFamily,
                        sys.tolerance,
                    )?;
                    let inv = frame
                        .columns()
                        .clone()
                        .try_inverse()
                        .ok_or(HeisError::NotAutomorphism)?;
                    fallback = Some((frame.columns().clone(), inv));
                }
                let (f, inv) = fallback.as_ref().expect("set above");
                let local = inv * sys.derivation.matrix() * f;
                column_supported_on_cell(&local, sys.n(), j, sys.tolerance)
            }
        };
        if decoupled {
            out.push(j);
        }
    }
    Ok(out)
}

fn column_supported_on_cell(m: &Matrix, n: usize, j: usize, tol: f64) -> bool {
    let scale = linalg::max_abs(m).max(1.0);
    let keep = [2 * j, 2 * j + 1, 2 * n];
    [2 * j, 2 * j + 1].iter().all(|&c| {
        (0..=2 * n)
            .filter(|r| !keep.contains(r))
            .all(|r| m[(r, c)].abs() <= tol * scale)
    })
}

/// Invariants of a decoupled cell, whose restriction reads
/// `[[0, b, 0], [c, d, 0], [0, f, d]]` in the normal-form frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellParams {
    /// 0-based control index.
    pub index: usize,
    pub b: f64,
    pub c: f64,
    pub f: f64,
}

/// Normal form for systems with decoupled cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoupledNormalForm {
    pub d: f64,
    /// One entry per requested cell; the first has `c = 1`.
    pub cells: Vec<CellParams>,
    /// Frame (in the system's coordinates) with `B_i = X_i` and, for each
    /// decoupled cell, `Y_j` proportional to `DB_j`.
    pub frame: SymplecticFrame,
    /// Derivation matrix in `frame`.
    pub matrix: Matrix,
}

/// Builds a frame with `X_i = B_i`, `Y_j = DB_j / c_j` for decoupled cells,
/// then rescales the center by the first cell's `c` so that it becomes 1.
pub fn normal_form_decoupled(sys: &LinearSystem, cells: &[usize]) -> Result<DecoupledNormalForm> {
    check_commuting_family(sys)?;
    if cells.is_empty() {
        return Err(HeisError::InvalidArgument("no decoupled cells given".into()));
    }
    let tol = sys.tolerance;
    let n = sys.n();
    let shapes = cell_shapes(sys);
    let bs = sys.control_vectors();
    let dm = sys.derivation.matrix();
    let mut pinned: Vec<Option<Vector>> = vec![None; sys.m()];
    let mut raw_c = Vec::with_capacity(cells.len());
    for &j in cells {
        match shapes.get(j) {
            Some(CellShape::Regular { decoupled: true }) => {}
            Some(CellShape::Degenerate) => {
                return Err(HeisError::Hypothesis(format!(
                    "cell {} fails the rank condition (c = 0)",
                    j + 1
                )))
            }
            _ => {
                return Err(HeisError::Hypothesis(format!("cell {} is not decoupled", j + 1)))
            }
        }
        let db = dm * &bs[j];
        let c = form(&bs[j], &db);
        pinned[j] = Some(&db / c);
        raw_c.push(c);
    }
    let frame = build_frame(n, &bs, &pinned, 1.0, tol)?;
    let c1 = raw_c[0];
    let mut cols = frame.columns().clone();
    for i in 0..n {
        let scaled = cols.column(2 * i + 1) * c1;
        cols.set_column(2 * i + 1, &scaled);
    }
    cols[(2 * n, 2 * n)] *= c1;
    let frame = SymplecticFrame::from_columns(cols)?;
    let moved = change_frame(sys, &frame)?;
    let matrix = moved.derivation.matrix().clone();
    let params = cells
        .iter()
        .map(|&j| CellParams {
            index: j,
            b: matrix[(2 * j, 2 * j + 1)],
            c: matrix[(2 * j + 1, 2 * j)],
            f: matrix[(2 * n, 2 * j + 1)],
        })
        .collect();
    Ok(DecoupledNormalForm {
        d: matrix[(2 * n, 2 * n)],
        cells: params,
        frame,
        matrix,
    })
}
