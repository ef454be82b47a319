#![allow(dead_code)]

use heis_core::{
    complete_symplectic_basis, AlgebraElement, CompletionMode, Derivation, LinearSystem, Matrix,
    Provenance, DEFAULT_TOLERANCE,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = DEFAULT_TOLERANCE;

pub fn x(n: usize, i: usize) -> AlgebraElement {
    AlgebraElement::basis_x(n, i)
}

pub fn y(n: usize, i: usize) -> AlgebraElement {
    AlgebraElement::basis_y(n, i)
}

pub fn h1(b: f64, d: f64, f: f64) -> LinearSystem {
    LinearSystem::new(Derivation::h1_normal_form(b, d, f), vec![x(1, 0)]).unwrap()
}

/// Two decoupled cells in normal form: `(b, 1, f)` and `(b2, c2, f2)`,
/// controls `X_1, X_2`.
pub fn two_cells(b: f64, f: f64, b2: f64, c2: f64, f2: f64, d: f64) -> LinearSystem {
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
    LinearSystem::new(Derivation::new(m, TOL).unwrap(), vec![x(2, 0), x(2, 1)]).unwrap()
}

/// Coupled H^2 derivation with diagonal blocks `[[a, b], [c, d - a]]`,
/// `A_21 = diag(p, q)`, `A_12 = -adj(A_21)` and center row `row`.
pub fn coupled(cell1: [f64; 3], cell2: [f64; 3], (p, q): (f64, f64), d: f64, row: [f64; 4]) -> Derivation {
    let [a1, b1, c1] = cell1;
    let [a2, b2, c2] = cell2;
    let m = Matrix::from_row_slice(
        5,
        5,
        &[
            a1, b1, -q, 0., 0., //
            c1, d - a1, 0., -p, 0., //
            p, 0., a2, b2, 0., //
            0., q, c2, d - a2, 0., //
            row[0], row[1], row[2], row[3], d,
        ],
    );
    Derivation::new(m, TOL).unwrap()
}

/// DX1 = Y1 + Y2, DY1 = X1 + X2.
pub fn spreading() -> Derivation {
    let m = Matrix::from_row_slice(
        5,
        5,
        &[
            0., 1., 0., 1., 0., //
            1., 0., 1., 0., 0., //
            0., 1., 0., 0., 0., //
            1., 0., 0., 0., 0., //
            0., 0., 0., 0., 0.,
        ],
    );
    Derivation::new(m, TOL).unwrap()
}

pub fn rank_fail() -> LinearSystem {
    let m = Matrix::from_row_slice(3, 3, &[1., 0., 0., 0., 0., 0., 1., 0., 1.]);
    LinearSystem::new(Derivation::new(m, TOL).unwrap(), vec![x(1, 0)]).unwrap()
}

/// One system per provenance class.
pub fn battery() -> Vec<(&'static str, LinearSystem, Provenance)> {
    vec![
        ("rank failure", rank_fail(), Provenance::RankFail),
        ("H1 (-1, 0, 0)", h1(-1.0, 0.0, 0.0), Provenance::Thm2),
        (
            "coupled regular, positive form",
            LinearSystem::new(coupled([0., 1., 1.], [0., 1., 1.], (1., 0.), 1.0, [0.0; 4]), vec![x(2, 0)]).unwrap(),
            Provenance::Thm45Certificate,
        ),
        (
            "coupled singular",
            LinearSystem::new(coupled([0., 1., 1.], [0., 1., 1.], (1., 0.), 0.0, [0., 1., 0., 0.]), vec![x(2, 0)]).unwrap(),
            Provenance::Thm6,
        ),
        (
            "X1, Y1 in H2",
            LinearSystem::new(spreading(), vec![x(2, 0), y(2, 0)]).unwrap(),
            Provenance::Thm7,
        ),
        (
            "X1, Y1, X2 in H2",
            LinearSystem::new(spreading(), vec![x(2, 0), y(2, 0), x(2, 1)]).unwrap(),
            Provenance::Cor1,
        ),
        ("controllable cell", two_cells(-1.0, 0.0, 0.0, 1.0, 0.0, 0.0), Provenance::Thm8),
        ("opposite signs", two_cells(0.0, 0.0, 0.0, -1.0, 0.0, 0.0), Provenance::Thm9Thm10),
        ("same signs", two_cells(0.0, 0.0, 0.0, 1.0, 0.0, 0.0), Provenance::Thm10),
        (
            "coupled regular, rotating",
            LinearSystem::new(coupled([0., -2., -2.], [0., 1., -2.], (1., 0.), 1.0, [0.0; 4]), vec![x(2, 0)]).unwrap(),
            Provenance::ConjectureOnly,
        ),
    ]
}

/// Random automorphism: a symplectic completion of a random pair, then a
/// random shear of the non-central columns along the center. Badly
/// conditioned draws are rejected.
pub fn random_automorphism(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let dim = 2 * n + 1;
    loop {
        let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pair = [
            AlgebraElement::from_slice(&a).unwrap(),
            AlgebraElement::from_slice(&b).unwrap(),
        ];
        let Ok(frame) = complete_symplectic_basis(&pair, CompletionMode::Pair, TOL) else {
            continue;
        };
        let mut p = frame.columns().clone();
        let zcol = p.column(dim - 1).into_owned();
        for k in 0..dim - 1 {
            let s = rng.gen_range(-1.0..1.0);
            let col = p.column(k) + &zcol * s;
            p.set_column(k, &col);
        }
        let sv = p.singular_values();
        if sv.max() / sv.min() <= 1e3 {
            return p;
        }
    }
}

pub fn uniform(rng: &mut ChaCha8Rng, k: usize, r: f64) -> Vec<f64> {
    (0..k).map(|_| rng.gen_range(-r..r)).collect()
}

/// Random matrix satisfying the block conditions, entries in `[-r, r]`.
pub fn random_structural(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Matrix {
    let dim = 2 * n + 1;
    let mut m = Matrix::zeros(dim, dim);
    let d = rng.gen_range(-r..r);
    m[(2 * n, 2 * n)] = d;
    for k in 0..2 * n {
        m[(2 * n, k)] = rng.gen_range(-r..r);
    }
    for i in 0..n {
        let a = rng.gen_range(-r..r);
        m[(2 * i, 2 * i)] = a;
        m[(2 * i + 1, 2 * i + 1)] = d - a;
        m[(2 * i, 2 * i + 1)] = rng.gen_range(-r..r);
        m[(2 * i + 1, 2 * i)] = rng.gen_range(-r..r);
        for j in 0..i {
            // lower block A_ij, upper block A_ji = -adj(A_ij)
            let (p, q, s, t) = (
                rng.gen_range(-r..r),
                rng.gen_range(-r..r),
                rng.gen_range(-r..r),
                rng.gen_range(-r..r),
            );
            m[(2 * i, 2 * j)] = p;
            m[(2 * i, 2 * j + 1)] = q;
            m[(2 * i + 1, 2 * j)] = s;
            m[(2 * i + 1, 2 * j + 1)] = t;
            m[(2 * j, 2 * i)] = -t;
            m[(2 * j, 2 * i + 1)] = q;
            m[(2 * j + 1, 2 * i)] = s;
            m[(2 * j + 1, 2 * i + 1)] = -p;
        }
    }
    m
}
