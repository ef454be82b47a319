//! Fixture systems shared by the benchmarks.

use heis_core::{AlgebraElement, Derivation, LinearSystem, Matrix, DEFAULT_TOLERANCE};

pub fn h1(b: f64, d: f64, f: f64) -> LinearSystem {
    LinearSystem::new(Derivation::h1_normal_form(b, d, f), vec![AlgebraElement::basis_x(1, 0)])
        .expect("normal form is valid")
}

/// One-input system on H^2 whose cells are coupled, so deciding it runs the
/// obstruction search.
pub fn coupled_h2() -> LinearSystem {
    let m = Matrix::from_row_slice(
        5,
        5,
        &[
            0., -2., 0., 0., 0., //
            -2., 1., 0., -1., 0., //
            1., 0., 0., 1., 0., //
            0., 0., -2., 1., 0., //
            0., 0., 0., 0., 1.,
        ],
    );
    let d = Derivation::new(m, DEFAULT_TOLERANCE).expect("valid derivation");
    LinearSystem::new(d, vec![AlgebraElement::basis_x(2, 0)]).expect("valid system")
}

/// Two decoupled cells with invariants of one sign and `d = 1`.
pub fn two_cells_regular() -> LinearSystem {
    let m = Matrix::from_row_slice(
        5,
        5,
        &[
            0., 0., 0., 0., 0., //
            1., 1., 0., 0., 0., //
            0., 0., 0., 0., 0., //
            0., 0., 1., 1., 0., //
            0., 0., 0., 0., 1.,
        ],
    );
    let d = Derivation::new(m, DEFAULT_TOLERANCE).expect("valid derivation");
    LinearSystem::new(d, vec![AlgebraElement::basis_x(2, 0), AlgebraElement::basis_x(2, 1)])
        .expect("valid system")
}
