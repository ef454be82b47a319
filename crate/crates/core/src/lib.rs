//! Controllability analysis for linear control systems on Heisenberg groups.

pub mod algebra;
pub mod decide;
pub mod derivation;
pub mod error;
pub mod linalg;
pub mod obstruct;
pub mod sim;
pub mod system;

pub use algebra::{
    bracket, complete_symplectic_basis, group_exp, group_log, group_multiply, is_automorphism,
    is_symplectic_frame, symplectic_form, AlgebraElement, CompletionMode, GroupElement,
    SymplecticFrame,
};
pub use derivation::{
    derivation_d, flow_on_exponentials, is_derivation, linear_field_eval, Derivation,
};
pub use error::{HeisError, Result};
pub use linalg::{Matrix, Subspace, Vector, DEFAULT_TOLERANCE};
pub use system::{
    ad_rank_condition, detect_decoupled_cells, is_singular, normal_form_decoupled,
    normal_form_h1, quotient_system, rank_condition, system_subalgebra_h, transform_system,
    CellParams, DecoupledNormalForm, H1NormalForm, LinearSystem, QuotientSystem,
};
pub use obstruct::{
    bounded_below, change_of_variable, complete_square, search_obstruction, verify_certificate, z_dynamics,
    ObstructionCertificate, SearchBudget, SearchStage, ZDynamics,
};
pub use decide::{
    cell_controllable, decide, decide_with, explain, DecideOptions, Outcome, Provenance, Verdict,
};
pub use sim::{
    check_hyperplane, controlled_field, coverage, integrate, integrate_in, sample_reachable,
    sample_signal, ControlSignal,
    Coverage, Direction, SampleOptions, Trajectory,
};
