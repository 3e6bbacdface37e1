//! Smooth barycentric weights on convex polytopes, their calculus, and the
//! factorizations and monotone finite-difference stencils built from them.
//!
//! The weights `p_1..p_n` at a point `x` of a polytope with vertices
//! `a_1..a_n` are the unique positive coefficients maximizing
//! `U(x) = sum_k ln p_k` subject to `sum_k p_k = 1` and
//! `sum_k p_k a_k = x`. They are smooth in the interior, extend Lipschitz
//! continuously to the closure, and composing them with a smooth
//! polytope-valued field yields coefficients whose square roots are
//! Lipschitz — the property that makes fixed-direction, monotone
//! finite-difference schemes possible for degenerate operators.

pub mod calculus;
pub mod error;
pub mod geometry;
pub mod lp;
pub mod matrix;
pub mod solver;
pub mod stencil;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::{build_polytope, make_box, make_polygon, make_simplex, Facet, Polytope};
pub use solver::{
    barrier_value, batch_solve, solve_weights, weights_on_closure, SolverOptions, WeightSolution,
};
pub use calculus::{differentiate, WeightDerivatives};
pub use matrix::{
    build_matrix_polytope, dd_trace1_polytope, factorize_field, factorize_point, Factorization,
    MatrixPolytopeModel, SymmetricEmbedding,
};
pub use stencil::{apply_stencil, build_stencil, stencil_at, StencilSpec};
pub use verify::{verify_polytope, VerificationReport};
