use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("need at least 2 distinct vertices, got {0}")]
    TooFewVertices(usize),

    #[error("facet {facet} is violated by vertex {vertex}: slack {slack:.3e}")]
    FacetViolated {
        facet: usize,
        vertex: usize,
        slack: f64,
    },

    #[error("facet {facet} is not supported by the vertex set (max slack {slack:.3e})")]
    FacetNotTight { facet: usize, slack: f64 },

    #[error("vertex {vertex} lies on only {active} facets (need at least {needed}); it is interior to the hull of the others")]
    InteriorVertex {
        vertex: usize,
        active: usize,
        needed: usize,
    },

    #[error("polytope has no facet data; this operation requires facets")]
    FacetsMissing,

    #[error("polygon input is not convex")]
    NonConvexPolygon,

    #[error("point is outside the polytope (worst facet slack {0:.3e})")]
    PointOutside(f64),

    #[error("direction vector is zero")]
    ZeroDirection,

    #[error("ray never exits through a known facet; facet list is incomplete or the polytope is unbounded")]
    RayUnbounded,

    #[error("Newton solve did not converge in {iterations} iterations (residual {residual:.3e}); the point may be outside or too close to the boundary")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("dual Jacobian is numerically singular; vertex configuration is degenerate")]
    SingularJacobian,

    #[error("point is effectively on the boundary (min weight {0:.3e}); use weights_on_closure")]
    EffectivelyBoundary(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("representation coefficients violate their constraints: {0}")]
    BadRepresentation(String),

    #[error("matrix is not symmetric (asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semidefinite (eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("unsupported matrix dimension {0} (supported: 2, 3)")]
    UnsupportedMatrixDim(usize),

    #[error("claimed vertex {0} failed the LP extremality certificate")]
    NotExtreme(usize),

    #[error("field sample {index} lies outside the polytope{detail}")]
    SampleOutside { index: usize, detail: String },

    #[error("step size must be positive, got {0}")]
    BadStep(f64),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
