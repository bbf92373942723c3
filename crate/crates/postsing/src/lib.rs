//! Builds transcendental meromorphic functions with prescribed postsingular
//! dynamics, up to an epsilon perturbation of the prescribed point set.
//!
//! Given a finite point set `S`, a self-map `h` on `S` and a budget `eps`,
//! the pipeline
//!
//! 1. normalizes the input so that -1 and 1 belong to `S` ([`spec`]),
//! 2. builds a thin disk-and-tube domain `W` around the points and a
//!    bounded-geometry graph `G` inside it, plus a comb graph in the
//!    complement `V` ([`domain`], [`graph`]),
//! 3. assembles a quasiregular model `g` from per-component conformal maps
//!    glued with explicit quasiconformal interpolations ([`conformal`],
//!    [`qc`], [`model`]),
//! 4. solves the Beltrami equation for the correction `phi` with
//!    `phi(z) = z + O(1/z)` ([`beltrami`]),
//! 5. iterates the critical-value parameters until `phi` fixes them
//!    ([`fixpoint`]), and
//! 6. verifies that `f = eta . g . phi^-1` realizes the prescribed dynamics
//!    and emits reports and figures ([`report`]).
//!
//! The crate-level examples (`cargo run --example ...`) each exercise one
//! stage in isolation; the `postsing` binary drives the whole pipeline.

pub mod beltrami;
pub mod conformal;
pub mod domain;
pub mod field;
pub mod fixpoint;
pub mod graph;
pub mod model;
pub mod qc;
pub mod report;
pub mod spec;

pub use num_complex::Complex64;

/// Shorthand used throughout the crate.
pub type C = Complex64;

/// Crate-wide error type. Each stage surfaces its contract violations as a
/// dedicated variant so the CLI can map them onto exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    // spec
    #[error("need at least 4 distinct finite points, got {0}")]
    TooFewPoints(usize),
    #[error("could not place two points at -1,1 with a third inside the unit disk")]
    CollinearDegenerate,
    // field
    #[error("Jacobian degenerate on {0:.3}% of unmasked samples")]
    DegenerateJacobian(f64),
    #[error("point {0} outside the sampling window")]
    OutOfWindow(C),
    // domain / graph
    #[error("area budget infeasible: radius {0:.3e} underflows 1e-9 (delta too small)")]
    BudgetInfeasible(f64),
    #[error("component labeling conflict: {0}")]
    LabelingConflict(String),
    #[error("partition not quasisymmetric: adjacent ratio {0:.1} exceeds {1}")]
    NotQuasisymmetric(f64, f64),
    // conformal
    #[error("conformal map composition did not converge: {0}")]
    NonConvergent(String),
    // qc
    #[error("input outside the domain of {0}")]
    DomainViolation(&'static str),
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("tau condition violated: side image length {0:.6} < pi*(1-tol)")]
    TauViolation(f64),
    #[error("vertex parity labels cannot alternate along the boundary")]
    ParityConflict,
    // model
    #[error("model discontinuous across an edge: max sphere jump {0:.3e} at edge {1}")]
    ContinuityFailure(f64, usize),
    #[error("sup |mu| = {0:.4} exceeds the 0.95 cap")]
    DilatationOverflow(f64),
    // beltrami
    #[error("Neumann iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("Beltrami residual {0:.3e} exceeds 1e-3 * sup|mu|")]
    ResidualTooLarge(f64),
    #[error("Newton inversion failed near {0}")]
    InversionFailure(C),
    // fixpoint
    #[error("candidate left its disk by {0:.3e} (>= 1e-9): radius calibration is off")]
    SelfMapViolation(f64),
    #[error("radius calibration failed after {0} delta retries")]
    CalibrationFailure(usize),
    #[error("no fixpoint within iteration budget; best residual {0:.3e}")]
    NoFixpointFound(f64),
    // report
    #[error("verification failed: clauses {0:?} violated")]
    VerificationFailure(Vec<char>),
    // io / config
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Chordal (sphere) distance between two extended complex values, where
/// `None` stands for the point at infinity.
pub fn sphere_dist(a: Option<C>, b: Option<C>) -> f64 {
    match (a, b) {
        (None, None) => 0.0,
        (Some(a), None) | (None, Some(a)) => 2.0 / (1.0 + a.norm_sqr()).sqrt(),
        (Some(a), Some(b)) => {
            2.0 * (a - b).norm() / ((1.0 + a.norm_sqr()).sqrt() * (1.0 + b.norm_sqr()).sqrt())
        }
    }
}

/// Composition rule for Beltrami coefficients: the coefficient of `f . g` at
/// `z` given `mu_g(z)`, `mu_f(g(z))` and `theta = conj(g_z)/g_z`.
pub fn compose_mu(mu_g: C, mu_f_at_gz: C, theta: C) -> C {
    let t = mu_f_at_gz * theta;
    (mu_g + t) / (C::new(1.0, 0.0) + mu_g.conj() * t)
}
