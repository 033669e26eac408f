use thiserror::Error;

use crate::intersection::SupportResult;

/// Errors produced by the core algorithms.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e} exceeds {tol:.3e})")]
    NotSymmetric { asymmetry: f64, tol: f64 },

    /// The lower-right block of a quadratic set is not negative definite.
    #[error("unbounded or degenerate set: lower-right block is not negative definite (largest eigenvalue {max_eig:.3e})")]
    Unbounded { max_eig: f64 },

    #[error("empty set: Schur complement {schur:.3e} is negative")]
    EmptySet { schur: f64 },

    #[error("noise model violates its assumptions: {0}")]
    NoiseModel(String),

    /// Parameter set is unbounded, i.e. the feature matrix lacks full row rank.
    #[error("data not sufficiently exciting: feature matrix does not have full row rank")]
    NotExciting,

    #[error("inconsistent data/noise model: Schur complement {schur:.3e} is negative")]
    Inconsistent { schur: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("nonsmooth point: |b(z)| = {norm:.3e} is below the gradient threshold")]
    NonSmooth { norm: f64 },

    #[error("infeasible: the intersection of parameter sets is empty")]
    Infeasible,

    /// The solver stopped without certifying its duality gap. The carried
    /// result is feasible, so its value is a valid lower bound on the support.
    #[error("solver did not certify its result (gap {gap:.3e})", gap = best.gap)]
    NotCertified { best: Box<SupportResult> },

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("stencil not exciting at z = {z:?}: {source}")]
    StencilNotExciting { z: Vec<f64>, source: Box<Error> },

    #[error("convexity precondition failed: {0}")]
    ConvexityPrecondition(String),

    #[error("oracle error: {0}")]
    Oracle(String),
}

impl Error {
    /// Broad category, used by front ends to pick exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Shape(_) | Error::NotSymmetric { .. } | Error::Oracle(_) => ErrorKind::Input,
            Error::NotCertified { .. } | Error::Solver(_) => ErrorKind::Solver,
            _ => ErrorKind::Precondition,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Precondition,
    Solver,
}

pub type Result<T> = std::result::Result<T, Error>;
