//! Cautious optimization of an unknown function from bounded-noise samples.
//!
//! The function is modeled as `φ̂(z) = γ̂ᵀb(z)` for known basis functions `b`
//! and an unknown parameter `γ̂`. Each batch of noisy samples confines `γ̂` to
//! an ellipsoid; the crate evaluates guaranteed bounds on `φ̂`, certifies
//! convexity, and minimizes the worst-case bound, either once or in an
//! online measure-then-optimize loop.

pub mod analysis;
pub mod basis;
pub mod bounds;
pub mod error;
pub mod intersection;
pub mod linalg;
pub mod online;
pub mod optimize;
pub mod oracle;
pub mod polytope;
pub mod qmi;
pub mod regression;

pub use analysis::{
    certify_convexity, certify_uncertainty_convexity, nonneg_params_test, optimality_gap, CertificateMethod,
    ConvexityCertificate, ConvexityVerdict, GapOptions, GapReport,
};
pub use basis::{BasisSet, ConvexityClass, Primitive};
pub use bounds::{grad_phi, phi_bounds, point_bounds, uncertainty, PointBounds, Side};
pub use error::{Error, ErrorKind, Result};
pub use intersection::{IntersectionSet, Nonemptiness, SolverOptions, SupportResult, UpperEval};
pub use online::{
    measure_at, run_online, stopping_report, Measurement, OnlineOptions, OnlineRun, OnlineRunLog, OnlineStep,
};
pub use optimize::{minimize_upper, weighted_minimize, Minimized, OptimizeOptions, SampleStencil};
pub use oracle::{trial_rng, MeasurementOracle, NoiseMode, ReplayOracle, SyntheticOracle};
pub use polytope::{FwOptions, Polytope};
pub use qmi::{inertia, Ellipsoid, Inertia, SymQuadSet};
pub use regression::{assemble_batch, build_n, MeasurementBatch, NoiseModel, ParameterSet};
