//! Radial Paneitz–Branson Dirichlet problems with critical Sobolev growth.
//!
//! The crate reduces the fourth-order problem
//! `Δ²u − div(A(∇u)#) + a u = f |u|^{2♯−2} u` with clamped boundary data to
//! radially symmetric balls and annuli, solves the subcritical problems by
//! constrained minimization, continues the exponent to `2♯`, and checks the
//! asymptotic expansion of the energy quotient of concentrating bubbles.

pub mod banded;
pub mod error;
pub mod extension;
pub mod geometry;
pub mod operators;
pub mod profile;
pub mod quadrature;
pub mod solver;
pub mod special;
pub mod test_functions;

pub use error::{Error, Result};
pub use extension::{admissibility_check, first_eigenpair, solve_extension, EigenPair, ExtensionField};
pub use geometry::{
    fit_g_expansion, make_metric_preset, volume_integral, CurvatureData, MetricPreset, RadialGrid,
    RadialMetric,
};
pub use operators::{
    assemble_laplacian, assemble_paneitz, coercivity_check, constraint_value, energy, BoundaryData,
    BoundarySlopes, DiscreteOperator, ProblemSpec,
};
pub use profile::{ProfileSource, RadialProfile};
pub use solver::{
    continuation, default_schedule, minimize, nodal_check, solve_at, ContinuationTrace, SolverConfig,
    SolverContext, SubcriticalSolution,
};
pub use special::{
    best_constant_k0, einstein_coefficients, identity_suite, inverse_best_constant, ipq,
    sphere_volume, DimensionParams, IdentityCheck,
};
pub use test_functions::{
    analytic_c2, analytic_c2_log, build_u_eps, fit_expansion, gamma_of_u_eps, mu_of_u_eps, q_eps,
    sweep, threshold_certificate, Certificate, ExpansionFit, ExpansionModel, MuBreakdown,
    SweepEntry, TestFunctionParams,
};
