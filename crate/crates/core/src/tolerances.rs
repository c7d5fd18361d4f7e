//! Numerical tolerances shared by the kernels, model and solvers.
//!
//! All relative tolerances are measured against the Frobenius norm of the
//! relevant input unless stated otherwise.

/// Accepted departure from Hermitian symmetry before `hermitian_eig` refuses.
pub const HERMITIAN_TOL: f64 = 1e-8;
/// Accepted departure from `A = A^T` for Takagi inputs.
pub const SYMMETRY_TOL: f64 = 1e-8;
/// Accepted departure from `S + S^H = 0` for `expm_skew` inputs.
pub const SKEW_TOL: f64 = 1e-8;
/// Singular values closer than this (relative to the largest) share a
/// Takagi cluster.
pub const TAKAGI_CLUSTER_TOL: f64 = 1e-8;
/// Off-diagonal residual accepted when simultaneously diagonalizing the
/// real and imaginary parts of a symmetric unitary block.
pub const SIMULTANEOUS_DIAG_TOL: f64 = 1e-10;
/// Smallest-to-largest singular value ratio under which a Procrustes
/// minimizer is reported as non-unique.
pub const RANK_TOL: f64 = 1e-12;

/// Unitarity accepted for a non-reciprocal [`crate::RisMatrix`].
pub const RIS_UNITARY_TOL: f64 = 1e-8;
/// Symmetry accepted for a reciprocal [`crate::RisMatrix`].
pub const RIS_SYMMETRY_TOL: f64 = 1e-8;
/// Slack on the unit-modulus bound for diagonal RIS entries.
pub const RIS_MODULUS_TOL: f64 = 1e-8;

/// Relative imaginary residue tolerated in a trace that must be real.
pub const TRACE_IMAG_TOL: f64 = 1e-9;
/// Condition number beyond which a FIM is treated as singular.
pub const FIM_CONDITION_LIMIT: f64 = 1e12;

/// Relative slack on Eve's cap when checking a final PDD iterate.
pub const EVE_CAP_SLACK: f64 = 1e-3;
