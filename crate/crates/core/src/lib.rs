//! Fisher-information-optimal response design for beyond-diagonal
//! reconfigurable intelligent surfaces (BD-RIS).
//!
//! A transmitter sends a complex parameter vector through a RIS to an
//! intended receiver (Bob) and, optionally, an eavesdropper (Eve). The
//! crate computes RIS response matrices that maximize the trace of Bob's
//! Fisher information matrix for three architectures:
//!
//! - non-reciprocal BD-RIS (any unitary matrix), closed form in
//!   [`spectral::solve_nonreciprocal`];
//! - reciprocal BD-RIS (symmetric unitary), manifold ascent in
//!   [`spectral::solve_reciprocal_ao`];
//! - conventional diagonal RIS, local search in [`diagonal`].
//!
//! With an eavesdropper, [`pdd::solve_pdd`] caps Eve's Fisher information
//! through a penalty dual decomposition. [`experiment`] sweeps all of the
//! above over a grid of caps and writes CSV, JSON and gnuplot outputs.

pub mod diagonal;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod pdd;
pub mod plots;
pub mod report;
pub mod spectral;
pub mod tolerances;

pub use error::{Error, Result};
pub use model::{Architecture, ChannelSet, QuadraticForms, RisMatrix, SystemConfig, Target};
pub use report::SolveReport;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<C64>;
