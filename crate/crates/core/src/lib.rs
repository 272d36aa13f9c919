//! Finite element solvers for the Laplace-Beltrami equation `-Δ_γ u = f` on
//! closed surfaces.
//!
//! Three discretizations share one set of building blocks:
//!
//! * [`parametric`]: P1 elements on a polyhedral surface interpolating γ,
//!   with the forcing pulled back through a user-selected lift.
//! * [`trace`]: the trace of a bulk P1 space on the zero level set of the
//!   interpolated signed distance (a cut surface inside a tetrahedral mesh).
//! * [`narrowband`]: the bulk Laplacian posed on a discrete tube
//!   `{|d_h| < δ}` around γ.
//!
//! [`geometry`] provides the analytic surfaces and distance-function calculus,
//! [`mesh`] the discrete domains, [`fem`] quadrature, sparse assembly and the
//! mean-zero solver, [`estimators`] the a posteriori indicators and the
//! adaptive loop, and [`harness`] the convergence studies behind the CLI.

pub mod error;
pub mod estimators;
pub mod fem;
pub mod geometry;
pub mod harness;
pub mod mesh;
pub mod narrowband;
pub mod parametric;
pub mod trace;

pub use error::{Error, Result};
pub use geometry::{ImplicitSurface, LiftKind, ManufacturedSolution};

/// Points and vectors in R³.
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
