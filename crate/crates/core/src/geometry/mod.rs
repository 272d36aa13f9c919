//! Analytic surfaces and the distance-function calculus built on them.

mod manufactured;
pub mod properties;
pub mod sampling;
mod surface;

pub use manufactured::{manufactured, ManufacturedSolution};
pub use surface::{plane_basis, DistanceJet, ImplicitSurface, LiftKind};

#[cfg(test)]
pub(crate) use sampling as testing;
