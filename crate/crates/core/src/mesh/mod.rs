//! Discrete domains: polyhedral surface meshes, the Kuhn background mesh and
//! the cut surfaces and bands extracted from it.

mod band;
mod bulk;
mod cut;
pub mod io;
mod surface;

pub use band::{extract_band, extract_band_from_values, BandMesh, BandPiece};
pub use bulk::{build_bulk_mesh, BulkMesh};
pub use cut::{extract_cut_surface, extract_cut_surface_from_values, CutSurface};
pub use surface::{
    build_sphere_mesh, build_torus_mesh, refine_bisection, refine_uniform, SurfaceMesh, DEFAULT_SHAPE_BOUND,
    MAX_VALENCE,
};
