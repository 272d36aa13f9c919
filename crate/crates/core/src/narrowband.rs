//! Narrow band finite elements: the bulk Laplacian on `N_h(δ) = {|d_h| < δ}`
//! with the forcing transported by `M_h` and made mean-free.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fem::{tet_barycentric, tet_geometry, DomainKind, LinearSystem, QuadratureRule, SolutionField, TripletBuilder};
use crate::geometry::{ImplicitSurface, ManufacturedSolution};
use crate::mesh::{extract_band, extract_cut_surface, BandMesh, BulkMesh, CutSurface};
use crate::parametric::{surface_error_norms, ErrorReport};
use crate::trace::trace_facets;
use crate::Vec3;

/// Structural window `C1 h ≤ δ ≤ C2 h`.
pub const WINDOW_LOWER: f64 = 1.0;
pub const WINDOW_UPPER: f64 = 2.0;
/// Interpolation constant `c_I` in `|d - d_h| ≤ c_I h² |d|_{W²∞}`.
pub const INTERPOLATION_CONSTANT: f64 = 0.5;
pub const DEFAULT_DELTA_RATIO: f64 = 1.5;

/// `M_h(x) = x + (d_h(x) - d(x)) ∇d(x)`, which moves `x` along the normal
/// onto the parallel surface at distance `d_h(x)`.
pub fn mismatch_map(surface: &ImplicitSurface, d_h: f64, x: &Vec3) -> Result<Vec3> {
    let (d, grad) = surface.distance_gradient(x)?;
    let bound = surface.tube_half_width();
    if !(d.abs() < bound && d_h.abs() < bound) {
        return Err(Error::OutsideTube {
            distance: d.abs().max(d_h.abs()),
            bound,
        });
    }
    Ok(x + (d_h - d) * grad)
}

/// Largest admissible band width for a bulk mesh size: the structural
/// window and `δ + c_I |d|_{W²∞} h² ≤ 1/(2K)`, with `|d|_{W²∞} ≤ 2K` on the
/// tube.
pub fn delta_window(surface: &ImplicitSurface, h: f64) -> (f64, f64) {
    let k = surface.max_curvature();
    let tube = surface.tube_half_width() - INTERPOLATION_CONSTANT * 2.0 * k * h * h;
    (WINDOW_LOWER * h, (WINDOW_UPPER * h).min(tube))
}

#[derive(Clone, Debug)]
pub struct NarrowBandProblem {
    pub surface: ImplicitSurface,
    pub bulk: BulkMesh,
    pub band: BandMesh,
    /// Zero set of `d_h`, used for on-surface error reporting.
    pub cut: CutSurface,
    pub delta: f64,
    pub solution: ManufacturedSolution,
}

/// Per-band-tet data reused by assembly and error evaluation.
struct TetFrame {
    dofs: [usize; 4],
    corners: [Vec3; 4],
    gradients: [Vec3; 4],
}

impl NarrowBandProblem {
    pub fn new(bulk: BulkMesh, solution: ManufacturedSolution, delta: f64) -> Result<Self> {
        let surface = *solution.surface();
        let (lower, upper) = delta_window(&surface, bulk.h);
        if !(delta >= lower * (1.0 - 1e-12) && delta <= upper) {
            return Err(Error::BandWidth { delta, lower, upper });
        }
        let band = extract_band(&bulk, &surface, delta)?;
        let cut = extract_cut_surface(&bulk, &surface)?;
        Ok(Self {
            surface,
            bulk,
            band,
            cut,
            delta,
            solution,
        })
    }

    /// Band of width `ratio · h`.
    pub fn with_ratio(bulk: BulkMesh, solution: ManufacturedSolution, ratio: f64) -> Result<Self> {
        let delta = ratio * bulk.h;
        Self::new(bulk, solution, delta)
    }

    fn frames(&self) -> Result<BTreeMap<usize, TetFrame>> {
        let mut local = vec![usize::MAX; self.bulk.vertices.len()];
        for (l, g) in self.band.active_dofs.iter().enumerate() {
            local[*g] = l;
        }
        self.band
            .tets
            .iter()
            .map(|&t| {
                let corners = self.bulk.corners(t);
                let gradients = tet_geometry(&corners)?.gradients;
                Ok((
                    t,
                    TetFrame {
                        dofs: self.bulk.tets[t].map(|g| local[g]),
                        corners,
                        gradients,
                    },
                ))
            })
            .collect()
    }

    fn d_h(&self, t: usize, phi: &[f64; 4]) -> f64 {
        (0..4).map(|k| phi[k] * self.band.nodal_distance[self.bulk.tets[t][k]]).sum()
    }

    /// `f ∘ M_h` at every band quadrature point, piece by piece.
    fn transported_forcing(&self, frames: &BTreeMap<usize, TetFrame>, quad: &QuadratureRule) -> Result<Vec<f64>> {
        let mut values = Vec::with_capacity(self.band.pieces.len() * quad.len());
        for piece in &self.band.pieces {
            let frame = &frames[&piece.tet];
            for (x, _, _) in quad.map(&piece.corners, piece.volume) {
                let phi = tet_barycentric(&frame.corners, &frame.gradients, &x);
                let m = mismatch_map(&self.surface, self.d_h(piece.tet, &phi), &x)?;
                values.push(self.solution.f(&self.surface.closest_point(&m)?));
            }
        }
        Ok(values)
    }

    /// The mean-free forcing `F` at the band quadrature points and the mean
    /// that was removed.
    pub fn forcing(&self) -> Result<(Vec<f64>, f64)> {
        let frames = self.frames()?;
        let quad = QuadratureRule::tetrahedron_degree2();
        self.mean_free(&frames, &quad)
    }

    fn mean_free(&self, frames: &BTreeMap<usize, TetFrame>, quad: &QuadratureRule) -> Result<(Vec<f64>, f64)> {
        let mut values = self.transported_forcing(frames, quad)?;
        let weights = self.quadrature_weights(quad);
        let integral: f64 = values.iter().zip(&weights).map(|(v, w)| v * w).sum();
        let measure: f64 = weights.iter().sum();
        let mean = integral / measure;
        for v in values.iter_mut() {
            *v -= mean;
        }
        Ok((values, mean))
    }

    fn quadrature_weights(&self, quad: &QuadratureRule) -> Vec<f64> {
        self.band
            .pieces
            .iter()
            .flat_map(|p| quad.map(&p.corners, p.volume).map(|(_, w, _)| w).collect::<Vec<_>>())
            .collect()
    }

    pub fn assemble(&self) -> Result<LinearSystem> {
        let frames = self.frames()?;
        let quad = QuadratureRule::tetrahedron_degree2();
        let n = self.band.active_dofs.len();
        let mut clipped = BTreeMap::new();
        for piece in &self.band.pieces {
            *clipped.entry(piece.tet).or_insert(0.0) += piece.volume;
        }
        let mut builder = TripletBuilder::new(n);
        for (t, volume) in &clipped {
            let frame = &frames[t];
            for i in 0..4 {
                for j in 0..4 {
                    builder.add(frame.dofs[i], frame.dofs[j], volume * frame.gradients[i].dot(&frame.gradients[j]));
                }
            }
        }
        let (forcing, _) = self.mean_free(&frames, &quad)?;
        let mut rhs = vec![0.0; n];
        let mut mass = vec![0.0; n];
        let mut values = forcing.iter();
        for piece in &self.band.pieces {
            let frame = &frames[&piece.tet];
            let centroid = piece.corners.iter().sum::<Vec3>() / 4.0;
            let phi = tet_barycentric(&frame.corners, &frame.gradients, &centroid);
            for k in 0..4 {
                mass[frame.dofs[k]] += piece.volume * phi[k];
            }
            for (x, w, _) in quad.map(&piece.corners, piece.volume) {
                let value = w * values.next().expect("one forcing value per quadrature point");
                let phi = tet_barycentric(&frame.corners, &frame.gradients, &x);
                for k in 0..4 {
                    rhs[frame.dofs[k]] += value * phi[k];
                }
            }
        }
        Ok(LinearSystem {
            matrix: builder.build(),
            rhs,
            mass,
            dof_map: self.band.active_dofs.clone(),
        })
    }

    /// `‖∇(ũ ∘ P_d - U)‖` over `N_h(δ)`.
    pub fn band_error(&self, coefficients: &[f64]) -> Result<f64> {
        let frames = self.frames()?;
        let quad = QuadratureRule::tetrahedron_degree2();
        let mut total = 0.0;
        for piece in &self.band.pieces {
            let frame = &frames[&piece.tet];
            let grad_u = (0..4).fold(Vec3::zeros(), |acc, k| acc + coefficients[frame.dofs[k]] * frame.gradients[k]);
            for (x, w, _) in quad.map(&piece.corners, piece.volume) {
                let jet = self.surface.distance_jet(&x)?;
                let y = jet.closest_point(&x);
                let g = self.solution.grad_gamma_u(&y);
                let exact = g - jet.distance * (jet.hessian * g);
                total += w * (exact - grad_u).norm_squared();
            }
        }
        Ok(total.sqrt())
    }
}

/// Solves on the band and reports the band-norm error under
/// `extra["err_band"]` next to the on-surface norms measured on the zero
/// set of `d_h`.
pub fn narrowband_solve(problem: &NarrowBandProblem, tol: f64) -> Result<(SolutionField, ErrorReport)> {
    let system = problem.assemble()?;
    let outcome = system.solve(tol, None)?;
    let coefficients = &outcome.solution;
    let mut local = vec![usize::MAX; problem.bulk.vertices.len()];
    for (l, g) in system.dof_map.iter().enumerate() {
        local[*g] = l;
    }
    let facets = trace_facets(&problem.bulk, &problem.cut, |g| match local[g] {
        usize::MAX => 0.0,
        l => coefficients[l],
    })?;
    let (err_l2, err_h1) = surface_error_norms(&facets, &problem.solution)?;
    let mut extra = BTreeMap::new();
    extra.insert("err_band".to_string(), problem.band_error(coefficients)?);
    extra.insert("band_measure".to_string(), problem.band.measure);
    extra.insert("delta".to_string(), problem.delta);
    let report = ErrorReport {
        h_max: problem.bulk.h,
        n_dof: system.n_dofs(),
        err_l2,
        err_h1,
        iterations: outcome.iterations,
        relative_residual: outcome.relative_residual,
        extra,
    };
    let n = problem.bulk.vertices.len();
    Ok((system.into_field(outcome.solution, n, DomainKind::BandMesh), report))
}
