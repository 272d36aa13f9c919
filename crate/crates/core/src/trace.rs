//! Trace finite elements: the bulk P1 space restricted to the zero level set
//! of the interpolated signed distance.
//!
//! The stiffness matrix has the constants in its kernel and also the bulk
//! interpolant `d_h` itself, whose trace vanishes. Both solvers and
//! comparisons therefore only look at traces.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fem::{tet_barycentric, tet_geometry, DomainKind, LinearSystem, QuadratureRule, SolutionField, TripletBuilder};
use crate::geometry::{ImplicitSurface, ManufacturedSolution};
use crate::mesh::{extract_cut_surface, BulkMesh, CutSurface};
use crate::parametric::{surface_error_norms, ErrorReport, LinearFacet};
use crate::Vec3;

/// Samples per segment `x → P_d(x)` in the skin-layer check.
pub const SKIN_SAMPLES: usize = 5;

#[derive(Clone, Debug)]
pub struct TraceProblem {
    pub surface: ImplicitSurface,
    pub bulk: BulkMesh,
    pub cut: CutSurface,
    pub solution: ManufacturedSolution,
}

/// Geometry of a face's parent tet needed for assembly.
struct FaceFrame {
    dofs: [usize; 4],
    corners: [Vec3; 4],
    gradients: [Vec3; 4],
}

impl TraceProblem {
    pub fn new(bulk: BulkMesh, solution: ManufacturedSolution) -> Result<Self> {
        let surface = *solution.surface();
        let cut = extract_cut_surface(&bulk, &surface)?;
        Ok(Self {
            surface,
            bulk,
            cut,
            solution,
        })
    }

    fn frame(&self, f: usize, local: &[usize]) -> Result<FaceFrame> {
        let t = self.cut.parent[f];
        let corners = self.bulk.corners(t);
        let geo = tet_geometry(&corners)?;
        Ok(FaceFrame {
            dofs: self.bulk.tets[t].map(|g| local[g]),
            corners,
            gradients: geo.gradients,
        })
    }

    fn global_to_local(&self) -> Vec<usize> {
        let mut local = vec![usize::MAX; self.bulk.vertices.len()];
        for (l, g) in self.cut.active_dofs.iter().enumerate() {
            local[*g] = l;
        }
        local
    }

    pub fn assemble(&self) -> Result<LinearSystem> {
        let local = self.global_to_local();
        let n = self.cut.active_dofs.len();
        let quad = QuadratureRule::triangle_degree4();
        let mut builder = TripletBuilder::new(n);
        let mut rhs = vec![0.0; n];
        let mut mass = vec![0.0; n];
        for f in 0..self.cut.n_faces() {
            let frame = self.frame(f, &local)?;
            let normal = self.cut.normals[f];
            let area = self.cut.areas[f];
            let projected = frame.gradients.map(|g| g - g.dot(&normal) * normal);
            for i in 0..4 {
                for j in 0..4 {
                    builder.add(frame.dofs[i], frame.dofs[j], area * projected[i].dot(&projected[j]));
                }
            }
            let face = self.cut.corners(f);
            let centroid = (face[0] + face[1] + face[2]) / 3.0;
            let phi = tet_barycentric(&frame.corners, &frame.gradients, &centroid);
            for k in 0..4 {
                mass[frame.dofs[k]] += area * phi[k];
            }
            for (x, w, _) in quad.map(&face, area) {
                let value = w * trace_forcing(self, &x, &normal)?;
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
            dof_map: self.cut.active_dofs.clone(),
        })
    }

    /// Trace of a bulk function (given on the active DOFs) as P1 facets.
    pub fn facets(&self, coefficients: &[f64]) -> Result<Vec<LinearFacet>> {
        let local = self.global_to_local();
        trace_facets(&self.bulk, &self.cut, |g| match local[g] {
            usize::MAX => 0.0,
            l => coefficients[l],
        })
    }

    /// Trace values at the cut vertices.
    pub fn trace_values(&self, coefficients: &[f64]) -> Vec<f64> {
        let local = self.global_to_local();
        self.cut
            .vertices
            .iter()
            .zip(&self.cut.vertex_edges)
            .map(|(x, (a, b))| {
                let (xa, xb) = (self.bulk.vertices[*a], self.bulk.vertices[*b]);
                let s = (x - xa).norm() / (xb - xa).norm();
                let value = |g: usize| match local[g] {
                    usize::MAX => 0.0,
                    l => coefficients[l],
                };
                (1.0 - s) * value(*a) + s * value(*b)
            })
            .collect()
    }

    /// Face quadrature points `x` whose segment to `P_d(x)` leaves the union
    /// of cut tets, sampled at [`SKIN_SAMPLES`] points.
    pub fn skin_layer_violations(&self) -> Result<usize> {
        let mut is_cut = vec![false; self.bulk.tets.len()];
        for t in &self.cut.cut_tets {
            is_cut[*t] = true;
        }
        let quad = QuadratureRule::triangle_degree4();
        let mut violations = 0;
        for f in 0..self.cut.n_faces() {
            let face = self.cut.corners(f);
            for (x, _, _) in quad.map(&face, self.cut.areas[f]) {
                let y = self.surface.closest_point(&x)?;
                let outside = (0..SKIN_SAMPLES).any(|k| {
                    let s = k as f64 / (SKIN_SAMPLES - 1) as f64;
                    let p = x + s * (y - x);
                    !self.in_cut_tets(&p, &is_cut)
                });
                if outside {
                    violations += 1;
                }
            }
        }
        Ok(violations)
    }

    /// Containment up to rounding: `p`, or `p` nudged by `1e-9 h` along
    /// some combination of axes, is located in a cut tet.
    fn in_cut_tets(&self, p: &Vec3, is_cut: &[bool]) -> bool {
        let Some(t) = self.bulk.locate(p) else {
            return false;
        };
        if is_cut[t] {
            return true;
        }
        let h = self.bulk.h;
        let eps = 1e-9 * h;
        for dx in [-eps, 0.0, eps] {
            for dy in [-eps, 0.0, eps] {
                for dz in [-eps, 0.0, eps] {
                    if let Some(s) = self.bulk.locate(&(p + Vec3::new(dx, dy, dz))) {
                        if is_cut[s] {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

/// Restriction to the faces of `cut` of the bulk P1 function with vertex
/// values `value(global vertex)`.
pub fn trace_facets<V>(bulk: &BulkMesh, cut: &CutSurface, value: V) -> Result<Vec<LinearFacet>>
where
    V: Fn(usize) -> f64,
{
    (0..cut.n_faces())
        .map(|f| {
            let t = cut.parent[f];
            let tet_corners = bulk.corners(t);
            let gradients = tet_geometry(&tet_corners)?.gradients;
            let normal = cut.normals[f];
            let c = bulk.tets[t].map(&value);
            let grad = (0..4).fold(Vec3::zeros(), |acc, k| acc + c[k] * gradients[k]);
            let corners = cut.corners(f);
            let values = corners.map(|x| {
                let phi = tet_barycentric(&tet_corners, &gradients, &x);
                (0..4).map(|k| phi[k] * c[k]).sum()
            });
            Ok(LinearFacet {
                corners,
                normal,
                area: cut.areas[f],
                values,
                gradient: grad - grad.dot(&normal) * normal,
            })
        })
        .collect()
}

/// `F_Γ = (q/q_Γ) f ∘ P_d` at a point of a cut face with normal `nu_f`.
pub fn trace_forcing(problem: &TraceProblem, x: &Vec3, nu_f: &Vec3) -> Result<f64> {
    let y = problem.surface.closest_point(x)?;
    Ok(problem.surface.area_ratio(x, nu_f)? * problem.solution.f(&y))
}

pub fn trace_solve(problem: &TraceProblem, tol: f64) -> Result<(SolutionField, ErrorReport)> {
    if problem.cut.n_faces() == 0 {
        return Err(Error::EmptyCut);
    }
    let system = problem.assemble()?;
    let outcome = system.solve(tol, None)?;
    let facets = problem.facets(&outcome.solution)?;
    let (err_l2, err_h1) = surface_error_norms(&facets, &problem.solution)?;
    let (max_distance, max_normal) = problem.cut.geometric_resolution(&problem.surface)?;
    let mut extra = BTreeMap::new();
    extra.insert("max_distance".to_string(), max_distance);
    extra.insert("max_normal_deviation".to_string(), max_normal);
    extra.insert("frozen".to_string(), outcome.frozen as f64);
    extra.insert("faces".to_string(), problem.cut.n_faces() as f64);
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
    Ok((system.into_field(outcome.solution, n, DomainKind::CutSurface), report))
}
