//! P1 finite elements on a polyhedral surface whose vertices lie on γ.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_stiffness, lumped_mass, DomainKind, LinearSystem, QuadratureRule, SolutionField,
};
use crate::geometry::{ImplicitSurface, LiftKind, ManufacturedSolution};
use crate::mesh::SurfaceMesh;
use crate::Vec3;

/// Per-run error norms and whatever estimator or resolution totals the
/// method attaches under `extra`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ErrorReport {
    pub h_max: f64,
    pub n_dof: usize,
    pub err_l2: f64,
    pub err_h1: f64,
    pub iterations: usize,
    pub relative_residual: f64,
    pub extra: BTreeMap<String, f64>,
}

/// A P1 function on one flat triangle: nodal values at the corners and its
/// (constant) tangential gradient.
#[derive(Clone, Debug)]
pub struct LinearFacet {
    pub corners: [Vec3; 3],
    pub normal: Vec3,
    pub area: f64,
    pub values: [f64; 3],
    pub gradient: Vec3,
}

/// L2 and H1 seminorm of `ũ ∘ P_d - U` over a collection of facets, with the
/// mean of the difference removed from the L2 part.
pub fn surface_error_norms(facets: &[LinearFacet], exact: &ManufacturedSolution) -> Result<(f64, f64)> {
    let surface = exact.surface();
    let quad = QuadratureRule::triangle_degree4();
    let mut diffs = Vec::with_capacity(facets.len() * quad.len());
    let mut integral = 0.0;
    let mut area = 0.0;
    let mut h1 = 0.0;
    for facet in facets {
        for (x, w, bary) in quad.map(&facet.corners, facet.area) {
            let y = surface.closest_point(&x)?;
            let uh = (0..3).map(|k| bary[k] * facet.values[k]).sum::<f64>();
            let e = exact.u(&y) - uh;
            diffs.push((e, w));
            integral += w * e;
            area += w;
            let g = surface.lifted_tangential_gradient(&x, &facet.normal, &exact.grad_gamma_u(&y))?;
            h1 += w * (g - facet.gradient).norm_squared();
        }
    }
    if area == 0.0 {
        return Ok((0.0, 0.0));
    }
    let mean = integral / area;
    let l2 = diffs.iter().map(|(e, w)| w * (e - mean).powi(2)).sum::<f64>();
    Ok((l2.sqrt(), h1.sqrt()))
}

/// The surface-mesh discretization of `-Δ_γ u = f` with forcing pulled back
/// through `lift`.
#[derive(Clone, Debug)]
pub struct ParametricProblem {
    pub surface: ImplicitSurface,
    pub mesh: SurfaceMesh,
    pub lift: LiftKind,
    pub solution: ManufacturedSolution,
}

/// Largest admissible vertex distance from γ.
const VERTEX_TOL: f64 = 1e-10;

impl ParametricProblem {
    pub fn new(mesh: SurfaceMesh, lift: LiftKind, solution: ManufacturedSolution) -> Result<Self> {
        let surface = *solution.surface();
        let off = mesh.max_vertex_distance(&surface);
        if !(off < VERTEX_TOL) {
            return Err(Error::Config(format!(
                "surface mesh vertices lie up to {off:.3e} away from the surface"
            )));
        }
        Ok(Self {
            surface,
            mesh,
            lift,
            solution,
        })
    }

    fn elements(&self) -> impl Iterator<Item = ([Vec3; 3], [usize; 3])> + '_ {
        (0..self.mesh.n_triangles()).map(|t| (self.mesh.corners(t), self.mesh.triangles[t]))
    }

    pub fn assemble(&self) -> Result<LinearSystem> {
        let n = self.mesh.n_vertices();
        let matrix = assemble_stiffness(n, self.elements())?;
        let quad = QuadratureRule::triangle_degree4();
        let mut rhs = vec![0.0; n];
        for t in 0..self.mesh.n_triangles() {
            let normal = self.mesh.normals[t];
            for (x, w, bary) in quad.map(&self.mesh.corners(t), self.mesh.areas[t]) {
                let value = w * parametric_forcing(self, &x, &normal)?;
                for (k, i) in self.mesh.triangles[t].iter().enumerate() {
                    rhs[*i] += value * bary[k];
                }
            }
        }
        let mass = lumped_mass(n, self.elements())?;
        Ok(LinearSystem {
            matrix,
            rhs,
            mass,
            dof_map: (0..n).collect(),
        })
    }

    /// P1 facets of a vertex-based function on this mesh.
    pub fn facets(&self, nodal: &[f64]) -> Vec<LinearFacet> {
        (0..self.mesh.n_triangles())
            .map(|t| {
                let tri = self.mesh.triangles[t];
                let values = tri.map(|i| nodal[i]);
                let corners = self.mesh.corners(t);
                let grads = crate::fem::triangle_geometry(&corners)
                    .expect("mesh triangles are nondegenerate")
                    .gradients;
                LinearFacet {
                    corners,
                    normal: self.mesh.normals[t],
                    area: self.mesh.areas[t],
                    values,
                    gradient: (0..3).fold(Vec3::zeros(), |acc, k| acc + values[k] * grads[k]),
                }
            })
            .collect()
    }
}

/// Discrete forcing `F = f(P(x)) q/q_Γ` at a point of a facet with normal
/// `nu_gamma`.
pub fn parametric_forcing(problem: &ParametricProblem, x: &Vec3, nu_gamma: &Vec3) -> Result<f64> {
    let surface = &problem.surface;
    let (y, ratio) = match problem.lift {
        LiftKind::ClosestPoint => (surface.closest_point(x)?, surface.area_ratio(x, nu_gamma)?),
        kind => (surface.lift(kind, x)?, surface.lift_area_ratio(kind, x, nu_gamma)?),
    };
    Ok(problem.solution.f(&y) * ratio)
}

/// Assembles, solves and measures the error against the manufactured
/// solution.
pub fn parametric_solve(problem: &ParametricProblem, tol: f64) -> Result<(SolutionField, ErrorReport)> {
    let system = problem.assemble()?;
    let outcome = system.solve(tol, None)?;
    let facets = problem.facets(&outcome.solution);
    let (err_l2, err_h1) = surface_error_norms(&facets, &problem.solution)?;
    let report = ErrorReport {
        h_max: problem.mesh.h_max(),
        n_dof: system.n_dofs(),
        err_l2,
        err_h1,
        iterations: outcome.iterations,
        relative_residual: outcome.relative_residual,
        extra: BTreeMap::new(),
    };
    let n = problem.mesh.n_vertices();
    Ok((system.into_field(outcome.solution, n, DomainKind::SurfaceMesh), report))
}
