//! Method-agnostic finite element pieces: quadrature, P1 gradients, sparse
//! assembly and the mean-zero solver.

mod p1;
mod quadrature;
mod solver;
mod sparse;

pub use p1::{p1_facet_gradients, tet_barycentric, tet_geometry, triangle_geometry, TetGeometry, TriangleGeometry};
pub use quadrature::{QuadratureRule, Simplex};
pub use solver::{solve_mean_zero, solve_mean_zero_monitored, SolveOutcome, DEFAULT_TOL, FREEZE_THRESHOLD};
pub use sparse::{SparseMatrix, TripletBuilder};

use crate::error::Result;
use crate::Vec3;

/// Element contribution `measure · g_i · g_j` to a gradient bilinear form.
#[derive(Clone, Debug)]
pub struct GradientElement<'a> {
    pub dofs: &'a [usize],
    pub gradients: &'a [Vec3],
    pub measure: f64,
}

impl GradientElement<'_> {
    pub fn add_to(&self, builder: &mut TripletBuilder) {
        for (i, gi) in self.dofs.iter().zip(self.gradients) {
            for (j, gj) in self.dofs.iter().zip(self.gradients) {
                builder.add(*i, *j, self.measure * gi.dot(gj));
            }
        }
    }
}

fn simplex_measure_and_gradients(positions: &[Vec3]) -> Result<(f64, Vec<Vec3>)> {
    match positions.len() {
        3 => {
            let geo = triangle_geometry(&[positions[0], positions[1], positions[2]])?;
            Ok((geo.area, geo.gradients.to_vec()))
        }
        _ => {
            let gradients = p1_facet_gradients(positions)?;
            let geo = tet_geometry(&[positions[0], positions[1], positions[2], positions[3]])?;
            Ok((geo.volume.abs(), gradients))
        }
    }
}

/// P1 stiffness `A_ij = Σ_T |T| ∇φ_i · ∇φ_j` over triangles in R³ (tangential
/// gradients) or tetrahedra. Each element is `(vertex positions, DOF ids)`.
pub fn assemble_stiffness<I, P, D>(n_dofs: usize, elements: I) -> Result<SparseMatrix>
where
    I: IntoIterator<Item = (P, D)>,
    P: AsRef<[Vec3]>,
    D: AsRef<[usize]>,
{
    let mut builder = TripletBuilder::new(n_dofs);
    for (positions, dofs) in elements {
        let (measure, gradients) = simplex_measure_and_gradients(positions.as_ref())?;
        GradientElement {
            dofs: dofs.as_ref(),
            gradients: &gradients,
            measure,
        }
        .add_to(&mut builder);
    }
    Ok(builder.build())
}

/// Load vector `b_i = Σ_T Σ_q w_q F(x_q) φ_i(x_q)`.
pub fn assemble_load<I, P, D, F>(n_dofs: usize, elements: I, quad: &QuadratureRule, mut forcing: F) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = (P, D)>,
    P: AsRef<[Vec3]>,
    D: AsRef<[usize]>,
    F: FnMut(&Vec3) -> Result<f64>,
{
    let mut b = vec![0.0; n_dofs];
    for (positions, dofs) in elements {
        let positions = positions.as_ref();
        let (measure, _) = simplex_measure_and_gradients(positions)?;
        for (x, w, bary) in quad.map(positions, measure) {
            let value = w * forcing(&x)?;
            for (k, dof) in dofs.as_ref().iter().enumerate() {
                b[*dof] += value * bary[k];
            }
        }
    }
    Ok(b)
}

/// Row sums of the consistent mass matrix: `|T| / (dim + 1)` per vertex.
pub fn lumped_mass<I, P, D>(n_dofs: usize, elements: I) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = (P, D)>,
    P: AsRef<[Vec3]>,
    D: AsRef<[usize]>,
{
    let mut m = vec![0.0; n_dofs];
    for (positions, dofs) in elements {
        let positions = positions.as_ref();
        let (measure, _) = simplex_measure_and_gradients(positions)?;
        let share = measure / positions.len() as f64;
        for dof in dofs.as_ref() {
            m[*dof] += share;
        }
    }
    Ok(m)
}

/// An assembled mean-zero problem on the active DOFs of a domain.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    /// Lumped mass on the active DOFs.
    pub mass: Vec<f64>,
    /// Active DOF index → global vertex index.
    pub dof_map: Vec<usize>,
}

impl LinearSystem {
    pub fn n_dofs(&self) -> usize {
        self.rhs.len()
    }

    pub fn solve(&self, tol: f64, max_iter: Option<usize>) -> Result<SolveOutcome> {
        solve_mean_zero(&self.matrix, &self.rhs, &self.mass, tol, max_iter)
    }

    pub fn into_field(self, coefficients: Vec<f64>, n_global: usize, domain: DomainKind) -> SolutionField {
        SolutionField::new(coefficients, self.dof_map, n_global, domain, self.mass)
    }
}

/// Which discrete domain a solution lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    SurfaceMesh,
    CutSurface,
    BandMesh,
}

/// Coefficients of a P1 function on the active DOFs of a domain.
#[derive(Clone, Debug)]
pub struct SolutionField {
    pub coefficients: Vec<f64>,
    /// Active DOF index → global vertex index.
    pub dof_map: Vec<usize>,
    pub domain: DomainKind,
    /// Lumped mass defining the discrete mean.
    pub mass: Vec<f64>,
    global_to_local: Vec<usize>,
}

impl SolutionField {
    pub fn new(coefficients: Vec<f64>, dof_map: Vec<usize>, n_global: usize, domain: DomainKind, mass: Vec<f64>) -> Self {
        let mut global_to_local = vec![usize::MAX; n_global];
        for (local, global) in dof_map.iter().enumerate() {
            global_to_local[*global] = local;
        }
        Self {
            coefficients,
            dof_map,
            domain,
            mass,
            global_to_local,
        }
    }

    /// Coefficient at a global vertex; zero outside the active set.
    pub fn at_vertex(&self, global: usize) -> f64 {
        match self.global_to_local.get(global) {
            Some(&local) if local != usize::MAX => self.coefficients[local],
            _ => 0.0,
        }
    }

    pub fn local_index(&self, global: usize) -> Option<usize> {
        self.global_to_local.get(global).copied().filter(|l| *l != usize::MAX)
    }

    pub fn n_dofs(&self) -> usize {
        self.coefficients.len()
    }

    /// `|Σ m_i c_i| / (|m| |c|)`.
    pub fn mean_defect(&self) -> f64 {
        let s: f64 = self.coefficients.iter().zip(&self.mass).map(|(c, m)| c * m).sum();
        let nm = self.mass.iter().map(|m| m * m).sum::<f64>().sqrt();
        let nc = self.coefficients.iter().map(|c| c * c).sum::<f64>().sqrt();
        if nc == 0.0 {
            0.0
        } else {
            s.abs() / (nm * nc)
        }
    }
}
