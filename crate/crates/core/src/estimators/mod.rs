//! A posteriori indicators, Dörfler marking and the adaptive loop for the
//! parametric method.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{triangle_geometry, QuadratureRule};
use crate::geometry::{ImplicitSurface, LiftKind, ManufacturedSolution};
use crate::mesh::{refine_bisection, SurfaceMesh};
use crate::parametric::{parametric_forcing, parametric_solve, LinearFacet, ParametricProblem};
use crate::trace::{trace_forcing, TraceProblem};
use crate::Vec3;

pub const DEFAULT_THETA: f64 = 0.5;

/// Per-element indicators. Vectors that a method does not produce are empty.
///
/// Residual indicators combine in ℓ², geometric ones by maximum.
#[derive(Clone, Debug, Default, Serialize)]
pub struct IndicatorField {
    /// `η_T` (parametric) or `η_F` (trace).
    pub residual: Vec<f64>,
    /// `h_T ‖F - mean_T F‖`, reported only.
    pub oscillation: Vec<f64>,
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    pub mu: Vec<f64>,
    pub xi: Vec<f64>,
}

fn l2_total(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn max_total(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

impl IndicatorField {
    pub fn residual_total(&self) -> f64 {
        l2_total(&self.residual)
    }

    pub fn oscillation_total(&self) -> f64 {
        l2_total(&self.oscillation)
    }

    pub fn lambda_total(&self) -> f64 {
        max_total(&self.lambda)
    }

    pub fn beta_total(&self) -> f64 {
        max_total(&self.beta)
    }

    pub fn mu_total(&self) -> f64 {
        max_total(&self.mu)
    }

    pub fn xi_total(&self) -> f64 {
        max_total(&self.xi)
    }
}

/// Unit co-normal of edge `(a, b)` in the plane of a triangle with normal
/// `normal`, pointing away from the third corner `c`.
fn co_normal(a: &Vec3, b: &Vec3, c: &Vec3, normal: &Vec3) -> Vec3 {
    let mu = (b - a).cross(normal).normalize();
    if mu.dot(&(a - c)) < 0.0 {
        -mu
    } else {
        mu
    }
}

/// `∫_e [∇U⁺·μ⁺ + ∇U⁻·μ⁻]²` for every interior edge of an indexed facet
/// collection, as `(facet⁺, facet⁻, integral)`.
fn edge_jumps(
    points: &[Vec3],
    faces: &[[usize; 3]],
    edges: &BTreeMap<(usize, usize), Vec<usize>>,
    facets: &[LinearFacet],
) -> Vec<(usize, usize, f64)> {
    let third = |f: usize, a: usize, b: usize| {
        let k = faces[f].iter().position(|v| *v != a && *v != b).expect("triangle has a third corner");
        points[faces[f][k]]
    };
    edges
        .iter()
        .filter(|(_, owners)| owners.len() == 2)
        .map(|(&(a, b), owners)| {
            let (pa, pb) = (points[a], points[b]);
            let jump: f64 = owners
                .iter()
                .map(|&f| facets[f].gradient.dot(&co_normal(&pa, &pb, &third(f, a, b), &facets[f].normal)))
                .sum();
            (owners[0], owners[1], (pb - pa).norm() * jump * jump)
        })
        .collect()
}

/// `h² ∫ F²` and `h² ∫ (F - mean F)²` over every facet.
fn volume_terms<F>(facets: &[LinearFacet], sizes: &[f64], mut forcing: F) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: FnMut(usize, &Vec3) -> Result<f64>,
{
    let quad = QuadratureRule::triangle_degree4();
    let mut bulk = Vec::with_capacity(facets.len());
    let mut osc = Vec::with_capacity(facets.len());
    let mut samples = Vec::with_capacity(quad.len());
    for (t, facet) in facets.iter().enumerate() {
        samples.clear();
        for (x, w, _) in quad.map(&facet.corners, facet.area) {
            samples.push((w, forcing(t, &x)?));
        }
        let h2 = sizes[t] * sizes[t];
        let mean = samples.iter().map(|(w, f)| w * f).sum::<f64>() / facet.area;
        bulk.push(h2 * samples.iter().map(|(w, f)| w * f * f).sum::<f64>());
        osc.push(h2 * samples.iter().map(|(w, f)| w * (f - mean).powi(2)).sum::<f64>());
    }
    Ok((bulk, osc))
}

fn combine(squares: Vec<f64>, jumps: &[(usize, usize, f64)], sizes: &[f64]) -> Vec<f64> {
    let mut squares = squares;
    for &(p, m, integral) in jumps {
        squares[p] += 0.5 * sizes[p] * integral;
        squares[m] += 0.5 * sizes[m] * integral;
    }
    squares.into_iter().map(f64::sqrt).collect()
}

/// Residual indicators `η_T² = h_T² ‖F‖²_T + h_T Σ_e ½ ‖J_e‖²_e` of the P1
/// function with vertex values `u`. The elementwise Laplace-Beltrami of a P1
/// function vanishes, so the element residual is `F` itself. `forcing(t, x)`
/// evaluates `F` at a point of triangle `t`.
pub fn residual_estimator_parametric<F>(mesh: &SurfaceMesh, u: &[f64], forcing: F) -> Result<IndicatorField>
where
    F: FnMut(usize, &Vec3) -> Result<f64>,
{
    let facets = mesh_facets(mesh, u)?;
    let (bulk, osc) = volume_terms(&facets, &mesh.sizes, forcing)?;
    let jumps = edge_jumps(&mesh.vertices, &mesh.triangles, &mesh.edges(), &facets);
    Ok(IndicatorField {
        residual: combine(bulk, &jumps, &mesh.sizes),
        oscillation: osc.into_iter().map(f64::sqrt).collect(),
        ..Default::default()
    })
}

fn mesh_facets(mesh: &SurfaceMesh, u: &[f64]) -> Result<Vec<LinearFacet>> {
    (0..mesh.n_triangles())
        .map(|t| {
            let corners = mesh.corners(t);
            let grads = triangle_geometry(&corners)?.gradients;
            let values = mesh.triangles[t].map(|i| u[i]);
            Ok(LinearFacet {
                corners,
                normal: mesh.normals[t],
                area: mesh.areas[t],
                values,
                gradient: (0..3).fold(Vec3::zeros(), |acc, k| acc + values[k] * grads[k]),
            })
        })
        .collect()
}

/// The 6 degree-4 quadrature nodes followed by the 3 corners.
fn sample_points(corners: &[Vec3; 3]) -> impl Iterator<Item = Vec3> + '_ {
    let quad = QuadratureRule::triangle_degree4();
    let nodes: Vec<Vec3> = quad.points.iter().map(|b| b[0] * corners[0] + b[1] * corners[1] + b[2] * corners[2]).collect();
    nodes.into_iter().chain(corners.iter().copied())
}

/// `β_T = max |P(x) - x|`, `λ_T = max ‖(DP(x) - I)|_T‖₂` and
/// `μ_T = β_T + λ_T²`, sampled at nine points per triangle. Since the
/// vertices lie on γ the interpolant of the lift is the identity on `T`.
pub fn geometric_estimators_parametric(surface: &ImplicitSurface, mesh: &SurfaceMesh, lift: LiftKind) -> Result<IndicatorField> {
    let n = mesh.n_triangles();
    let mut field = IndicatorField {
        lambda: Vec::with_capacity(n),
        beta: Vec::with_capacity(n),
        mu: Vec::with_capacity(n),
        ..Default::default()
    };
    for t in 0..n {
        let corners = mesh.corners(t);
        let (t1, t2) = crate::geometry::plane_basis(&mesh.normals[t]);
        let mut beta: f64 = 0.0;
        let mut lambda: f64 = 0.0;
        for x in sample_points(&corners) {
            beta = beta.max((surface.lift(lift, &x)? - x).norm());
            let jac = surface.lift_jacobian(lift, &x)?;
            let restricted = nalgebra::Matrix3x2::from_columns(&[jac * t1 - t1, jac * t2 - t2]);
            lambda = lambda.max(restricted.singular_values().max());
        }
        field.beta.push(beta);
        field.lambda.push(lambda);
        field.mu.push(beta + lambda * lambda);
    }
    Ok(field)
}

/// Residual indicators `η_F` and geometric indicators
/// `ξ_F = ‖d‖_∞ ‖K‖_∞ + ‖ν - ν_F‖²_∞` on the faces of a trace problem with
/// local coefficients `u`.
pub fn trace_estimators(problem: &TraceProblem, u: &[f64]) -> Result<IndicatorField> {
    let cut = &problem.cut;
    let surface = &problem.surface;
    let facets = problem.facets(u)?;
    let (bulk, osc) = volume_terms(&facets, &cut.sizes, |f, x| trace_forcing(problem, x, &cut.normals[f]))?;
    let jumps = edge_jumps(&cut.vertices, &cut.faces, &cut.edges(), &facets);
    let mut xi = Vec::with_capacity(cut.n_faces());
    for f in 0..cut.n_faces() {
        let corners = cut.corners(f);
        let mut dist: f64 = 0.0;
        let mut curvature: f64 = 0.0;
        let mut normal: f64 = 0.0;
        for x in sample_points(&corners) {
            let (d, nu) = surface.distance_gradient(&x)?;
            let y = x - d * nu;
            let [k1, k2] = surface.principal_curvatures(&y);
            dist = dist.max(d.abs());
            curvature = curvature.max(k1.abs()).max(k2.abs());
            normal = normal.max((nu - cut.normals[f]).norm());
        }
        xi.push(dist * curvature + normal * normal);
    }
    Ok(IndicatorField {
        residual: combine(bulk, &jumps, &cut.sizes),
        oscillation: osc.into_iter().map(f64::sqrt).collect(),
        xi,
        ..Default::default()
    })
}

/// Smallest set of elements, taken by decreasing `η²` (ties by id), whose
/// squared indicators sum to at least `θ Σ η²`. Zero indicators are never
/// marked.
pub fn dorfler_mark(indicators: &[f64], theta: f64) -> Result<BTreeSet<usize>> {
    if indicators.is_empty() {
        return Err(Error::Config("no indicators to mark".into()));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Config(format!("marking fraction {theta} outside (0, 1]")));
    }
    let mut order: Vec<usize> = (0..indicators.len()).collect();
    order.sort_by(|&a, &b| indicators[b].abs().total_cmp(&indicators[a].abs()).then(a.cmp(&b)));
    let total: f64 = indicators.iter().map(|e| e * e).sum();
    let target = theta * total;
    let mut marked = BTreeSet::new();
    let mut sum = 0.0;
    for t in order {
        if sum >= target || indicators[t] == 0.0 {
            break;
        }
        sum += indicators[t] * indicators[t];
        marked.insert(t);
    }
    Ok(marked)
}

/// Knobs of [`adapt_loop`].
#[derive(Clone, Copy, Debug)]
pub struct AdaptOptions {
    pub theta: f64,
    pub max_iters: usize,
    /// Stop once the residual estimator falls below this.
    pub eta_tol: f64,
    pub solver_tol: f64,
    pub lift: LiftKind,
}

impl Default for AdaptOptions {
    fn default() -> Self {
        Self {
            theta: DEFAULT_THETA,
            max_iters: 8,
            eta_tol: 0.0,
            solver_tol: crate::fem::DEFAULT_TOL,
            lift: LiftKind::ClosestPoint,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AdaptStep {
    pub iter: usize,
    pub n_dof: usize,
    pub err_h1: f64,
    pub err_l2: f64,
    pub eta: f64,
    pub lambda: f64,
    pub beta: f64,
    pub mu: f64,
}

#[derive(Clone, Debug)]
pub struct AdaptHistory {
    pub steps: Vec<AdaptStep>,
    pub final_mesh: SurfaceMesh,
}

impl AdaptHistory {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for step in &self.steps {
            w.serialize(step)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Least-squares slope of `log err_H1` against `log n_dof`.
    pub fn h1_slope(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self.steps.iter().map(|s| ((s.n_dof as f64).ln(), s.err_h1.ln())).collect();
        let n = pts.len() as f64;
        let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
        let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
        sxy / sxx
    }
}

/// Solve → estimate → mark → bisect, starting from `initial` and recording
/// one step per solve.
pub fn adapt_loop(initial: SurfaceMesh, solution: &ManufacturedSolution, options: AdaptOptions) -> Result<AdaptHistory> {
    let surface = *solution.surface();
    let mut mesh = initial;
    let mut steps = Vec::new();
    for iter in 0..=options.max_iters {
        let problem = ParametricProblem::new(mesh, options.lift, *solution).map_err(|e| e.at(iter, "mesh"))?;
        let (u, report) = parametric_solve(&problem, options.solver_tol).map_err(|e| e.at(iter, "solve"))?;
        let normals = &problem.mesh.normals;
        let residual = residual_estimator_parametric(&problem.mesh, &u.coefficients, |t, x| {
            parametric_forcing(&problem, x, &normals[t])
        })
        .map_err(|e| e.at(iter, "estimate"))?;
        let geometric =
            geometric_estimators_parametric(&surface, &problem.mesh, options.lift).map_err(|e| e.at(iter, "estimate"))?;
        let eta = residual.residual_total();
        steps.push(AdaptStep {
            iter,
            n_dof: report.n_dof,
            err_h1: report.err_h1,
            err_l2: report.err_l2,
            eta,
            lambda: geometric.lambda_total(),
            beta: geometric.beta_total(),
            mu: geometric.mu_total(),
        });
        log::info!("adapt iter {iter}: {} dofs, eta {eta:.4e}", report.n_dof);
        mesh = problem.mesh;
        if iter == options.max_iters || eta <= options.eta_tol {
            break;
        }
        let marked = dorfler_mark(&residual.residual, options.theta)?;
        mesh = refine_bisection(&mesh, &marked, &surface).map_err(|e| e.at(iter, "refine"))?;
    }
    Ok(AdaptHistory { steps, final_mesh: mesh })
}
