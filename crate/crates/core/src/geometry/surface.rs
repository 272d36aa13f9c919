use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Mat3, Vec3};

const NEWTON_TOL: f64 = 1e-13;
const NEWTON_MAX_ITER: usize = 50;

/// Analytic closed C² surface given by a signed distance function.
///
/// The sign convention is negative inside, positive outside; the gradient of
/// the distance is the outward unit normal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ImplicitSurface {
    Sphere {
        radius: f64,
    },
    Torus {
        major_radius: f64,
        minor_radius: f64,
    },
    Ellipsoid {
        a: f64,
        b: f64,
        c: f64,
    },
}

/// How a point near the surface is carried onto it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LiftKind {
    /// `x - d(x) ∇d(x)`.
    #[default]
    ClosestPoint,
    /// Intersection of the ray from the surface center through `x` with the
    /// surface. For the torus the center is the nearest point of the core circle.
    ScaledRadial,
}

/// Value, gradient and Hessian of the signed distance at a point.
#[derive(Clone, Copy, Debug)]
pub struct DistanceJet {
    pub distance: f64,
    pub gradient: Vec3,
    pub hessian: Mat3,
}

impl DistanceJet {
    pub fn closest_point(&self, x: &Vec3) -> Vec3 {
        x - self.distance * self.gradient
    }

    /// The two eigenvalues of the Hessian belonging to tangential directions,
    /// in decreasing order.
    pub fn tangential_eigenvalues(&self) -> [f64; 2] {
        tangential_eigenvalues(&self.hessian, &self.gradient)
    }
}

impl ImplicitSurface {
    pub fn sphere(radius: f64) -> Result<Self> {
        Self::Sphere { radius }.validated()
    }

    pub fn torus(major_radius: f64, minor_radius: f64) -> Result<Self> {
        Self::Torus {
            major_radius,
            minor_radius,
        }
        .validated()
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::Ellipsoid { a, b, c }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        let ok = match self {
            Self::Sphere { radius } => radius.is_finite() && radius > 0.0,
            Self::Torus {
                major_radius,
                minor_radius,
            } => {
                major_radius.is_finite()
                    && minor_radius > 0.0
                    && major_radius > minor_radius
            }
            Self::Ellipsoid { a, b, c } => [a, b, c].iter().all(|s| s.is_finite() && *s > 0.0),
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::InvalidSurface(format!("{self:?}")))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Sphere { .. } => "sphere",
            Self::Torus { .. } => "torus",
            Self::Ellipsoid { .. } => "ellipsoid",
        }
    }

    /// Largest principal curvature magnitude over the surface.
    pub fn max_curvature(&self) -> f64 {
        match *self {
            Self::Sphere { radius } => 1.0 / radius,
            Self::Torus {
                major_radius,
                minor_radius,
            } => (1.0 / minor_radius).max(1.0 / (major_radius - minor_radius)),
            Self::Ellipsoid { a, b, c } => {
                let max = a.max(b).max(c);
                let min = a.min(b).min(c);
                max / (min * min)
            }
        }
    }

    /// Half-width `1/(2 K_∞)` of the tube in which all operations are admitted.
    pub fn tube_half_width(&self) -> f64 {
        0.5 / self.max_curvature()
    }

    /// Half side lengths of the axis-aligned bounding box of the surface.
    pub fn half_extents(&self) -> Vec3 {
        match *self {
            Self::Sphere { radius } => Vec3::repeat(radius),
            Self::Torus {
                major_radius,
                minor_radius,
            } => Vec3::new(
                major_radius + minor_radius,
                major_radius + minor_radius,
                minor_radius,
            ),
            Self::Ellipsoid { a, b, c } => Vec3::new(a, b, c),
        }
    }

    /// Exact surface area where a closed form exists.
    pub fn area(&self) -> Option<f64> {
        use std::f64::consts::PI;
        match *self {
            Self::Sphere { radius } => Some(4.0 * PI * radius * radius),
            Self::Torus {
                major_radius,
                minor_radius,
            } => Some(4.0 * PI * PI * major_radius * minor_radius),
            Self::Ellipsoid { .. } => None,
        }
    }

    /// Signed distance without the tube restriction. Used to sample `d` at bulk
    /// vertices far from the surface, where only its sign and rough size matter.
    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        match *self {
            Self::Sphere { radius } => x.norm() - radius,
            Self::Torus {
                major_radius,
                minor_radius,
            } => {
                let rho = x.xy().norm();
                ((rho - major_radius).powi(2) + x.z * x.z).sqrt() - minor_radius
            }
            Self::Ellipsoid { a, b, c } => match ellipsoid_projection([a, b, c], x) {
                Some((y, t)) => t.signum() * (x - y).norm(),
                None => {
                    let s = ellipsoid_radial_scale([a, b, c], x);
                    (s - 1.0) * a.min(b).min(c)
                }
            },
        }
    }

    fn check_tube(&self, distance: f64) -> Result<()> {
        let bound = self.tube_half_width();
        if distance.abs() < bound {
            Ok(())
        } else {
            Err(Error::OutsideTube { distance, bound })
        }
    }

    /// Distance, gradient and Hessian at a point of the tube.
    pub fn distance_jet(&self, x: &Vec3) -> Result<DistanceJet> {
        let jet = self.distance_jet_unchecked(x)?;
        self.check_tube(jet.distance)?;
        Ok(jet)
    }

    /// Distance jet wherever the closest point is unique, ignoring the
    /// conservative tube bound.
    pub fn distance_jet_unchecked(&self, x: &Vec3) -> Result<DistanceJet> {
        match *self {
            Self::Sphere { radius } => {
                let r = x.norm();
                if r < 1e-14 * radius {
                    return Err(Error::OutsideTube {
                        distance: -radius,
                        bound: self.tube_half_width(),
                    });
                }
                let n = x / r;
                Ok(DistanceJet {
                    distance: r - radius,
                    gradient: n,
                    hessian: (Mat3::identity() - n * n.transpose()) / r,
                })
            }
            Self::Torus {
                major_radius,
                minor_radius,
            } => {
                let rho = x.xy().norm();
                let core = major_radius * Vec3::new(x.x, x.y, 0.0) / rho;
                let w = x - core;
                let q = w.norm();
                if rho < 1e-14 * major_radius || q < 1e-14 * minor_radius {
                    return Err(Error::OutsideTube {
                        distance: if q < 1e-14 { -minor_radius } else { -major_radius },
                        bound: self.tube_half_width(),
                    });
                }
                let n = w / q;
                let e_phi = Vec3::new(-x.y / rho, x.x / rho, 0.0);
                let t_theta = e_phi.cross(&n);
                let cos_theta = (rho - major_radius) / q;
                let hessian = t_theta * t_theta.transpose() / q
                    + (cos_theta / rho) * e_phi * e_phi.transpose();
                Ok(DistanceJet {
                    distance: q - minor_radius,
                    gradient: n,
                    hessian,
                })
            }
            Self::Ellipsoid { a, b, c } => {
                let axes = [a, b, c];
                let (distance, gradient) = ellipsoid_distance_gradient(axes, x)?;
                let step = 1e-5 * (1.0 + x.norm());
                let mut hessian = Mat3::zeros();
                for k in 0..3 {
                    let mut e = Vec3::zeros();
                    e[k] = step;
                    let (_, gp) = ellipsoid_distance_gradient(axes, &(x + e))?;
                    let (_, gm) = ellipsoid_distance_gradient(axes, &(x - e))?;
                    hessian.set_column(k, &((gp - gm) / (2.0 * step)));
                }
                let hessian = 0.5 * (hessian + hessian.transpose());
                Ok(DistanceJet {
                    distance,
                    gradient,
                    hessian,
                })
            }
        }
    }

    /// Closest point projection `x - d(x) ∇d(x)`.
    pub fn closest_point(&self, x: &Vec3) -> Result<Vec3> {
        let (d, g) = self.distance_gradient(x)?;
        self.check_tube(d)?;
        Ok(x - d * g)
    }

    pub fn closest_point_unchecked(&self, x: &Vec3) -> Result<Vec3> {
        let (d, g) = self.distance_gradient(x)?;
        Ok(x - d * g)
    }

    /// Distance and gradient only; avoids the finite-difference Hessian on the
    /// ellipsoid.
    pub fn distance_gradient(&self, x: &Vec3) -> Result<(f64, Vec3)> {
        match *self {
            Self::Ellipsoid { a, b, c } => ellipsoid_distance_gradient([a, b, c], x),
            _ => {
                let jet = self.distance_jet_unchecked(x)?;
                Ok((jet.distance, jet.gradient))
            }
        }
    }

    /// Carries `x` onto the surface with the chosen lift.
    pub fn lift(&self, kind: LiftKind, x: &Vec3) -> Result<Vec3> {
        self.check_tube(self.signed_distance(x))?;
        self.lift_unchecked(kind, x)
    }

    pub fn lift_unchecked(&self, kind: LiftKind, x: &Vec3) -> Result<Vec3> {
        match kind {
            LiftKind::ClosestPoint => self.closest_point_unchecked(x),
            LiftKind::ScaledRadial => match *self {
                Self::Sphere { radius } => {
                    let r = x.norm();
                    if r < 1e-14 * radius {
                        return Err(Error::RayMiss);
                    }
                    Ok(radius * x / r)
                }
                Self::Ellipsoid { a, b, c } => {
                    let s = ellipsoid_radial_scale([a, b, c], x);
                    if !(s > 1e-14) {
                        return Err(Error::RayMiss);
                    }
                    Ok(x / s)
                }
                Self::Torus {
                    major_radius,
                    minor_radius,
                } => {
                    let rho = x.xy().norm();
                    if rho < 1e-14 * major_radius {
                        return Err(Error::RayMiss);
                    }
                    let core = major_radius * Vec3::new(x.x, x.y, 0.0) / rho;
                    let w = x - core;
                    let q = w.norm();
                    if q < 1e-14 * minor_radius {
                        return Err(Error::RayMiss);
                    }
                    Ok(core + minor_radius * w / q)
                }
            },
        }
    }

    /// Jacobian of the lift at `x` as a map R³ → R³.
    pub fn lift_jacobian(&self, kind: LiftKind, x: &Vec3) -> Result<Mat3> {
        let closest = |jet: DistanceJet| {
            Mat3::identity() - jet.gradient * jet.gradient.transpose() - jet.distance * jet.hessian
        };
        match (kind, *self) {
            (LiftKind::ClosestPoint, _) | (LiftKind::ScaledRadial, Self::Torus { .. }) => {
                Ok(closest(self.distance_jet_unchecked(x)?))
            }
            (LiftKind::ScaledRadial, Self::Sphere { radius }) => {
                let r = x.norm();
                if r < 1e-14 * radius {
                    return Err(Error::RayMiss);
                }
                Ok(radius * (Mat3::identity() / r - x * x.transpose() / r.powi(3)))
            }
            (LiftKind::ScaledRadial, Self::Ellipsoid { a, b, c }) => {
                let s = ellipsoid_radial_scale([a, b, c], x);
                if !(s > 1e-14) {
                    return Err(Error::RayMiss);
                }
                let grad_s = Vec3::new(x.x / (a * a), x.y / (b * b), x.z / (c * c)) / s;
                Ok(Mat3::identity() / s - x * grad_s.transpose() / (s * s))
            }
        }
    }

    /// Ratio of area elements `q/q_Γ` of a lift restricted to the plane with
    /// unit normal `nu_gamma`: the Jacobian determinant of the lift from that
    /// plane onto the surface.
    pub fn lift_area_ratio(&self, kind: LiftKind, x: &Vec3, nu_gamma: &Vec3) -> Result<f64> {
        let jac = self.lift_jacobian(kind, x)?;
        let (t1, t2) = plane_basis(nu_gamma);
        let image = (jac * t1).cross(&(jac * t2));
        let target = self.normal(&self.lift_unchecked(kind, x)?);
        let signed = image.dot(&target);
        if signed <= 0.0 {
            return Err(Error::NormalFlip { cosine: signed });
        }
        Ok(signed)
    }

    /// `det(I - d W)(ν · ν_Γ)` from the tangential eigenvalues of `W = D²d`.
    pub fn area_ratio(&self, x: &Vec3, nu_gamma: &Vec3) -> Result<f64> {
        let jet = self.distance_jet(x)?;
        let cosine = jet.gradient.dot(nu_gamma);
        if cosine <= 0.0 {
            return Err(Error::NormalFlip { cosine });
        }
        let [m1, m2] = jet.tangential_eigenvalues();
        Ok((1.0 - jet.distance * m1) * (1.0 - jet.distance * m2) * cosine)
    }

    /// Nonzero eigenvalues of `D²d(x)`: the principal curvatures of the
    /// parallel surface through `x`, in decreasing order.
    pub fn parallel_curvatures(&self, x: &Vec3) -> Result<[f64; 2]> {
        Ok(self.distance_jet(x)?.tangential_eigenvalues())
    }

    /// `Π_Γ (I - d W) g`: tangential gradient on a discrete surface with normal
    /// `nu_gamma` of the function `v ∘ P_d`, where `g = ∇_γ v(P_d(x))`.
    pub fn lifted_tangential_gradient(&self, x: &Vec3, nu_gamma: &Vec3, grad: &Vec3) -> Result<Vec3> {
        let jet = self.distance_jet(x)?;
        let v = grad - jet.distance * (jet.hessian * grad);
        Ok(v - v.dot(nu_gamma) * nu_gamma)
    }

    /// Level-set function whose zero set is the surface (not a distance).
    pub fn level_set(&self, x: &Vec3) -> f64 {
        match *self {
            Self::Sphere { radius } => x.norm_squared() / (radius * radius) - 1.0,
            Self::Ellipsoid { a, b, c } => {
                (x.x / a).powi(2) + (x.y / b).powi(2) + (x.z / c).powi(2) - 1.0
            }
            Self::Torus {
                major_radius,
                minor_radius,
            } => (x.xy().norm() - major_radius).powi(2) + x.z * x.z - minor_radius * minor_radius,
        }
    }

    pub fn level_set_gradient(&self, x: &Vec3) -> Vec3 {
        match *self {
            Self::Sphere { radius } => 2.0 * x / (radius * radius),
            Self::Ellipsoid { a, b, c } => {
                2.0 * Vec3::new(x.x / (a * a), x.y / (b * b), x.z / (c * c))
            }
            Self::Torus { major_radius, .. } => {
                let rho = x.xy().norm();
                let s = 2.0 * (rho - major_radius) / rho;
                Vec3::new(s * x.x, s * x.y, 2.0 * x.z)
            }
        }
    }

    pub fn level_set_hessian(&self, x: &Vec3) -> Mat3 {
        match *self {
            Self::Sphere { radius } => 2.0 * Mat3::identity() / (radius * radius),
            Self::Ellipsoid { a, b, c } => {
                Mat3::from_diagonal(&Vec3::new(2.0 / (a * a), 2.0 / (b * b), 2.0 / (c * c)))
            }
            Self::Torus { major_radius, .. } => {
                let rho = x.xy().norm();
                let p = [x.x, x.y];
                let mut h = Mat3::zeros();
                for i in 0..2 {
                    for j in 0..2 {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        h[(i, j)] = 2.0
                            * (p[i] * p[j] / (rho * rho)
                                + (rho - major_radius) * (delta / rho - p[i] * p[j] / rho.powi(3)));
                    }
                }
                h[(2, 2)] = 2.0;
                h
            }
        }
    }

    /// Unit normal of the level set through `x`.
    pub fn normal(&self, x: &Vec3) -> Vec3 {
        self.level_set_gradient(x).normalize()
    }

    /// Mean curvature `div ν` of the level set through `x` (sum of principal
    /// curvatures on the surface).
    pub fn mean_curvature(&self, x: &Vec3) -> f64 {
        let g = self.level_set_gradient(x);
        let norm = g.norm();
        let n = g / norm;
        let h = self.level_set_hessian(x);
        (h.trace() - n.dot(&(h * n))) / norm
    }

    /// Principal curvatures at a surface point from the shape operator of the
    /// level set, in decreasing order.
    pub fn principal_curvatures(&self, y: &Vec3) -> [f64; 2] {
        let g = self.level_set_gradient(y);
        let norm = g.norm();
        let n = g / norm;
        let proj = Mat3::identity() - n * n.transpose();
        let shape = proj * self.level_set_hessian(y) * proj / norm;
        tangential_eigenvalues(&(0.5 * (shape + shape.transpose())), &n)
    }
}

/// Orthonormal basis `(t1, t2)` of the plane with unit normal `n`, with
/// `t1 × t2 = n`.
pub fn plane_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let t1 = (helper - helper.dot(n) * n).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

/// Eigenvalues of a symmetric matrix on the plane orthogonal to `normal`,
/// dropping the eigenpair most aligned with `normal`.
fn tangential_eigenvalues(m: &Mat3, normal: &Vec3) -> [f64; 2] {
    let eig = SymmetricEigen::new(*m);
    let drop = (0..3)
        .max_by(|&i, &j| {
            let ai = eig.eigenvectors.column(i).dot(normal).abs();
            let aj = eig.eigenvectors.column(j).dot(normal).abs();
            ai.total_cmp(&aj)
        })
        .unwrap_or(0);
    let mut vals: Vec<f64> = (0..3)
        .filter(|&i| i != drop)
        .map(|i| eig.eigenvalues[i])
        .collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    [vals[0], vals[1]]
}

fn ellipsoid_radial_scale(axes: [f64; 3], x: &Vec3) -> f64 {
    ((x.x / axes[0]).powi(2) + (x.y / axes[1]).powi(2) + (x.z / axes[2]).powi(2)).sqrt()
}

/// Closest point on the ellipsoid and the Lagrange parameter `t` with
/// `y_i = a_i² x_i / (a_i² + t)`; `t > 0` outside. `None` when `x` lies in the
/// interior region where the parameter leaves the convex branch.
fn ellipsoid_projection(axes: [f64; 3], x: &Vec3) -> Option<(Vec3, f64)> {
    ellipsoid_newton(axes, x).ok().flatten()
}

fn ellipsoid_newton(axes: [f64; 3], x: &Vec3) -> Result<Option<(Vec3, f64)>> {
    let a2 = axes.map(|a| a * a);
    let min_a2 = a2.iter().cloned().fold(f64::INFINITY, f64::min);
    let g = |t: f64| -> (f64, f64) {
        let mut value = -1.0;
        let mut slope = 0.0;
        for i in 0..3 {
            if x[i] == 0.0 {
                continue;
            }
            let denom = a2[i] + t;
            let ratio = axes[i] * x[i] / denom;
            value += ratio * ratio;
            slope -= 2.0 * ratio * ratio / denom;
        }
        (value, slope)
    };
    // Each term alone is at most one at the root, so this start lies left of it
    // where g is convex and decreasing: Newton then increases monotonically.
    let mut t = (0..3)
        .map(|i| axes[i] * x[i].abs() - a2[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let floor = -min_a2 * (1.0 - 1e-12);
    if t < floor {
        t = floor;
        if g(t).0 < 0.0 {
            return Ok(None);
        }
    }
    for _ in 0..NEWTON_MAX_ITER {
        let (value, slope) = g(t);
        if slope == 0.0 {
            return Ok(None);
        }
        let step = value / slope;
        t -= step;
        if step.abs() <= NEWTON_TOL * (1.0 + t.abs()) {
            let y = Vec3::from_fn(|i, _| a2[i] * x[i] / (a2[i] + t));
            return Ok(Some((y, t)));
        }
    }
    Err(Error::NewtonDivergence {
        iterations: NEWTON_MAX_ITER,
    })
}

fn ellipsoid_distance_gradient(axes: [f64; 3], x: &Vec3) -> Result<(f64, Vec3)> {
    match ellipsoid_newton(axes, x)? {
        Some((y, t)) => {
            let normal = Vec3::from_fn(|i, _| y[i] / (axes[i] * axes[i]));
            let scale = normal.norm();
            // x - y = t * normal exactly
            Ok((t * scale, normal / scale))
        }
        None => Err(Error::OutsideTube {
            distance: (ellipsoid_radial_scale(axes, x) - 1.0) * axes.iter().cloned().fold(f64::INFINITY, f64::min),
            bound: 0.5 / (axes.iter().cloned().fold(0.0, f64::max)
                / axes.iter().map(|a| a * a).fold(f64::INFINITY, f64::min)),
        }),
    }
}
