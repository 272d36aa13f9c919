//! Random points on and around a surface for property checks.

use rand::Rng;

use super::{ImplicitSurface, LiftKind};
use crate::Vec3;

fn unit_vector<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Points on the surface (not uniformly distributed in area).
pub fn random_surface_points<R: Rng>(surface: &ImplicitSurface, count: usize, rng: &mut R) -> Vec<Vec3> {
    (0..count)
        .map(|_| match *surface {
            ImplicitSurface::Torus {
                major_radius,
                minor_radius,
            } => {
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                let rho = major_radius + minor_radius * theta.cos();
                Vec3::new(rho * phi.cos(), rho * phi.sin(), minor_radius * theta.sin())
            }
            _ => surface
                .lift_unchecked(LiftKind::ScaledRadial, &unit_vector(rng))
                .expect("nonzero direction"),
        })
        .collect()
}

/// Points of the tube at signed distance uniform in `(-0.95, 0.95)` times the
/// tube half-width.
pub fn random_tube_points<R: Rng>(surface: &ImplicitSurface, count: usize, rng: &mut R) -> Vec<Vec3> {
    let width = 0.95 * surface.tube_half_width();
    random_surface_points(surface, count, rng)
        .into_iter()
        .map(|y| y + rng.random_range(-width..width) * surface.normal(&y))
        .collect()
}

/// A unit vector tilted away from `n` by an angle up to `max_angle`.
pub fn random_tilt<R: Rng>(n: &Vec3, max_angle: f64, rng: &mut R) -> Vec3 {
    let (t1, t2) = super::plane_basis(n);
    let angle = rng.random_range(0.0..max_angle);
    let dir = rng.random_range(0.0..std::f64::consts::TAU);
    angle.cos() * n + angle.sin() * (dir.cos() * t1 + dir.sin() * t2)
}
