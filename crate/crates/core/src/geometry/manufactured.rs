use nalgebra::Matrix3;

use super::ImplicitSurface;
use crate::error::Result;
use crate::Vec3;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Mode {
    /// `u = xyz` restricted to a sphere or ellipsoid.
    CubicMonomial,
    /// `u = sin(3φ) cos(θ)` in toroidal/poloidal angles.
    Toroidal,
    Zero,
    /// `f ≡ c` with no associated exact solution; only for forcing tests.
    ConstantForcing(f64),
}

/// Exact solution `u`, its tangential gradient and the forcing `f = -Δ_γ u`
/// on a surface. All three are evaluated at points of γ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManufacturedSolution {
    surface: ImplicitSurface,
    mode: Mode,
    scale: f64,
}

/// The default test problem for a surface.
pub fn manufactured(surface: &ImplicitSurface) -> Result<ManufacturedSolution> {
    let mode = match surface {
        ImplicitSurface::Sphere { .. } | ImplicitSurface::Ellipsoid { .. } => Mode::CubicMonomial,
        ImplicitSurface::Torus { .. } => Mode::Toroidal,
    };
    Ok(ManufacturedSolution {
        surface: *surface,
        mode,
        scale: 1.0,
    })
}

impl ManufacturedSolution {
    pub fn zero(surface: &ImplicitSurface) -> Self {
        Self {
            surface: *surface,
            mode: Mode::Zero,
            scale: 1.0,
        }
    }

    /// Constant forcing with `u ≡ 0` reported as the exact solution. The
    /// forcing has nonzero mean, so this is only meaningful for checking
    /// integrals of the transported forcing.
    pub fn constant_forcing(surface: &ImplicitSurface, value: f64) -> Self {
        Self {
            surface: *surface,
            mode: Mode::ConstantForcing(value),
            scale: 1.0,
        }
    }

    /// Same problem with `u` and `f` multiplied by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.scale *= factor;
        self
    }

    pub fn surface(&self) -> &ImplicitSurface {
        &self.surface
    }

    pub fn u(&self, y: &Vec3) -> f64 {
        self.scale
            * match self.mode {
                Mode::CubicMonomial => y.x * y.y * y.z,
                Mode::Toroidal => {
                    let (phi, theta) = self.torus_angles(y);
                    (3.0 * phi).sin() * theta.cos()
                }
                Mode::Zero | Mode::ConstantForcing(_) => 0.0,
            }
    }

    pub fn grad_gamma_u(&self, y: &Vec3) -> Vec3 {
        self.scale
            * match self.mode {
                Mode::CubicMonomial => {
                    let n = self.surface.normal(y);
                    let g = Vec3::new(y.y * y.z, y.x * y.z, y.x * y.y);
                    g - g.dot(&n) * n
                }
                Mode::Toroidal => {
                    let (phi, theta) = self.torus_angles(y);
                    let (minor, rho) = self.torus_radii(theta);
                    let e_phi = Vec3::new(-phi.sin(), phi.cos(), 0.0);
                    let t_theta = Vec3::new(
                        -theta.sin() * phi.cos(),
                        -theta.sin() * phi.sin(),
                        theta.cos(),
                    );
                    (3.0 * (3.0 * phi).cos() * theta.cos() / rho) * e_phi
                        - ((3.0 * phi).sin() * theta.sin() / minor) * t_theta
                }
                Mode::Zero | Mode::ConstantForcing(_) => Vec3::zeros(),
            }
    }

    pub fn f(&self, y: &Vec3) -> f64 {
        self.scale
            * match self.mode {
                Mode::CubicMonomial => {
                    // Δ_γ v = Δv - νᵀ D²v ν - (∇v·ν) div ν with Δ(xyz) = 0
                    let n = self.surface.normal(y);
                    let grad = Vec3::new(y.y * y.z, y.x * y.z, y.x * y.y);
                    let hess = Matrix3::new(0.0, y.z, y.y, y.z, 0.0, y.x, y.y, y.x, 0.0);
                    let lb = -n.dot(&(hess * n)) - grad.dot(&n) * self.surface.mean_curvature(y);
                    -lb
                }
                Mode::Toroidal => {
                    let (phi, theta) = self.torus_angles(y);
                    let (minor, rho) = self.torus_radii(theta);
                    let (c, s) = (theta.cos(), theta.sin());
                    let lb = (3.0 * phi).sin()
                        * (-c / (minor * minor) + s * s / (minor * rho) - 9.0 * c / (rho * rho));
                    -lb
                }
                Mode::Zero => 0.0,
                Mode::ConstantForcing(value) => value,
            }
    }

    fn torus_angles(&self, y: &Vec3) -> (f64, f64) {
        let major = match self.surface {
            ImplicitSurface::Torus { major_radius, .. } => major_radius,
            _ => unreachable!("toroidal mode on a non-torus"),
        };
        let rho = y.xy().norm();
        (y.y.atan2(y.x), y.z.atan2(rho - major))
    }

    /// Minor radius and distance to the axis `R + r cos θ` of the surface point
    /// with poloidal angle θ.
    fn torus_radii(&self, theta: f64) -> (f64, f64) {
        match self.surface {
            ImplicitSurface::Torus {
                major_radius,
                minor_radius,
            } => (minor_radius, major_radius + minor_radius * theta.cos()),
            _ => unreachable!("toroidal mode on a non-torus"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::testing::random_surface_points;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Δ_γ ũ(y) as the ambient Laplacian of the constant normal extension
    /// ũ ∘ P_d, by a fourth-order central stencil.
    fn fd_laplace_beltrami(sol: &ManufacturedSolution, y: &Vec3) -> f64 {
        let surface = sol.surface();
        let ext = |x: Vec3| sol.u(&surface.closest_point(&x).unwrap());
        let h = 1e-2 * surface.tube_half_width().min(1.0);
        let mut total = 0.0;
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = h;
            total += (-ext(y + 2.0 * e) + 16.0 * ext(y + e) - 30.0 * ext(*y) + 16.0 * ext(y - e)
                - ext(y - 2.0 * e))
                / (12.0 * h * h);
        }
        total
    }

    #[test]
    fn sphere_cubic_is_an_eigenfunction() {
        let s = ImplicitSurface::sphere(1.0).unwrap();
        let sol = manufactured(&s).unwrap();
        let y = Vec3::x();
        assert_eq!(sol.u(&y), 0.0);
        assert_eq!(sol.f(&y), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for y in random_surface_points(&s, 20, &mut rng) {
            assert_relative_eq!(sol.f(&y), 12.0 * y.x * y.y * y.z, epsilon = 1e-13);
            let fd = fd_laplace_beltrami(&sol, &y);
            assert!((fd + sol.f(&y)).abs() < 1e-6, "{fd} vs {}", sol.f(&y));
        }
    }

    #[test]
    fn forcing_matches_finite_difference_oracle_on_all_surfaces() {
        let surfaces = [
            ImplicitSurface::torus(2.0, 0.5).unwrap(),
            ImplicitSurface::ellipsoid(1.3, 1.0, 0.8).unwrap(),
            ImplicitSurface::ellipsoid(2.0, 1.0, 1.0).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for s in surfaces {
            let sol = manufactured(&s).unwrap();
            for y in random_surface_points(&s, 20, &mut rng) {
                let fd = fd_laplace_beltrami(&sol, &y);
                assert!(
                    (fd + sol.f(&y)).abs() < 1e-6,
                    "{}: residual {}",
                    s.name(),
                    (fd + sol.f(&y)).abs()
                );
            }
        }
    }

    #[test]
    fn tangential_gradient_matches_finite_differences() {
        let surfaces = [
            ImplicitSurface::sphere(1.0).unwrap(),
            ImplicitSurface::torus(2.0, 0.5).unwrap(),
            ImplicitSurface::ellipsoid(1.3, 1.0, 0.8).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in surfaces {
            let sol = manufactured(&s).unwrap();
            for y in random_surface_points(&s, 10, &mut rng) {
                let ext = |x: Vec3| sol.u(&s.closest_point(&x).unwrap());
                let h = 1e-5;
                let fd = Vec3::from_fn(|k, _| {
                    let mut e = Vec3::zeros();
                    e[k] = h;
                    (ext(y + e) - ext(y - e)) / (2.0 * h)
                });
                assert!((fd - sol.grad_gamma_u(&y)).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn scaling_is_linear() {
        let s = ImplicitSurface::torus(2.0, 0.5).unwrap();
        let sol = manufactured(&s).unwrap();
        let scaled = sol.scaled(-2.5);
        let y = Vec3::new(2.5, 0.0, 0.0);
        let y = s.closest_point(&(y + Vec3::new(0.0, 0.3, 0.1))).unwrap();
        assert_eq!(scaled.f(&y), -2.5 * sol.f(&y));
        assert_eq!(scaled.u(&y), -2.5 * sol.u(&y));
    }
}
