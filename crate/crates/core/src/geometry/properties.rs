//! Randomized checks of the distance-function identities, shared by the
//! `check-geometry` command and the test suites.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::sampling::{random_tilt, random_tube_points};
use super::{plane_basis, ImplicitSurface};
use crate::error::Result;
use crate::Vec3;

pub const GRADIENT_NORM_TOL: f64 = 1e-10;
pub const HESSIAN_NORMAL_TOL: f64 = 1e-8;
pub const IDEMPOTENCE_TOL: f64 = 1e-12;
pub const PROJECTION_DISTANCE_TOL: f64 = 1e-10;
pub const CURVATURE_REL_TOL: f64 = 1e-6;
pub const AREA_RATIO_REL_TOL: f64 = 1e-4;

/// Worst observed deviation of each identity over the sample.
#[derive(Clone, Debug, Serialize)]
pub struct PropertyReport {
    pub surface: String,
    pub samples: usize,
    pub gradient_norm: f64,
    pub hessian_normal: f64,
    pub idempotence: f64,
    pub projection_distance: f64,
    pub curvature_relative: f64,
    pub area_ratio_relative: f64,
}

impl PropertyReport {
    pub fn checks(&self) -> [(&'static str, f64, f64); 6] {
        [
            ("| |grad d| - 1 |", self.gradient_norm, GRADIENT_NORM_TOL),
            ("|D2d grad d|", self.hessian_normal, HESSIAN_NORMAL_TOL),
            ("projection idempotence", self.idempotence, IDEMPOTENCE_TOL),
            ("| |x - P(x)| - |d| |", self.projection_distance, PROJECTION_DISTANCE_TOL),
            ("parallel curvatures (rel)", self.curvature_relative, CURVATURE_REL_TOL),
            ("area ratio vs Jacobian (rel)", self.area_ratio_relative, AREA_RATIO_REL_TOL),
        ]
    }

    pub fn passed(&self) -> bool {
        self.checks().iter().all(|(_, value, tol)| value < tol)
    }
}

pub fn run_property_suite(surface: &ImplicitSurface, samples: usize, seed: u64) -> Result<PropertyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = random_tube_points(surface, samples, &mut rng);
    let mut report = PropertyReport {
        surface: surface.name().to_string(),
        samples,
        gradient_norm: 0.0,
        hessian_normal: 0.0,
        idempotence: 0.0,
        projection_distance: 0.0,
        curvature_relative: 0.0,
        area_ratio_relative: 0.0,
    };
    for x in &points {
        let jet = surface.distance_jet(x)?;
        report.gradient_norm = report.gradient_norm.max((jet.gradient.norm() - 1.0).abs());
        report.hessian_normal = report.hessian_normal.max((jet.hessian * jet.gradient).norm());

        let p = surface.closest_point(x)?;
        let pp = surface.closest_point(&p)?;
        report.idempotence = report.idempotence.max((pp - p).norm());
        report.projection_distance = report
            .projection_distance
            .max(((x - p).norm() - jet.distance.abs()).abs());

        let parallel = jet.tangential_eigenvalues();
        let kappa = surface.principal_curvatures(&p);
        for i in 0..2 {
            let expected = kappa[i] / (1.0 + jet.distance * kappa[i]);
            let scale = expected.abs().max(kappa[0].abs());
            report.curvature_relative = report
                .curvature_relative
                .max((parallel[i] - expected).abs() / scale);
        }

        let tilt = random_tilt(&jet.gradient, 0.5, &mut rng);
        let ratio = surface.area_ratio(x, &tilt)?;
        let (t1, t2) = plane_basis(&tilt);
        let h = 1e-6 * (1.0 + x.norm());
        let column = |t: Vec3| -> Result<Vec3> {
            Ok((surface.closest_point(&(x + h * t))? - surface.closest_point(&(x - h * t))?) / (2.0 * h))
        };
        let jacobian = column(t1)?.cross(&column(t2)?).norm();
        report.area_ratio_relative = report
            .area_ratio_relative
            .max((ratio - jacobian).abs() / ratio);
    }
    Ok(report)
}
