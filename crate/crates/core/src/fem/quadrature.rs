//! Symmetric quadrature rules on the reference triangle and tetrahedron in
//! barycentric form.

use crate::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Simplex {
    Triangle,
    Tetrahedron,
}

impl Simplex {
    /// Measure of the reference simplex.
    pub fn reference_measure(self) -> f64 {
        match self {
            Simplex::Triangle => 0.5,
            Simplex::Tetrahedron => 1.0 / 6.0,
        }
    }
}

/// Barycentric points and weights; the weights sum to the measure of the
/// reference simplex. Unused barycentric slots of triangle points are zero.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub domain: Simplex,
    pub degree: usize,
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Six-point rule exact for polynomials of degree 4.
    pub fn triangle_degree4() -> Self {
        const A1: f64 = 0.445_948_490_915_965;
        const W1: f64 = 0.223_381_589_678_011;
        const A2: f64 = 0.091_576_213_509_771;
        const W2: f64 = 0.109_951_743_655_322;
        let mut points = Vec::with_capacity(6);
        let mut weights = Vec::with_capacity(6);
        for (a, w) in [(A1, W1), (A2, W2)] {
            let b = 1.0 - 2.0 * a;
            for p in [[b, a, a, 0.0], [a, b, a, 0.0], [a, a, b, 0.0]] {
                points.push(p);
                weights.push(0.5 * w);
            }
        }
        Self {
            domain: Simplex::Triangle,
            degree: 4,
            points,
            weights,
        }
    }

    /// Four-point rule exact for polynomials of degree 2.
    pub fn tetrahedron_degree2() -> Self {
        const A: f64 = 0.585_410_196_624_968_5;
        const B: f64 = 0.138_196_601_125_010_5;
        let points = vec![[A, B, B, B], [B, A, B, B], [B, B, A, B], [B, B, B, A]];
        Self {
            domain: Simplex::Tetrahedron,
            degree: 2,
            points,
            weights: vec![1.0 / 24.0; 4],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Physical points and weights on a simplex of the given measure with the
    /// given vertices.
    pub fn map<'a>(&'a self, vertices: &'a [Vec3], measure: f64) -> impl Iterator<Item = (Vec3, f64, &'a [f64; 4])> + 'a {
        let scale = measure / self.domain.reference_measure();
        self.points.iter().zip(&self.weights).map(move |(bary, w)| {
            let x = vertices
                .iter()
                .zip(bary.iter())
                .fold(Vec3::zeros(), |acc, (v, l)| acc + *l * v);
            (x, w * scale, bary)
        })
    }
}
