//! Gradients of linear Lagrange basis functions on simplices in R³.

use crate::error::{Error, Result};
use crate::Vec3;

/// Geometry of a triangle embedded in R³.
#[derive(Clone, Copy, Debug)]
pub struct TriangleGeometry {
    pub gradients: [Vec3; 3],
    pub normal: Vec3,
    pub area: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct TetGeometry {
    pub gradients: [Vec3; 4],
    /// Signed volume; positive for the reference orientation.
    pub volume: f64,
}

fn max_edge(vertices: &[Vec3]) -> f64 {
    let mut h: f64 = 0.0;
    for i in 0..vertices.len() {
        for j in i + 1..vertices.len() {
            h = h.max((vertices[i] - vertices[j]).norm());
        }
    }
    h
}

/// Tangential gradients of the three hat functions; they lie in the facet
/// plane. The normal follows the vertex orientation.
pub fn triangle_geometry(v: &[Vec3; 3]) -> Result<TriangleGeometry> {
    let cross = (v[1] - v[0]).cross(&(v[2] - v[0]));
    let twice_area = cross.norm();
    let h = max_edge(v);
    if !(twice_area > 2e-14 * h * h) {
        return Err(Error::DegenerateSimplex {
            measure: 0.5 * twice_area,
        });
    }
    let normal = cross / twice_area;
    let gradients = [0, 1, 2].map(|i| {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        normal.cross(&(v[k] - v[j])) / twice_area
    });
    Ok(TriangleGeometry {
        gradients,
        normal,
        area: 0.5 * twice_area,
    })
}

pub fn tet_geometry(v: &[Vec3; 4]) -> Result<TetGeometry> {
    let volume = (v[1] - v[0]).dot(&(v[2] - v[0]).cross(&(v[3] - v[0]))) / 6.0;
    let h = max_edge(v);
    if !(volume.abs() > 1e-14 * h * h * h) {
        return Err(Error::DegenerateSimplex { measure: volume });
    }
    let gradients = [0, 1, 2, 3].map(|i| {
        let others: Vec<Vec3> = (0..4).filter(|&j| j != i).map(|j| v[j]).collect();
        let n = (others[1] - others[0]).cross(&(others[2] - others[0]));
        n / n.dot(&(v[i] - others[0]))
    });
    Ok(TetGeometry { gradients, volume })
}

/// Gradients of the P1 basis on a triangle (3 points, tangential gradients)
/// or a tetrahedron (4 points).
pub fn p1_facet_gradients(vertices: &[Vec3]) -> Result<Vec<Vec3>> {
    match vertices.len() {
        3 => Ok(triangle_geometry(&[vertices[0], vertices[1], vertices[2]])?
            .gradients
            .to_vec()),
        4 => Ok(tet_geometry(&[vertices[0], vertices[1], vertices[2], vertices[3]])?
            .gradients
            .to_vec()),
        n => Err(Error::Unsupported(format!("simplex with {n} vertices"))),
    }
}

/// Barycentric coordinates of `x` in a tetrahedron.
pub fn tet_barycentric(v: &[Vec3; 4], gradients: &[Vec3; 4], x: &Vec3) -> [f64; 4] {
    let mut l = [0.0; 4];
    for i in 1..4 {
        l[i] = gradients[i].dot(&(x - v[0]));
    }
    l[0] = 1.0 - l[1] - l[2] - l[3];
    l
}
