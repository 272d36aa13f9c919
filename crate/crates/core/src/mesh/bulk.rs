use crate::error::{Error, Result};
use crate::geometry::ImplicitSurface;
use crate::Vec3;

/// Corner offsets of the six Kuhn tetrahedra of the unit cube; tet `k`
/// follows the coordinate permutation `KUHN_PERMUTATIONS[k]`.
const KUHN_PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Uniform Kuhn (Freudenthal) tetrahedral mesh of the cube `[-a, a]³`.
#[derive(Clone, Debug)]
pub struct BulkMesh {
    pub vertices: Vec<Vec3>,
    pub tets: Vec<[usize; 4]>,
    pub half_width: f64,
    pub cells_per_axis: usize,
    /// Edge length of the cubes.
    pub h: f64,
}

/// Local corner offsets of the Kuhn tets, positively oriented.
fn kuhn_corners() -> [[[usize; 3]; 4]; 6] {
    KUHN_PERMUTATIONS.map(|perm| {
        let mut path = [[0usize; 3]; 4];
        for step in 0..3 {
            path[step + 1] = path[step];
            path[step + 1][perm[step]] = 1;
        }
        let p = path.map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64));
        let vol = (p[1] - p[0]).dot(&(p[2] - p[0]).cross(&(p[3] - p[0])));
        if vol < 0.0 {
            path.swap(2, 3);
        }
        path
    })
}

/// Builds the background mesh; the box must contain the tube around γ.
pub fn build_bulk_mesh(surface: &ImplicitSurface, half_width: f64, cells_per_axis: usize) -> Result<BulkMesh> {
    let required = surface.half_extents().max() + surface.tube_half_width();
    if !(half_width > required) {
        return Err(Error::BoxTooSmall {
            half_width,
            required,
        });
    }
    if cells_per_axis < 2 {
        return Err(Error::Config(format!(
            "bulk mesh needs at least 2 cells per axis, got {cells_per_axis}"
        )));
    }
    let n = cells_per_axis;
    let h = 2.0 * half_width / n as f64;
    let np = n + 1;
    let mut vertices = Vec::with_capacity(np * np * np);
    for k in 0..np {
        for j in 0..np {
            for i in 0..np {
                vertices.push(Vec3::new(
                    -half_width + i as f64 * h,
                    -half_width + j as f64 * h,
                    -half_width + k as f64 * h,
                ));
            }
        }
    }
    let corners = kuhn_corners();
    let mut tets = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                for local in &corners {
                    tets.push(local.map(|c| (i + c[0]) + np * ((j + c[1]) + np * (k + c[2]))));
                }
            }
        }
    }
    Ok(BulkMesh {
        vertices,
        tets,
        half_width,
        cells_per_axis,
        h,
    })
}

impl BulkMesh {
    pub fn corners(&self, t: usize) -> [Vec3; 4] {
        self.tets[t].map(|i| self.vertices[i])
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let p = self.corners(t);
        let mut d: f64 = 0.0;
        for i in 0..4 {
            for j in i + 1..4 {
                d = d.max((p[i] - p[j]).norm());
            }
        }
        d
    }

    /// Index of a tet containing `x`, or `None` outside the box.
    pub fn locate(&self, x: &Vec3) -> Option<usize> {
        let n = self.cells_per_axis;
        let mut cell = [0usize; 3];
        let mut local = [0.0; 3];
        for a in 0..3 {
            let s = (x[a] + self.half_width) / self.h;
            if !(0.0..=n as f64).contains(&s) {
                return None;
            }
            let c = (s.floor() as usize).min(n - 1);
            cell[a] = c;
            local[a] = s - c as f64;
        }
        let mut order = [0usize, 1, 2];
        order.sort_by(|&p, &q| local[q].total_cmp(&local[p]));
        let k = KUHN_PERMUTATIONS
            .iter()
            .position(|perm| *perm == order)
            .expect("every ordering is a Kuhn permutation");
        Some(6 * (cell[0] + n * (cell[1] + n * cell[2])) + k)
    }

    /// For every vertex, the tets containing it (CSR offsets and indices).
    pub fn vertex_tets(&self) -> (Vec<usize>, Vec<usize>) {
        let mut counts = vec![0usize; self.vertices.len() + 1];
        for tet in &self.tets {
            for v in tet {
                counts[v + 1] += 1;
            }
        }
        for i in 0..self.vertices.len() {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut indices = vec![0usize; counts[self.vertices.len()]];
        for (t, tet) in self.tets.iter().enumerate() {
            for v in tet {
                indices[fill[*v]] = t;
                fill[*v] += 1;
            }
        }
        (counts, indices)
    }

    /// Signed distance sampled at the vertices, with exact zeros nudged to
    /// `+1e-12 h` so no vertex lies on the discrete zero set.
    pub fn nodal_distance(&self, surface: &ImplicitSurface) -> Vec<f64> {
        let nudge = 1e-12 * self.h;
        self.vertices
            .iter()
            .map(|v| {
                let d = surface.signed_distance(v);
                if d == 0.0 {
                    nudge
                } else {
                    d
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::tet_geometry;
    use std::collections::HashMap;

    fn sphere() -> ImplicitSurface {
        ImplicitSurface::sphere(1.0).unwrap()
    }

    #[test]
    fn two_cells_per_axis() {
        let m = build_bulk_mesh(&sphere(), 1.6, 2).unwrap();
        assert_eq!(m.tets.len(), 48);
        let mut total = 0.0;
        for t in 0..m.tets.len() {
            let vol = tet_geometry(&m.corners(t)).unwrap().volume;
            assert!(vol > 0.0);
            total += vol;
        }
        assert!((total - 3.2f64.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn faces_are_shared_by_two_tets() {
        let m = build_bulk_mesh(&sphere(), 1.6, 4).unwrap();
        assert_eq!(m.tets.len(), 384);
        let mut faces: HashMap<[usize; 3], usize> = HashMap::new();
        for tet in &m.tets {
            for skip in 0..4 {
                let mut f: Vec<usize> = (0..4).filter(|&i| i != skip).map(|i| tet[i]).collect();
                f.sort_unstable();
                *faces.entry([f[0], f[1], f[2]]).or_default() += 1;
            }
        }
        let on_boundary = |f: &[usize; 3]| {
            (0..3).any(|a| {
                f.iter().all(|&v| (m.vertices[v][a] - 1.6).abs() < 1e-12)
                    || f.iter().all(|&v| (m.vertices[v][a] + 1.6).abs() < 1e-12)
            })
        };
        for (f, count) in faces {
            if on_boundary(&f) {
                assert_eq!(count, 1);
            } else {
                assert_eq!(count, 2, "{f:?}");
            }
        }
    }

    #[test]
    fn box_must_contain_tube() {
        assert!(matches!(
            build_bulk_mesh(&sphere(), 1.2, 4),
            Err(Error::BoxTooSmall { .. })
        ));
    }

    #[test]
    fn locate_finds_containing_tet() {
        let m = build_bulk_mesh(&sphere(), 1.6, 5).unwrap();
        let points = [
            Vec3::new(0.13, -0.71, 0.42),
            Vec3::new(-1.59, 1.59, 0.0),
            Vec3::new(0.9, 0.31, -1.2),
        ];
        for x in points {
            let t = m.locate(&x).unwrap();
            let geo = tet_geometry(&m.corners(t)).unwrap();
            let l = crate::fem::tet_barycentric(&m.corners(t), &geo.gradients, &x);
            assert!(l.iter().all(|li| *li > -1e-12), "{l:?}");
        }
        assert!(m.locate(&Vec3::new(2.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn vertex_adjacency_is_consistent() {
        let m = build_bulk_mesh(&sphere(), 1.6, 3).unwrap();
        let (offsets, tets) = m.vertex_tets();
        assert_eq!(tets.len(), 4 * m.tets.len());
        for v in 0..m.vertices.len() {
            for &t in &tets[offsets[v]..offsets[v + 1]] {
                assert!(m.tets[t].contains(&v));
            }
        }
    }
}
