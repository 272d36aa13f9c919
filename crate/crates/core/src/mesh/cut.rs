use std::collections::{BTreeMap, HashMap};

use super::bulk::BulkMesh;
use super::surface::{edge_key, split_quad};
use crate::error::{Error, Result};
use crate::fem::QuadratureRule;
use crate::geometry::ImplicitSurface;
use crate::Vec3;

/// Faces with area below this multiple of `h²` are dropped.
const DEGENERATE_AREA: f64 = 1e-14;

/// Zero set of the piecewise linear interpolant `d_h` of the signed distance
/// on a bulk mesh, as an indexed triangle surface.
#[derive(Clone, Debug)]
pub struct CutSurface {
    /// Zero crossings, one per cut bulk edge.
    pub vertices: Vec<Vec3>,
    /// Bulk edge carrying each vertex.
    pub vertex_edges: Vec<(usize, usize)>,
    pub faces: Vec<[usize; 3]>,
    /// Bulk tet containing each face.
    pub parent: Vec<usize>,
    pub normals: Vec<Vec3>,
    pub areas: Vec<f64>,
    /// Diameter of the parent tet.
    pub sizes: Vec<f64>,
    /// Sorted bulk vertices of the tets carrying a (nondegenerate) face.
    pub active_dofs: Vec<usize>,
    /// Sorted bulk tets on which `d_h` changes sign.
    pub cut_tets: Vec<usize>,
    /// `d_h` at every bulk vertex.
    pub nodal_distance: Vec<f64>,
    /// Faces dropped for having (numerically) zero area. They carry no
    /// quadrature weight but still belong to the topology of the zero set.
    pub degenerate: Vec<[usize; 3]>,
}

fn crossing(x: &[Vec3], v: &[f64], a: usize, b: usize) -> Vec3 {
    let t = v[a] / (v[a] - v[b]);
    x[a] + t * (x[b] - x[a])
}

/// Marching-tetrahedra extraction of `{d_h = 0}`.
pub fn extract_cut_surface(bulk: &BulkMesh, surface: &ImplicitSurface) -> Result<CutSurface> {
    let values = bulk.nodal_distance(surface);
    extract_cut_surface_from_values(bulk, values)
}

/// As [`extract_cut_surface`] for given nodal values; zeros are replaced by
/// `+1e-12 h`.
pub fn extract_cut_surface_from_values(bulk: &BulkMesh, mut values: Vec<f64>) -> Result<CutSurface> {
    for v in values.iter_mut() {
        if *v == 0.0 {
            *v = 1e-12 * bulk.h;
        }
    }
    let mut cut = CutSurface {
        vertices: Vec::new(),
        vertex_edges: Vec::new(),
        faces: Vec::new(),
        parent: Vec::new(),
        normals: Vec::new(),
        areas: Vec::new(),
        sizes: Vec::new(),
        active_dofs: Vec::new(),
        cut_tets: Vec::new(),
        nodal_distance: Vec::new(),
        degenerate: Vec::new(),
    };
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let min_area = DEGENERATE_AREA * bulk.h * bulk.h;
    let mut active = vec![false; bulk.vertices.len()];

    for (t, tet) in bulk.tets.iter().enumerate() {
        let (neg, pos): (Vec<usize>, Vec<usize>) = tet.iter().partition(|&&i| values[i] < 0.0);
        if neg.is_empty() || pos.is_empty() {
            continue;
        }
        let mut vertex = |a: usize, b: usize| -> usize {
            let key = edge_key(a, b);
            *index.entry(key).or_insert_with(|| {
                cut.vertices.push(crossing(&bulk.vertices, &values, key.0, key.1));
                cut.vertex_edges.push(key);
                cut.vertices.len() - 1
            })
        };
        let polygons: Vec<[usize; 3]> = match (neg.len(), pos.len()) {
            (1, 3) => vec![[vertex(neg[0], pos[0]), vertex(neg[0], pos[1]), vertex(neg[0], pos[2])]],
            (3, 1) => vec![[vertex(pos[0], neg[0]), vertex(pos[0], neg[1]), vertex(pos[0], neg[2])]],
            _ => {
                let q = [
                    vertex(neg[0], pos[0]),
                    vertex(neg[0], pos[1]),
                    vertex(neg[1], pos[1]),
                    vertex(neg[1], pos[0]),
                ];
                split_quad(&cut.vertices, q).to_vec()
            }
        };
        let grad_dh = {
            let corners = bulk.corners(t);
            let geo = crate::fem::tet_geometry(&corners)?;
            (0..4).fold(Vec3::zeros(), |acc, k| acc + values[tet[k]] * geo.gradients[k])
        };
        let diameter = bulk.diameter(t);
        let mut kept = false;
        for mut f in polygons {
            let p = f.map(|i| cut.vertices[i]);
            let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
            let area = 0.5 * n.norm();
            if area < min_area {
                cut.degenerate.push(f);
                continue;
            }
            // the face lies in the plane d_h = 0 of its tet; ∇d_h gives the
            // normal without the rounding of a cross product on slivers
            if n.dot(&grad_dh) < 0.0 {
                f.swap(1, 2);
            }
            let normal = grad_dh.normalize();
            cut.faces.push(f);
            cut.parent.push(t);
            cut.normals.push(normal);
            cut.areas.push(area);
            cut.sizes.push(diameter);
            kept = true;
        }
        cut.cut_tets.push(t);
        if kept {
            for &i in tet {
                active[i] = true;
            }
        }
    }
    if cut.faces.is_empty() {
        return Err(Error::EmptyCut);
    }
    if !cut.degenerate.is_empty() {
        log::debug!("dropped {} degenerate cut faces", cut.degenerate.len());
    }
    cut.active_dofs = (0..active.len()).filter(|&i| active[i]).collect();
    cut.nodal_distance = values;
    Ok(cut)
}

impl CutSurface {
    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn corners(&self, f: usize) -> [Vec3; 3] {
        self.faces[f].map(|i| self.vertices[i])
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn h_max(&self) -> f64 {
        self.sizes.iter().copied().fold(0.0, f64::max)
    }

    pub fn edges(&self) -> BTreeMap<(usize, usize), Vec<usize>> {
        let mut edges: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (f, face) in self.faces.iter().enumerate() {
            for k in 0..3 {
                edges.entry(edge_key(face[k], face[(k + 1) % 3])).or_default().push(f);
            }
        }
        edges
    }

    /// Every edge shared by exactly two faces, counting degenerate ones.
    pub fn is_closed(&self) -> bool {
        let mut count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for face in self.faces.iter().chain(&self.degenerate) {
            for k in 0..3 {
                *count.entry(edge_key(face[k], face[(k + 1) % 3])).or_default() += 1;
            }
        }
        count.values().all(|&c| c == 2)
    }

    /// Largest interior angle over all faces, in degrees.
    pub fn max_angle_degrees(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for f in 0..self.faces.len() {
            let p = self.corners(f);
            for k in 0..3 {
                let a = p[(k + 1) % 3] - p[k];
                let b = p[(k + 2) % 3] - p[k];
                let cos = (a.dot(&b) / (a.norm() * b.norm())).clamp(-1.0, 1.0);
                worst = worst.max(cos.acos().to_degrees());
            }
        }
        worst
    }

    /// `max |d|` over face quadrature points and vertices, and `max |ν - ν_F|`
    /// over the same samples.
    pub fn geometric_resolution(&self, surface: &ImplicitSurface) -> Result<(f64, f64)> {
        let quad = QuadratureRule::triangle_degree4();
        let mut max_d: f64 = 0.0;
        let mut max_normal: f64 = 0.0;
        for f in 0..self.faces.len() {
            let p = self.corners(f);
            let samples = quad.map(&p, self.areas[f]).map(|(x, _, _)| x).chain(p);
            for x in samples {
                let (d, grad) = surface.distance_gradient(&x)?;
                max_d = max_d.max(d.abs());
                max_normal = max_normal.max((grad - self.normals[f]).norm());
            }
        }
        Ok((max_d, max_normal))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_bulk_mesh;

    fn unit_bulk() -> BulkMesh {
        // a single cube [−1.6, 1.6]³ split in 2 per axis is the smallest legal mesh
        build_bulk_mesh(&ImplicitSurface::sphere(1.0).unwrap(), 1.6, 2).unwrap()
    }

    fn values_for_tet(bulk: &BulkMesh, t: usize, tet_values: [f64; 4]) -> Vec<f64> {
        let mut v = vec![5.0; bulk.vertices.len()];
        for (k, &i) in bulk.tets[t].iter().enumerate() {
            v[i] = tet_values[k];
        }
        v
    }

    #[test]
    fn three_one_split_gives_one_triangle() {
        let bulk = unit_bulk();
        let t = 0;
        let values = values_for_tet(&bulk, t, [-1.0, 1.0, 1.0, 1.0]);
        let cut = extract_cut_surface_from_values(&bulk, values).unwrap();
        let from_t: Vec<_> = (0..cut.n_faces()).filter(|&f| cut.parent[f] == t).collect();
        assert_eq!(from_t.len(), 1);
        let corners = bulk.corners(t);
        let mid = |k: usize| 0.5 * (corners[0] + corners[k]);
        let mut expected = vec![mid(1), mid(2), mid(3)];
        for p in cut.corners(from_t[0]) {
            let pos = expected.iter().position(|e| (e - p).norm() < 1e-14).unwrap();
            expected.remove(pos);
        }
    }

    #[test]
    fn two_two_split_gives_two_triangles() {
        let bulk = unit_bulk();
        let t = 7;
        let values = values_for_tet(&bulk, t, [-1.0, -1.0, 1.0, 1.0]);
        let cut = extract_cut_surface_from_values(&bulk, values).unwrap();
        let from_t: Vec<_> = (0..cut.n_faces()).filter(|&f| cut.parent[f] == t).collect();
        assert_eq!(from_t.len(), 2);
        let total: f64 = from_t.iter().map(|&f| cut.areas[f]).sum();
        // the mid-edge quad of a tet is a parallelogram with half-diagonals
        // spanned by (x0 - x1)/2 and (x2 - x3)/2
        let c = bulk.corners(t);
        let expected = 0.25 * (c[0] - c[1]).cross(&(c[2] - c[3])).norm();
        assert!((total - expected).abs() < 1e-14);
    }

    #[test]
    fn faces_lie_in_the_interpolated_zero_set() {
        let s = ImplicitSurface::sphere(1.0).unwrap();
        let bulk = build_bulk_mesh(&s, 1.6, 8).unwrap();
        let cut = extract_cut_surface(&bulk, &s).unwrap();
        for f in 0..cut.n_faces() {
            let t = cut.parent[f];
            let corners = bulk.corners(t);
            let geo = crate::fem::tet_geometry(&corners).unwrap();
            for x in cut.corners(f) {
                let l = crate::fem::tet_barycentric(&corners, &geo.gradients, &x);
                let dh: f64 = (0..4).map(|k| l[k] * cut.nodal_distance[bulk.tets[t][k]]).sum();
                assert!(dh.abs() < 1e-12);
                assert!(l.iter().all(|li| *li > -1e-12));
            }
            // oriented along ∇d
            let centroid = cut.corners(f).iter().sum::<Vec3>() / 3.0;
            assert!(cut.normals[f].dot(&centroid) > 0.0);
        }
    }

    #[test]
    fn sphere_cut_area_and_closedness() {
        let s = ImplicitSurface::sphere(1.0).unwrap();
        let bulk = build_bulk_mesh(&s, 1.6, 16).unwrap();
        let cut = extract_cut_surface(&bulk, &s).unwrap();
        let exact = 4.0 * std::f64::consts::PI;
        assert!((cut.total_area() - exact).abs() < 0.03 * exact);
        assert!(cut.is_closed());
        assert!(cut.max_angle_degrees() < 179.0);
        // grid vertices such as (0.6, 0.8, 0) sit on γ up to rounding, and
        // the caps cut off around them have zero area
        assert!(!cut.degenerate.is_empty());
        let dropped_area: f64 = cut
            .degenerate
            .iter()
            .map(|f| {
                let p = f.map(|i| cut.vertices[i]);
                0.5 * (p[1] - p[0]).cross(&(p[2] - p[0])).norm()
            })
            .sum();
        assert!(dropped_area < 1e-10);
    }

    #[test]
    fn cut_tet_count_is_surface_dimensional() {
        let s = ImplicitSurface::sphere(1.0).unwrap();
        // n = 8 → 16 gives 3.2; the coarse grid is not yet asymptotic
        let coarse = extract_cut_surface(&build_bulk_mesh(&s, 1.6, 16).unwrap(), &s).unwrap();
        let fine = extract_cut_surface(&build_bulk_mesh(&s, 1.6, 32).unwrap(), &s).unwrap();
        let ratio = fine.cut_tets.len() as f64 / coarse.cut_tets.len() as f64;
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn interpolation_constant_is_stable() {
        let s = ImplicitSurface::sphere(1.0).unwrap();
        let mut constants = Vec::new();
        for n in [8, 16, 32] {
            let bulk = build_bulk_mesh(&s, 1.6, n).unwrap();
            let (max_d, _) = extract_cut_surface(&bulk, &s).unwrap().geometric_resolution(&s).unwrap();
            constants.push(max_d / (bulk.h * bulk.h));
        }
        for w in constants.windows(2) {
            assert!((0.5..=2.0).contains(&(w[1] / w[0])), "{constants:?}");
        }
    }

    #[test]
    fn exact_zero_values_are_nudged() {
        let s = ImplicitSurface::sphere(1.0).unwrap();
        // h = 0.4 puts grid vertices (±1.2, ±0.4, ...) nowhere exactly on γ,
        // so place a zero by hand
        let bulk = build_bulk_mesh(&s, 1.6, 8).unwrap();
        let mut values = bulk.nodal_distance(&s);
        let v = bulk.vertices.iter().position(|x| (x - Vec3::new(0.4, 0.4, 0.4)).norm() < 1e-12).unwrap();
        values[v] = 0.0;
        let cut = extract_cut_surface_from_values(&bulk, values).unwrap();
        assert_eq!(cut.nodal_distance[v], 1e-12 * bulk.h);
    }
}
