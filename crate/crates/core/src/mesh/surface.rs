use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::fem::triangle_geometry;
use crate::geometry::ImplicitSurface;
use crate::Vec3;

/// Largest vertex valence accepted on surface meshes.
pub const MAX_VALENCE: usize = 32;
pub const DEFAULT_SHAPE_BOUND: f64 = 4.0;

/// Closed triangulated surface with vertices on γ.
///
/// `triangles[t][0]` is the newest vertex: the edge opposite to it is the
/// refinement edge used by bisection.
#[derive(Clone, Debug)]
pub struct SurfaceMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub normals: Vec<Vec3>,
    pub areas: Vec<f64>,
    /// `h_T = |T|^{1/2}`.
    pub sizes: Vec<f64>,
}

pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl SurfaceMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mut normals = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        for t in &triangles {
            let geo = triangle_geometry(&t.map(|i| vertices[i]))?;
            normals.push(geo.normal);
            areas.push(geo.area);
        }
        let sizes = areas.iter().map(|a| a.sqrt()).collect();
        Ok(Self {
            vertices,
            triangles,
            normals,
            areas,
            sizes,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, t: usize) -> [Vec3; 3] {
        self.triangles[t].map(|i| self.vertices[i])
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        (a - b).norm().max((b - c).norm()).max((c - a).norm())
    }

    pub fn h_max(&self) -> f64 {
        self.sizes.iter().cloned().fold(0.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Edge → incident triangles, ordered by edge.
    pub fn edges(&self) -> BTreeMap<(usize, usize), Vec<usize>> {
        let mut edges: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                edges
                    .entry(edge_key(tri[k], tri[(k + 1) % 3]))
                    .or_default()
                    .push(t);
            }
        }
        edges
    }

    /// Every edge is shared by exactly two triangles traversing it in opposite
    /// directions.
    pub fn is_closed_manifold(&self) -> bool {
        let mut directed: HashSet<(usize, usize)> = HashSet::with_capacity(3 * self.triangles.len());
        for tri in &self.triangles {
            for k in 0..3 {
                if !directed.insert((tri[k], tri[(k + 1) % 3])) {
                    return false;
                }
            }
        }
        directed.iter().all(|(a, b)| directed.contains(&(*b, *a)))
    }

    pub fn euler_characteristic(&self) -> i64 {
        let used: BTreeSet<usize> = self.triangles.iter().flatten().copied().collect();
        used.len() as i64 - self.edges().len() as i64 + self.triangles.len() as i64
    }

    pub fn valences(&self) -> Vec<usize> {
        let mut valence = vec![0; self.vertices.len()];
        for (a, b) in self.edges().keys() {
            valence[*a] += 1;
            valence[*b] += 1;
        }
        valence
    }

    pub fn check_valence(&self, bound: usize) -> Result<()> {
        match self.valences().into_iter().enumerate().find(|(_, v)| *v > bound) {
            Some((vertex, valence)) => Err(Error::ValenceExceeded { vertex, valence }),
            None => Ok(()),
        }
    }

    /// `max_T diam(T) / h_T`.
    pub fn shape_regularity(&self) -> f64 {
        (0..self.n_triangles())
            .map(|t| self.diameter(t) / self.sizes[t])
            .fold(0.0, f64::max)
    }

    pub fn max_vertex_distance(&self, surface: &ImplicitSurface) -> f64 {
        self.vertices
            .iter()
            .map(|v| surface.signed_distance(v).abs())
            .fold(0.0, f64::max)
    }

    /// Rotates each triangle so that its longest edge is the refinement edge.
    fn with_longest_refinement_edges(mut self) -> Self {
        for tri in &mut self.triangles {
            let len = |k: usize| (self.vertices[tri[(k + 1) % 3]] - self.vertices[tri[(k + 2) % 3]]).norm();
            let best = (0..3)
                .max_by(|&a, &b| len(a).total_cmp(&len(b)).then(b.cmp(&a)))
                .unwrap_or(0);
            tri.rotate_left(best);
        }
        self
    }

    /// Makes every triangle's normal agree with the outward surface normal at
    /// its centroid.
    fn orient_outward(&mut self, surface: &ImplicitSurface) {
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.corners(t);
            let centroid = (a + b + c) / 3.0;
            let n = (b - a).cross(&(c - a));
            if n.dot(&surface.normal(&centroid)) < 0.0 {
                self.triangles[t].swap(1, 2);
                self.normals[t] = -self.normals[t];
            }
        }
    }
}

fn icosahedron() -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let phi = 0.5 * (1.0 + 5f64.sqrt());
    let mut vertices = Vec::with_capacity(12);
    for s1 in [-1.0, 1.0] {
        for s2 in [-1.0, 1.0] {
            vertices.push(Vec3::new(0.0, s1, s2 * phi));
            vertices.push(Vec3::new(s1, s2 * phi, 0.0));
            vertices.push(Vec3::new(s2 * phi, 0.0, s1));
        }
    }
    // faces are the triples of mutually adjacent vertices (edge length 2)
    let adjacent = |i: usize, j: usize| ((vertices[i] - vertices[j]).norm() - 2.0).abs() < 1e-9;
    let mut faces = Vec::with_capacity(20);
    for i in 0..12 {
        for j in i + 1..12 {
            for k in j + 1..12 {
                if adjacent(i, j) && adjacent(j, k) && adjacent(i, k) {
                    let n = (vertices[j] - vertices[i]).cross(&(vertices[k] - vertices[i]));
                    if n.dot(&vertices[i]) > 0.0 {
                        faces.push([i, j, k]);
                    } else {
                        faces.push([i, k, j]);
                    }
                }
            }
        }
    }
    let vertices = vertices.into_iter().map(|v| v.normalize()).collect();
    (vertices, faces)
}

/// Icosahedron on γ subdivided `level` times; `20·4^level` triangles.
pub fn build_sphere_mesh(surface: &ImplicitSurface, level: usize) -> Result<SurfaceMesh> {
    let scale = match *surface {
        ImplicitSurface::Sphere { radius } => Vec3::repeat(radius),
        ImplicitSurface::Ellipsoid { a, b, c } => Vec3::new(a, b, c),
        ImplicitSurface::Torus { .. } => {
            return Err(Error::Unsupported("icosphere construction on a torus".into()))
        }
    };
    let (unit, faces) = icosahedron();
    let vertices = unit.iter().map(|v| v.component_mul(&scale)).collect();
    let mut mesh = SurfaceMesh::new(vertices, faces)?;
    mesh.orient_outward(surface);
    let mut mesh = mesh.with_longest_refinement_edges();
    for _ in 0..level {
        mesh = refine_uniform(&mesh, surface)?;
    }
    Ok(mesh)
}

/// Structured `(φ, θ)` triangulation of a torus, each quad split along its
/// shorter diagonal.
pub fn build_torus_mesh(surface: &ImplicitSurface, n_major: usize, n_minor: usize) -> Result<SurfaceMesh> {
    let ImplicitSurface::Torus {
        major_radius,
        minor_radius,
    } = *surface
    else {
        return Err(Error::Unsupported("torus grid on a non-torus surface".into()));
    };
    if n_major < 3 || n_minor < 3 {
        return Err(Error::Config(format!(
            "torus grid needs at least 3x3 cells, got {n_major}x{n_minor}"
        )));
    }
    let index = |i: usize, j: usize| (i % n_major) * n_minor + (j % n_minor);
    let mut vertices = Vec::with_capacity(n_major * n_minor);
    for i in 0..n_major {
        let phi = std::f64::consts::TAU * i as f64 / n_major as f64;
        for j in 0..n_minor {
            let theta = std::f64::consts::TAU * j as f64 / n_minor as f64;
            let rho = major_radius + minor_radius * theta.cos();
            vertices.push(Vec3::new(rho * phi.cos(), rho * phi.sin(), minor_radius * theta.sin()));
        }
    }
    let mut triangles = Vec::with_capacity(2 * n_major * n_minor);
    for i in 0..n_major {
        for j in 0..n_minor {
            let q = [index(i, j), index(i + 1, j), index(i + 1, j + 1), index(i, j + 1)];
            triangles.extend(split_quad(&vertices, q));
        }
    }
    let mut mesh = SurfaceMesh::new(vertices, triangles)?;
    mesh.orient_outward(surface);
    Ok(mesh.with_longest_refinement_edges())
}

/// Splits the quad `q` (cyclic order) along its shorter diagonal.
pub(crate) fn split_quad(vertices: &[Vec3], q: [usize; 4]) -> [[usize; 3]; 2] {
    let d02 = (vertices[q[0]] - vertices[q[2]]).norm();
    let d13 = (vertices[q[1]] - vertices[q[3]]).norm();
    if d02 <= d13 {
        [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]
    } else {
        [[q[0], q[1], q[3]], [q[1], q[2], q[3]]]
    }
}

fn project_midpoint(surface: &ImplicitSurface, a: &Vec3, b: &Vec3) -> Result<Vec3> {
    surface.closest_point_unchecked(&(0.5 * (a + b)))
}

/// Red refinement: every triangle split into four, new vertices projected.
pub fn refine_uniform(mesh: &SurfaceMesh, surface: &ImplicitSurface) -> Result<SurfaceMesh> {
    let mut vertices = mesh.vertices.clone();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut triangles = Vec::with_capacity(4 * mesh.n_triangles());
    for tri in &mesh.triangles {
        let mut mid = [0usize; 3];
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let key = edge_key(a, b);
            mid[k] = match midpoints.get(&key) {
                Some(&m) => m,
                None => {
                    let p = project_midpoint(surface, &mesh.vertices[a], &mesh.vertices[b])?;
                    vertices.push(p);
                    midpoints.insert(key, vertices.len() - 1);
                    vertices.len() - 1
                }
            };
        }
        let [a, b, c] = *tri;
        let [mab, mbc, mca] = mid;
        triangles.push([a, mab, mca]);
        triangles.push([mab, b, mbc]);
        triangles.push([mca, mbc, c]);
        triangles.push([mab, mbc, mca]);
    }
    Ok(SurfaceMesh::new(vertices, triangles)?.with_longest_refinement_edges())
}

/// Newest-vertex bisection of the marked triangles plus the closure needed
/// for conformity. New vertices are projected onto γ.
pub fn refine_bisection(mesh: &SurfaceMesh, marked: &BTreeSet<usize>, surface: &ImplicitSurface) -> Result<SurfaceMesh> {
    if marked.is_empty() {
        return Ok(mesh.clone());
    }
    let refinement_edge = |tri: &[usize; 3]| edge_key(tri[1], tri[2]);
    let mut bisect: HashSet<(usize, usize)> = marked
        .iter()
        .map(|&t| refinement_edge(&mesh.triangles[t]))
        .collect();
    loop {
        let mut changed = false;
        for tri in &mesh.triangles {
            let ref_edge = refinement_edge(tri);
            if bisect.contains(&ref_edge) {
                continue;
            }
            let touched = (0..3).any(|k| bisect.contains(&edge_key(tri[k], tri[(k + 1) % 3])));
            if touched {
                bisect.insert(ref_edge);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut vertices = mesh.vertices.clone();
    let mut ordered: Vec<(usize, usize)> = bisect.into_iter().collect();
    ordered.sort_unstable();
    let mut midpoint = HashMap::with_capacity(ordered.len());
    for (a, b) in ordered {
        vertices.push(project_midpoint(surface, &mesh.vertices[a], &mesh.vertices[b])?);
        midpoint.insert((a, b), vertices.len() - 1);
    }

    fn split(tri: [usize; 3], midpoint: &HashMap<(usize, usize), usize>, out: &mut Vec<[usize; 3]>) {
        match midpoint.get(&edge_key(tri[1], tri[2])) {
            Some(&m) => {
                let [v0, v1, v2] = tri;
                split([m, v0, v1], midpoint, out);
                split([m, v2, v0], midpoint, out);
            }
            None => out.push(tri),
        }
    }
    let mut triangles = Vec::with_capacity(mesh.n_triangles() + 2 * midpoint.len());
    for tri in &mesh.triangles {
        split(*tri, &midpoint, &mut triangles);
    }
    SurfaceMesh::new(vertices, triangles)
}
