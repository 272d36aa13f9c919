use super::bulk::BulkMesh;
use crate::error::{Error, Result};
use crate::geometry::ImplicitSurface;
use crate::Vec3;

/// A tetrahedron of the clipped band `{|d_h| < δ}` inside one bulk tet.
#[derive(Clone, Debug)]
pub struct BandPiece {
    pub tet: usize,
    pub corners: [Vec3; 4],
    pub volume: f64,
}

/// Bulk tets meeting the discrete band `N_h(δ) = {|d_h| < δ}`, together
/// with an exact tetrahedral decomposition of `N_h(δ)` for quadrature.
#[derive(Clone, Debug)]
pub struct BandMesh {
    /// Sorted indices of the kept bulk tets.
    pub tets: Vec<usize>,
    pub delta: f64,
    /// Sorted bulk vertices of the kept tets.
    pub active_dofs: Vec<usize>,
    pub pieces: Vec<BandPiece>,
    /// `|N_h(δ)|`.
    pub measure: f64,
    /// `d_h` at every bulk vertex.
    pub nodal_distance: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Node {
    x: Vec3,
    value: f64,
}

fn lerp(a: Node, b: Node, level: f64, sign: f64) -> Node {
    // crossing of the linear function `sign * (value - level)` with 0
    let fa = sign * (a.value - level);
    let fb = sign * (b.value - level);
    let t = fa / (fa - fb);
    Node {
        x: a.x + t * (b.x - a.x),
        value: a.value + t * (b.value - a.value),
    }
}

/// Splits the prism with triangles `bottom` and `top` (corresponding
/// vertices joined by edges) into three tets.
fn prism(bottom: [Node; 3], top: [Node; 3], out: &mut Vec<[Node; 4]>) {
    let [a0, a1, a2] = bottom;
    let [b0, b1, b2] = top;
    out.push([a0, a1, a2, b0]);
    out.push([a1, a2, b0, b1]);
    out.push([a2, b0, b1, b2]);
}

/// Part of the tet where `sign * (value - level) < 0`, as tets.
fn clip(tet: [Node; 4], level: f64, sign: f64, out: &mut Vec<[Node; 4]>) {
    let inside: Vec<Node> = tet.iter().copied().filter(|n| sign * (n.value - level) < 0.0).collect();
    let outside: Vec<Node> = tet.iter().copied().filter(|n| sign * (n.value - level) >= 0.0).collect();
    let cut = |a: Node, b: Node| lerp(a, b, level, sign);
    match inside.len() {
        0 => {}
        4 => out.push(tet),
        1 => {
            let a = inside[0];
            out.push([a, cut(a, outside[0]), cut(a, outside[1]), cut(a, outside[2])]);
        }
        3 => {
            let b = outside[0];
            let bottom = [inside[0], inside[1], inside[2]];
            prism(bottom, bottom.map(|a| cut(a, b)), out);
        }
        _ => {
            let (a0, a1) = (inside[0], inside[1]);
            let (b0, b1) = (outside[0], outside[1]);
            prism([a0, cut(a0, b0), cut(a0, b1)], [a1, cut(a1, b0), cut(a1, b1)], out);
        }
    }
}

fn volume(p: &[Vec3; 4]) -> f64 {
    (p[1] - p[0]).dot(&(p[2] - p[0]).cross(&(p[3] - p[0]))).abs() / 6.0
}

/// Band of half-width `delta` around the zero set of `d_h`.
pub fn extract_band(bulk: &BulkMesh, surface: &ImplicitSurface, delta: f64) -> Result<BandMesh> {
    extract_band_from_values(bulk, bulk.nodal_distance(surface), delta)
}

pub fn extract_band_from_values(bulk: &BulkMesh, values: Vec<f64>, delta: f64) -> Result<BandMesh> {
    if !(delta > 0.0) {
        return Err(Error::Config(format!("band width must be positive, got {delta}")));
    }
    let mut tets = Vec::new();
    let mut pieces = Vec::new();
    let mut active = vec![false; bulk.vertices.len()];
    let mut scratch = Vec::new();
    let mut clipped = Vec::new();
    for (t, tet) in bulk.tets.iter().enumerate() {
        let v = tet.map(|i| values[i]);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo < delta && hi > -delta) {
            continue;
        }
        tets.push(t);
        for &i in tet {
            active[i] = true;
        }
        let nodes = [0, 1, 2, 3].map(|k| Node {
            x: bulk.vertices[tet[k]],
            value: v[k],
        });
        scratch.clear();
        clip(nodes, delta, 1.0, &mut scratch);
        clipped.clear();
        for piece in &scratch {
            clip(*piece, -delta, -1.0, &mut clipped);
        }
        for piece in &clipped {
            let corners = piece.map(|n| n.x);
            let vol = volume(&corners);
            if vol > 0.0 {
                pieces.push(BandPiece {
                    tet: t,
                    corners,
                    volume: vol,
                });
            }
        }
    }
    if tets.is_empty() {
        return Err(Error::EmptyBand);
    }
    let measure = pieces.iter().map(|p| p.volume).sum();
    Ok(BandMesh {
        tets,
        delta,
        active_dofs: (0..active.len()).filter(|&i| active[i]).collect(),
        pieces,
        measure,
        nodal_distance: values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_bulk_mesh, extract_cut_surface};

    fn sphere() -> ImplicitSurface {
        ImplicitSurface::sphere(1.0).unwrap()
    }

    #[test]
    fn band_contains_cut_tets() {
        let s = sphere();
        let bulk = build_bulk_mesh(&s, 1.6, 12).unwrap();
        let cut = extract_cut_surface(&bulk, &s).unwrap();
        let band = extract_band(&bulk, &s, 1e-9).unwrap();
        for t in &cut.cut_tets {
            assert!(band.tets.binary_search(t).is_ok());
        }
    }

    #[test]
    fn band_volume_matches_coarea_estimate() {
        let s = sphere();
        let bulk = build_bulk_mesh(&s, 1.6, 16).unwrap();
        let delta = 2.0 * bulk.h;
        let band = extract_band(&bulk, &s, delta).unwrap();
        let estimate = 2.0 * delta * 4.0 * std::f64::consts::PI;
        assert!((band.measure - estimate).abs() < 0.2 * estimate);
        // the shell between radii 1 ± δ is a sharper oracle
        let shell = 4.0 / 3.0 * std::f64::consts::PI * ((1.0 + delta).powi(3) - (1.0 - delta).powi(3));
        assert!((band.measure - shell).abs() < 0.02 * shell, "{} vs {shell}", band.measure);
    }

    #[test]
    fn excluded_tets_lie_entirely_on_one_side() {
        let s = sphere();
        let bulk = build_bulk_mesh(&s, 1.6, 10).unwrap();
        let delta = 1.5 * bulk.h;
        let band = extract_band(&bulk, &s, delta).unwrap();
        for (t, tet) in bulk.tets.iter().enumerate() {
            if band.tets.binary_search(&t).is_err() {
                let v = tet.map(|i| band.nodal_distance[i]);
                assert!(v.iter().all(|x| *x >= delta) || v.iter().all(|x| *x <= -delta));
            }
        }
    }

    #[test]
    fn clipping_preserves_volume_for_a_linear_field() {
        // d_h = z on [−1.6, 1.6]³: the slab |z| < δ has volume 3.2² · 2δ
        let bulk = build_bulk_mesh(&sphere(), 1.6, 4).unwrap();
        let values: Vec<f64> = bulk.vertices.iter().map(|x| x.z + 0.05).collect();
        let delta = 0.37;
        let band = extract_band_from_values(&bulk, values, delta).unwrap();
        assert!((band.measure - 3.2 * 3.2 * 2.0 * delta).abs() < 1e-12);
        for p in &band.pieces {
            for x in &p.corners {
                assert!((x.z + 0.05).abs() <= delta + 1e-12);
            }
        }
    }

    #[test]
    fn far_band_is_empty() {
        let bulk = build_bulk_mesh(&sphere(), 1.6, 4).unwrap();
        let values = vec![10.0; bulk.vertices.len()];
        assert!(matches!(extract_band_from_values(&bulk, values, 0.5), Err(Error::EmptyBand)));
    }
}
