//! ASCII exports for external viewers.

use std::fmt::Write as _;

use crate::Vec3;

/// Object File Format for a triangle surface.
pub fn to_off(vertices: &[Vec3], triangles: &[[usize; 3]]) -> String {
    let mut out = String::new();
    writeln!(out, "OFF").unwrap();
    writeln!(out, "{} {} 0", vertices.len(), triangles.len()).unwrap();
    for v in vertices {
        writeln!(out, "{:.17e} {:.17e} {:.17e}", v.x, v.y, v.z).unwrap();
    }
    for t in triangles {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    out
}

/// Legacy ASCII VTK unstructured grid of tetrahedra. Only vertices used by
/// `tets` are written, renumbered in increasing original order; an optional
/// point field is attached as `SCALARS`.
pub fn to_vtk(title: &str, vertices: &[Vec3], tets: &[[usize; 4]], point_data: Option<(&str, &[f64])>) -> String {
    let mut used = vec![usize::MAX; vertices.len()];
    for tet in tets {
        for &v in tet {
            used[v] = 0;
        }
    }
    let mut kept = Vec::new();
    for (v, slot) in used.iter_mut().enumerate() {
        if *slot == 0 {
            *slot = kept.len();
            kept.push(v);
        }
    }
    let mut out = String::new();
    writeln!(out, "# vtk DataFile Version 3.0").unwrap();
    writeln!(out, "{}", title.lines().next().unwrap_or("")).unwrap();
    writeln!(out, "ASCII").unwrap();
    writeln!(out, "DATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(out, "POINTS {} double", kept.len()).unwrap();
    for &v in &kept {
        let x = vertices[v];
        writeln!(out, "{:.17e} {:.17e} {:.17e}", x.x, x.y, x.z).unwrap();
    }
    writeln!(out, "CELLS {} {}", tets.len(), 5 * tets.len()).unwrap();
    for t in tets {
        writeln!(out, "4 {} {} {} {}", used[t[0]], used[t[1]], used[t[2]], used[t[3]]).unwrap();
    }
    writeln!(out, "CELL_TYPES {}", tets.len()).unwrap();
    for _ in tets {
        writeln!(out, "10").unwrap();
    }
    if let Some((name, values)) = point_data {
        writeln!(out, "POINT_DATA {}", kept.len()).unwrap();
        writeln!(out, "SCALARS {name} double 1").unwrap();
        writeln!(out, "LOOKUP_TABLE default").unwrap();
        for &v in &kept {
            writeln!(out, "{:.17e}", values[v]).unwrap();
        }
    }
    out
}
