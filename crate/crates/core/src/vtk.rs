//! Legacy ASCII VTK export of meshes with solution and indicator data, plus
//! a minimal reader used to round-trip the outputs in tests.

use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::mesh::Mesh;

/// Optional attached data; lengths must match the mesh when present.
#[derive(Debug, Default, Clone)]
pub struct VtkData<'a> {
    /// Point data named `u`.
    pub u: Option<&'a [f64]>,
    /// Cell data named `eta_sq`.
    pub eta_sq: Option<&'a [f64]>,
    /// Cell data named `osc_sq`.
    pub osc_sq: Option<&'a [f64]>,
}

/// Write the mesh as `DATASET UNSTRUCTURED_GRID` with cell type 5
/// (triangle) or 10 (tetrahedron), the element region as cell data, and any
/// attached fields.
pub fn write_vtk<W: std::io::Write>(w: &mut W, mesh: &Mesh, data: &VtkData) -> Result<()> {
    let dim = mesh.dim();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "mesh snapshot")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.n_vertices())?;
    for p in &mesh.vertices {
        writeln!(w, "{:.17e} {:.17e} {:.17e}", p[0], p[1], p[2])?;
    }
    let ne = mesh.n_elements();
    writeln!(w, "CELLS {} {}", ne, ne * (dim + 2))?;
    for e in 0..ne {
        let verts = mesh.element_vertices(e);
        write!(w, "{}", verts.len())?;
        for &v in verts {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    writeln!(w, "CELL_TYPES {ne}")?;
    let cell_type = if dim == 2 { 5 } else { 10 };
    for _ in 0..ne {
        writeln!(w, "{cell_type}")?;
    }

    writeln!(w, "CELL_DATA {ne}")?;
    writeln!(w, "SCALARS region int 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for &r in &mesh.element_region {
        writeln!(w, "{}", if r == Region::Molecular { 0 } else { 1 })?;
    }
    for (name, field) in [("eta_sq", data.eta_sq), ("osc_sq", data.osc_sq)] {
        if let Some(values) = field {
            assert_eq!(values.len(), ne, "{name} length mismatch");
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for v in values {
                writeln!(w, "{v:.17e}")?;
            }
        }
    }
    if let Some(u) = data.u {
        assert_eq!(u.len(), mesh.n_vertices(), "u length mismatch");
        writeln!(w, "POINT_DATA {}", mesh.n_vertices())?;
        writeln!(w, "SCALARS u double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in u {
            writeln!(w, "{v:.17e}")?;
        }
    }
    Ok(())
}

/// Counts and scalar fields recovered by [`read_vtk_summary`].
#[derive(Debug, Clone)]
pub struct VtkSummary {
    pub n_points: usize,
    pub n_cells: usize,
    pub cell_types: Vec<usize>,
    pub points: Vec<[f64; 3]>,
    /// Scalar field names in file order with their value counts.
    pub scalars: Vec<(String, usize)>,
}

/// Minimal legacy-VTK reader: enough structure to verify round trips.
pub fn read_vtk_summary(text: &str) -> Result<VtkSummary> {
    let mut lines = text.lines().peekable();
    let mut n_points = 0;
    let mut n_cells = 0;
    let mut cell_types = Vec::new();
    let mut points = Vec::new();
    let mut scalars = Vec::new();
    let bad = |msg: &str| Error::Config(format!("vtk parse error: {msg}"));
    while let Some(line) = lines.next() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("POINTS") => {
                n_points = tok
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad("POINTS count"))?;
                for _ in 0..n_points {
                    let row = lines.next().ok_or_else(|| bad("point row missing"))?;
                    let mut vals = row.split_whitespace().map(|t| t.parse::<f64>());
                    let mut p = [0.0; 3];
                    for c in p.iter_mut() {
                        *c = vals
                            .next()
                            .and_then(|v| v.ok())
                            .ok_or_else(|| bad("point coordinate"))?;
                    }
                    points.push(p);
                }
            }
            Some("CELLS") => {
                n_cells = tok
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad("CELLS count"))?;
                for _ in 0..n_cells {
                    lines.next().ok_or_else(|| bad("cell row missing"))?;
                }
            }
            Some("CELL_TYPES") => {
                let n: usize = tok
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad("CELL_TYPES count"))?;
                for _ in 0..n {
                    let t = lines
                        .next()
                        .and_then(|l| l.trim().parse().ok())
                        .ok_or_else(|| bad("cell type"))?;
                    cell_types.push(t);
                }
            }
            Some("SCALARS") => {
                let name = tok.next().ok_or_else(|| bad("SCALARS name"))?.to_string();
                // LOOKUP_TABLE line
                lines.next();
                let mut count = 0;
                while let Some(next) = lines.peek() {
                    let first = next.split_whitespace().next().unwrap_or("");
                    if first
                        .chars()
                        .next()
                        .map(|c| c.is_ascii_digit() || c == '-' || c == '+')
                        .unwrap_or(false)
                        && first.parse::<f64>().is_ok()
                    {
                        lines.next();
                        count += 1;
                    } else {
                        break;
                    }
                }
                scalars.push((name, count));
            }
            _ => {}
        }
    }
    Ok(VtkSummary {
        n_points,
        n_cells,
        cell_types,
        points,
        scalars,
    })
}
