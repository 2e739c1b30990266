//! Legacy ASCII VTK unstructured-grid writer.

use std::fmt::Write as _;
use std::path::Path;

use crate::base_mesh::{BaseGrid, BaseMesh};
use crate::cylinder_mesh::TensorMesh;
use crate::error::Result;

pub const VTK_LINE: u8 = 3;
pub const VTK_TRIANGLE: u8 = 5;
pub const VTK_WEDGE: u8 = 13;

/// Named scalar channel attached to points or cells.
pub struct Channel<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

pub struct UnstructuredGrid<'a> {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub cell_type: u8,
    pub point_data: Vec<Channel<'a>>,
    pub cell_data: Vec<Channel<'a>>,
}

impl UnstructuredGrid<'_> {
    pub fn to_vtk_string(&self, title: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# vtk DataFile Version 3.0");
        let _ = writeln!(s, "{}", title.lines().next().unwrap_or(""));
        let _ = writeln!(s, "ASCII");
        let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
        let _ = writeln!(s, "POINTS {} double", self.points.len());
        for p in &self.points {
            let _ = writeln!(s, "{:e} {:e} {:e}", p[0], p[1], p[2]);
        }
        let size: usize = self.cells.iter().map(|c| c.len() + 1).sum();
        let _ = writeln!(s, "CELLS {} {}", self.cells.len(), size);
        for c in &self.cells {
            let _ = write!(s, "{}", c.len());
            for v in c {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "CELL_TYPES {}", self.cells.len());
        for _ in &self.cells {
            let _ = writeln!(s, "{}", self.cell_type);
        }
        write_channels(&mut s, "POINT_DATA", self.points.len(), &self.point_data);
        write_channels(&mut s, "CELL_DATA", self.cells.len(), &self.cell_data);
        s
    }

    pub fn write(&self, path: &Path, title: &str) -> Result<()> {
        std::fs::write(path, self.to_vtk_string(title))?;
        Ok(())
    }
}

fn write_channels(s: &mut String, section: &str, n: usize, channels: &[Channel<'_>]) {
    if channels.is_empty() {
        return;
    }
    let _ = writeln!(s, "{section} {n}");
    for ch in channels {
        assert_eq!(ch.values.len(), n, "channel {} has wrong length", ch.name);
        let _ = writeln!(s, "SCALARS {} double 1", ch.name.replace(' ', "_"));
        let _ = writeln!(s, "LOOKUP_TABLE default");
        for v in ch.values {
            let _ = writeln!(s, "{v:e}");
        }
    }
}

/// Base mesh as a triangle (or line) grid in the plane z = 0.
pub fn base_grid<'a, G: BaseGrid>(
    mesh: &G,
    point_data: Vec<Channel<'a>>,
    cell_data: Vec<Channel<'a>>,
) -> UnstructuredGrid<'a> {
    UnstructuredGrid {
        points: (0..mesh.n_vertices())
            .map(|v| {
                let p = mesh.point(v);
                [p[0], p[1], 0.0]
            })
            .collect(),
        cells: (0..mesh.n_cells()).map(|c| mesh.cell(c).to_vec()).collect(),
        cell_type: if G::DIM == 1 { VTK_LINE } else { VTK_TRIANGLE },
        point_data,
        cell_data,
    }
}

/// Cylinder mesh as extruded wedges; the third coordinate is the extended variable.
pub fn cylinder_grid<'a>(
    mesh: &TensorMesh<BaseMesh>,
    point_data: Vec<Channel<'a>>,
) -> UnstructuredGrid<'a> {
    let base = &mesh.base;
    let nv = base.n_vertices();
    let levels = mesh.interval.nodes();
    let mut points = Vec::with_capacity(nv * levels.len());
    for &y in levels {
        for v in 0..nv {
            let p = base.point(v);
            points.push([p[0], p[1], y]);
        }
    }
    let mut cells = Vec::with_capacity(mesh.n_cells());
    for t in base.triangles() {
        for k in 0..mesh.interval.m() {
            let lower = t.iter().map(|&v| mesh.node(v, k));
            let upper = t.iter().map(|&v| mesh.node(v, k + 1));
            cells.push(lower.chain(upper).collect());
        }
    }
    UnstructuredGrid {
        points,
        cells,
        cell_type: VTK_WEDGE,
        point_data,
        cell_data: Vec::new(),
    }
}
