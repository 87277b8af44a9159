//! Legacy ASCII VTK writer: unstructured grid of triangles with one scalar
//! point-data block per field.

use std::io::{BufWriter, Write};
use std::path::Path;
use tumorfield::mesh::Mesh;
use tumorfield::stepper::State;

pub fn write_vtk(state: &State, mesh: &Mesh, path: &Path) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "tumorfield state at t = {:.6}", state.t)?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;

    writeln!(w, "POINTS {} double", mesh.n_nodes())?;
    for p in mesh.nodes() {
        writeln!(w, "{:.17e} {:.17e} 0", p[0], p[1])?;
    }

    let n_cells = mesh.n_elements();
    writeln!(w, "CELLS {} {}", n_cells, 4 * n_cells)?;
    for tri in mesh.elements() {
        writeln!(w, "3 {} {} {}", tri[0], tri[1], tri[2])?;
    }
    writeln!(w, "CELL_TYPES {n_cells}")?;
    for _ in 0..n_cells {
        writeln!(w, "5")?;
    }

    writeln!(w, "POINT_DATA {}", mesh.n_nodes())?;
    for (name, field) in [
        ("phi_T", &state.phi_t),
        ("mu", &state.mu),
        ("phi_N", &state.phi_n),
        ("phi_sigma", &state.phi_sigma),
        ("phi_M", &state.phi_m),
        ("theta", &state.theta),
    ] {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for i in 0..field.len() {
            writeln!(w, "{:.17e}", field[i])?;
        }
    }
    w.flush()
}
