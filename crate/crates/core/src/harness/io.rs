//! CSV and VTK output. Floats are written with Rust's shortest-roundtrip
//! formatting, which is deterministic, so repeated serial runs produce
//! byte-identical files (wall-clock columns excepted).

use crate::error::{Error, Result};
use crate::harness::{MScalingRow, RunRecord};
use crate::mesh::Mesh;
use std::io::Write;
use std::path::Path;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Per-step iteration record:
/// `step,time,variant,iterations,true_residual,flow_residual_max,wall_seconds`.
pub fn export_csv(record: &RunRecord, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(path))?;
    }
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    writeln!(
        f,
        "step,time,variant,iterations,true_residual,flow_residual_max,wall_seconds"
    )
    .map_err(io_err(path))?;
    for s in &record.steps {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            s.step,
            s.time,
            record.variant,
            s.iterations,
            s.true_residual,
            s.flow_residual_max,
            s.wall_seconds
        )
        .map_err(io_err(path))?;
    }
    Ok(())
}

/// Multiplier-scaling summary:
/// `m,variant,mean_iterations,max_iterations,wall_seconds`.
pub fn export_m_scaling_csv(rows: &[MScalingRow], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(path))?;
    }
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    writeln!(f, "m,variant,mean_iterations,max_iterations,wall_seconds").map_err(io_err(path))?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{}",
            r.m, r.variant, r.mean_iterations, r.max_iterations, r.wall_seconds
        )
        .map_err(io_err(path))?;
    }
    Ok(())
}

/// Legacy ASCII VTK 2.0 unstructured grid with a point-data velocity vector
/// and pressure scalar.
pub fn export_vtk(mesh: &Mesh, velocity: &[f64], pressure: &[f64], path: &Path) -> Result<()> {
    if velocity.len() != 2 * mesh.num_vertices() || pressure.len() != mesh.num_vertices() {
        return Err(Error::Shape(format!(
            "vtk export: {} velocity / {} pressure entries for {} vertices",
            velocity.len(),
            pressure.len(),
            mesh.num_vertices()
        )));
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(path))?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
    let werr = |e: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };

    writeln!(f, "# vtk DataFile Version 2.0").map_err(werr)?;
    writeln!(f, "defective-flow snapshot").map_err(werr)?;
    writeln!(f, "ASCII").map_err(werr)?;
    writeln!(f, "DATASET UNSTRUCTURED_GRID").map_err(werr)?;
    writeln!(f, "POINTS {} double", mesh.num_vertices()).map_err(werr)?;
    for v in mesh.vertices() {
        writeln!(f, "{} {} 0", v[0], v[1]).map_err(werr)?;
    }
    writeln!(f, "CELLS {} {}", mesh.num_triangles(), 4 * mesh.num_triangles()).map_err(werr)?;
    for t in mesh.triangles() {
        writeln!(f, "3 {} {} {}", t[0], t[1], t[2]).map_err(werr)?;
    }
    writeln!(f, "CELL_TYPES {}", mesh.num_triangles()).map_err(werr)?;
    for _ in 0..mesh.num_triangles() {
        writeln!(f, "5").map_err(werr)?; // VTK_TRIANGLE
    }
    writeln!(f, "POINT_DATA {}", mesh.num_vertices()).map_err(werr)?;
    writeln!(f, "VECTORS velocity double").map_err(werr)?;
    for v in 0..mesh.num_vertices() {
        writeln!(f, "{} {} 0", velocity[2 * v], velocity[2 * v + 1]).map_err(werr)?;
    }
    writeln!(f, "SCALARS pressure double 1").map_err(werr)?;
    writeln!(f, "LOOKUP_TABLE default").map_err(werr)?;
    for p in pressure {
        writeln!(f, "{p}").map_err(werr)?;
    }
    Ok(())
}
