//! Run report writers: per-step CSV time series and legacy VTK snapshots.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::driver::{RunReport, Snapshot, StepRecord};
use crate::error::{Error, Result};
use crate::mesh::PolyMesh;
use crate::units::BAR;

/// First line of every CSV report. Bump the version when columns change.
pub const CSV_SCHEMA: &str = "# seqflow report v1";

const STEP_COLUMNS: [&str; 24] = [
    "step",
    "time_s",
    "dt_s",
    "pressure_iterations",
    "active_cells",
    "total_cell_iterations",
    "max_cell_iterations",
    "mean_cell_iterations",
    "components",
    "cycles",
    "max_cycle_size",
    "mean_cycle_size",
    "max_sweeps",
    "gs_fallbacks",
    "reduced_cells",
    "graph_passes",
    "global_iterations",
    "discrepancy",
    "mass_error",
    "injected_water_m3",
    "min_saturation",
    "max_saturation",
    "min_point_saturation",
    "max_point_saturation",
];

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(format!("{}: {e}", path.display())))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn step_row(s: &StepRecord) -> Vec<String> {
    let t = s.transport.as_ref();
    let mut row = vec![
        s.step.to_string(),
        s.time.to_string(),
        s.dt.to_string(),
        s.pressure_iterations.to_string(),
        opt(t.map(|t| t.active_cells())),
        opt(t.map(|t| t.total_iterations())),
        opt(t.map(|t| t.max_iterations())),
        opt(t.map(|t| t.mean_iterations())),
        opt(t.map(|t| t.num_components)),
        opt(t.map(|t| t.num_cycles)),
        opt(t.map(|t| t.max_cycle_size)),
        opt(t.map(|t| t.mean_cycle_size)),
        opt(t.map(|t| t.max_sweeps())),
        opt(t.map(|t| t.gs_fallbacks)),
        opt(t
            .map(|t| t.reduced_cells)
            .or(s.global.as_ref().map(|g| g.reduced_cells))),
        opt(t.map(|t| t.graph_passes)),
        opt(s.global.as_ref().map(|g| g.iterations)),
        opt(s.discrepancy),
        s.mass_error.to_string(),
        s.injected_water.to_string(),
        s.min_mean.to_string(),
        s.max_mean.to_string(),
        s.min_point.to_string(),
        s.max_point.to_string(),
    ];
    for w in &s.wells {
        row.push((w.bhp / BAR).to_string());
        row.push(w.water_rate.to_string());
        row.push(w.oil_rate.to_string());
        row.push(w.water_cut.to_string());
    }
    row
}

/// Writes the per-step time series. Well columns follow the fixed columns,
/// four per well: bhp in bar and reservoir-volume water and oil rates in
/// m^3/s (positive for injection), then the water cut.
pub fn write_csv(report: &RunReport, mut out: impl Write, path_hint: &Path) -> Result<()> {
    writeln!(out, "{CSV_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = STEP_COLUMNS.iter().map(|s| s.to_string()).collect();
    for name in &report.well_names {
        for col in ["bhp_bar", "water_rate", "oil_rate", "water_cut"] {
            header.push(format!("{name}_{col}"));
        }
    }
    w.write_record(&header)
        .map_err(|e| csv_error(path_hint, e))?;
    for s in &report.steps {
        w.write_record(step_row(s))
            .map_err(|e| csv_error(path_hint, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Vertices of a 2D cell in boundary order, obtained by chaining its edges.
fn polygon_loop(mesh: &PolyMesh, cell: usize) -> Vec<usize> {
    let edges: Vec<(usize, usize)> = mesh.cells[cell]
        .faces
        .iter()
        .map(|&f| {
            let v = &mesh.faces[f].vertices;
            // orient every edge counter-clockwise around the cell
            if mesh.faces[f].owner == cell {
                (v[0], v[1])
            } else {
                (v[1], v[0])
            }
        })
        .collect();
    let mut order = vec![edges[0].0];
    let mut cur = edges[0].1;
    while cur != order[0] && order.len() < edges.len() {
        order.push(cur);
        match edges.iter().find(|e| e.0 == cur) {
            Some(e) => cur = e.1,
            None => break,
        }
    }
    order
}

/// Legacy ASCII VTK unstructured grid with cell saturation, pressure (bar)
/// and active dG degree.
pub fn vtk_string(mesh: &PolyMesh, snap: &Snapshot) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "seqflow t = {} s", snap.time);
    let _ = writeln!(s, "ASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", mesh.vertices.len());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
    }
    let n = mesh.num_cells();
    let mut cells: Vec<Vec<usize>> = Vec::with_capacity(n);
    for c in 0..n {
        if mesh.dim() == 2 {
            let lp = polygon_loop(mesh, c);
            let mut rec = vec![lp.len()];
            rec.extend(lp);
            cells.push(rec);
        } else {
            // polyhedron: point count, face count, then each face stream
            let cell = &mesh.cells[c];
            let mut stream = vec![cell.faces.len()];
            for &f in &cell.faces {
                let fv = &mesh.faces[f].vertices;
                stream.push(fv.len());
                if mesh.faces[f].owner == c {
                    stream.extend(fv.iter().copied());
                } else {
                    stream.extend(fv.iter().rev().copied());
                }
            }
            let mut rec = vec![stream.len()];
            rec.extend(stream);
            cells.push(rec);
        }
    }
    let size: usize = cells.iter().map(Vec::len).sum();
    let _ = writeln!(s, "CELLS {n} {size}");
    for rec in &cells {
        let line: Vec<String> = rec.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    let _ = writeln!(s, "CELL_TYPES {n}");
    let ty = if mesh.dim() == 2 { 7 } else { 42 };
    for _ in 0..n {
        let _ = writeln!(s, "{ty}");
    }
    let _ = writeln!(s, "CELL_DATA {n}");
    let _ = writeln!(s, "SCALARS saturation double 1\nLOOKUP_TABLE default");
    for v in &snap.saturation {
        let _ = writeln!(s, "{v}");
    }
    let _ = writeln!(s, "SCALARS pressure_bar double 1\nLOOKUP_TABLE default");
    for v in &snap.pressure {
        let _ = writeln!(s, "{}", v / BAR);
    }
    let _ = writeln!(s, "SCALARS degree int 1\nLOOKUP_TABLE default");
    for v in &snap.degree {
        let _ = writeln!(s, "{v}");
    }
    s
}

/// Writes `report.csv` and one `snapshot_NNNN.vtk` per report time into
/// `dir`, returning the paths written.
pub fn write_report(mesh: &PolyMesh, report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let csv_path = dir.join("report.csv");
    let file = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
    write_csv(report, file, &csv_path)?;
    written.push(csv_path);
    for (k, snap) in report.snapshots.iter().enumerate() {
        let path = dir.join(format!("snapshot_{k:04}.vtk"));
        std::fs::write(&path, vtk_string(mesh, snap))?;
        written.push(path);
    }
    Ok(written)
}
