//! Plain-text polytopal mesh format.
//!
//! ```text
//! DIM n_vertices n_faces n_cells
//! x y [z]                      (n_vertices lines)
//! k v1 ... vk owner neighbor   (n_faces lines, neighbor = -1 on the boundary)
//! m f1 ... fm                  (n_cells lines)
//! ```
//!
//! Indices are zero-based. Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::{Point, PolyMesh};
use crate::error::{Error, Result};

pub fn load_mesh(path: impl AsRef<Path>) -> Result<PolyMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::MeshLoad {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_mesh(&text).map_err(|e| match e {
        Error::MeshLoad { message, .. } => Error::MeshLoad {
            path: path.to_path_buf(),
            message,
        },
        other => Error::MeshLoad {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

pub fn parse_mesh(text: &str) -> Result<PolyMesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let bad = |line: usize, msg: &str| Error::MeshLoad {
        path: Default::default(),
        message: format!("line {line}: {msg}"),
    };
    let mut next_line = |what: &str| {
        lines
            .next()
            .ok_or_else(|| bad(0, &format!("unexpected end of file while reading {what}")))
    };

    let (ln, header) = next_line("header")?;
    let head: Vec<usize> = parse_all(header).ok_or_else(|| bad(ln, "malformed header"))?;
    let [dim, nv, nf, nc] = head[..] else {
        return Err(bad(ln, "header must be `DIM n_vertices n_faces n_cells`"));
    };
    if dim != 2 && dim != 3 {
        return Err(bad(ln, "DIM must be 2 or 3"));
    }

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = next_line("vertices")?;
        let xs: Vec<f64> = parse_all(l).ok_or_else(|| bad(ln, "malformed vertex"))?;
        if xs.len() != dim {
            return Err(bad(ln, &format!("vertex needs {dim} coordinates")));
        }
        vertices.push(Point::new(xs[0], xs[1], if dim == 3 { xs[2] } else { 0.0 }));
    }

    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = next_line("faces")?;
        let xs: Vec<i64> = parse_all(l).ok_or_else(|| bad(ln, "malformed face"))?;
        let k = *xs.first().ok_or_else(|| bad(ln, "empty face"))?;
        if k < 2 || xs.len() != k as usize + 3 {
            return Err(bad(ln, "face line must be `k v1 .. vk owner neighbor`"));
        }
        let k = k as usize;
        let verts = xs[1..=k]
            .iter()
            .map(|&v| usize::try_from(v).ok().filter(|&v| v < nv))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad(ln, "face vertex index out of range"))?;
        let owner = usize::try_from(xs[k + 1])
            .ok()
            .filter(|&c| c < nc)
            .ok_or_else(|| bad(ln, "face owner out of range"))?;
        let neighbor = match xs[k + 2] {
            -1 => None,
            n => Some(
                usize::try_from(n)
                    .ok()
                    .filter(|&c| c < nc)
                    .ok_or_else(|| bad(ln, "face neighbor out of range"))?,
            ),
        };
        faces.push((verts, owner, neighbor));
    }

    let mut cell_faces = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (ln, l) = next_line("cells")?;
        let xs: Vec<usize> = parse_all(l).ok_or_else(|| bad(ln, "malformed cell"))?;
        let m = *xs.first().ok_or_else(|| bad(ln, "empty cell"))?;
        if xs.len() != m + 1 || xs[1..].iter().any(|&f| f >= nf) {
            return Err(bad(
                ln,
                "cell line must be `m f1 .. fm` with valid face indices",
            ));
        }
        cell_faces.push(xs[1..].to_vec());
    }
    if let Some((ln, _)) = lines.next() {
        return Err(bad(ln, "trailing data after the last cell"));
    }

    PolyMesh::from_topology(dim, vertices, faces, cell_faces)
}

fn parse_all<T: std::str::FromStr>(line: &str) -> Option<Vec<T>> {
    line.split_whitespace().map(|t| t.parse().ok()).collect()
}

/// Serializes a mesh in the text format read by [`load_mesh`].
pub fn write_mesh(mesh: &PolyMesh) -> String {
    let dim = mesh.dim();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} {} {} {}",
        dim,
        mesh.vertices.len(),
        mesh.faces.len(),
        mesh.cells.len()
    );
    for v in &mesh.vertices {
        let coords: Vec<String> = (0..dim).map(|d| format!("{:.17e}", v[d])).collect();
        let _ = writeln!(s, "{}", coords.join(" "));
    }
    for f in &mesh.faces {
        let _ = write!(s, "{}", f.vertices.len());
        for v in &f.vertices {
            let _ = write!(s, " {v}");
        }
        let nb = f.neighbor.map_or(-1, |n| n as i64);
        let _ = writeln!(s, " {} {}", f.owner, nb);
    }
    for c in &mesh.cells {
        let _ = write!(s, "{}", c.faces.len());
        for f in &c.faces {
            let _ = write!(s, " {f}");
        }
        let _ = writeln!(s);
    }
    s
}
