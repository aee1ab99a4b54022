//! Polygonal (2D) and polyhedral (3D) grids.
//!
//! Faces are stored once with an owner cell, an optional neighbor cell and a
//! unit normal pointing from the owner towards the neighbor (or out of the
//! domain for boundary faces). Cells see each face with a sign: `+1` when
//! they own it, `-1` otherwise.
//!
//! Geometry is derived from the topology by decomposing every cell into a
//! fan of simplices around the mean of its vertices. The same decomposition
//! is used by the cubature code, so volumes and moments are consistent.

mod io;

pub use io::{load_mesh, parse_mesh, write_mesh};

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

#[derive(Debug, Clone)]
pub struct Face {
    pub vertices: Vec<usize>,
    pub centroid: Point,
    /// Length of an edge in 2D, area of a polygon in 3D.
    pub area: f64,
    /// Unit normal from owner to neighbor.
    pub normal: Point,
    pub owner: usize,
    pub neighbor: Option<usize>,
}

impl Face {
    pub fn is_interior(&self) -> bool {
        self.neighbor.is_some()
    }

    /// The cell on the other side of the face as seen from `cell`.
    pub fn other(&self, cell: usize) -> Option<usize> {
        if cell == self.owner {
            self.neighbor
        } else {
            Some(self.owner)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub faces: Vec<usize>,
    pub vertices: Vec<usize>,
    /// Volume centroid.
    pub centroid: Point,
    pub volume: f64,
    pub bbox_min: Point,
    pub bbox_max: Point,
}

/// Axis-aligned box used to scale the cell basis: centered at the cell
/// centroid with the extent of the smallest enclosing cuboid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub centroid: Point,
    pub extent: Point,
}

#[derive(Debug, Clone)]
pub struct PolyMesh {
    dim: usize,
    pub vertices: Vec<Point>,
    pub faces: Vec<Face>,
    pub cells: Vec<Cell>,
}

/// A simplex of the fan decomposition: `dim + 1` vertices, positively oriented.
pub type Simplex = Vec<Point>;

impl PolyMesh {
    /// Builds a mesh from raw topology and computes all geometry.
    ///
    /// `faces` holds `(vertex list, owner, neighbor)`; 2D faces are edges with
    /// exactly two vertices. The vertex order fixes the face normal: in 2D the
    /// normal of edge `a -> b` is `(dy, -dx)`, in 3D it follows the right-hand
    /// rule. It must point out of the owner.
    pub fn from_topology(
        dim: usize,
        vertices: Vec<Point>,
        faces: Vec<(Vec<usize>, usize, Option<usize>)>,
        cell_faces: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::config("dim", format!("must be 2 or 3, got {dim}")));
        }
        let n_cells = cell_faces.len();
        let mut out_faces = Vec::with_capacity(faces.len());
        for (f, (verts, owner, neighbor)) in faces.into_iter().enumerate() {
            if owner >= n_cells || neighbor.is_some_and(|n| n >= n_cells || n == owner) {
                return Err(Error::InvalidCell {
                    cell: owner.min(n_cells.saturating_sub(1)),
                    message: format!("face {f} has an invalid owner/neighbor pair"),
                });
            }
            if verts.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidCell {
                    cell: owner,
                    message: format!("face {f} references a missing vertex"),
                });
            }
            let (centroid, area_vec) =
                face_geometry(dim, &vertices, &verts).ok_or_else(|| Error::InvalidCell {
                    cell: owner,
                    message: format!("face {f} is degenerate"),
                })?;
            let area = area_vec.norm();
            if area <= 0.0 {
                return Err(Error::InvalidCell {
                    cell: owner,
                    message: format!("face {f} has zero area"),
                });
            }
            out_faces.push(Face {
                vertices: verts,
                centroid,
                area,
                normal: area_vec / area,
                owner,
                neighbor,
            });
        }

        let mut cells = Vec::with_capacity(n_cells);
        for (c, flist) in cell_faces.into_iter().enumerate() {
            if flist.is_empty() {
                return Err(Error::InvalidCell {
                    cell: c,
                    message: "cell has no faces".into(),
                });
            }
            for &f in &flist {
                let face = out_faces.get(f).ok_or_else(|| Error::InvalidCell {
                    cell: c,
                    message: format!("references missing face {f}"),
                })?;
                if face.owner != c && face.neighbor != Some(c) {
                    return Err(Error::InvalidCell {
                        cell: c,
                        message: format!("lists face {f} but is neither its owner nor neighbor"),
                    });
                }
            }
            let mut verts: Vec<usize> = flist
                .iter()
                .flat_map(|&f| out_faces[f].vertices.iter().copied())
                .collect();
            verts.sort_unstable();
            verts.dedup();
            let mut bbox_min = Point::repeat(f64::INFINITY);
            let mut bbox_max = Point::repeat(f64::NEG_INFINITY);
            for &v in &verts {
                bbox_min = bbox_min.inf(&vertices[v]);
                bbox_max = bbox_max.sup(&vertices[v]);
            }
            if dim == 2 {
                bbox_min.z = 0.0;
                bbox_max.z = 0.0;
            }
            cells.push(Cell {
                faces: flist,
                vertices: verts,
                centroid: Point::zeros(),
                volume: 0.0,
                bbox_min,
                bbox_max,
            });
        }

        let mut mesh = PolyMesh {
            dim,
            vertices,
            faces: out_faces,
            cells,
        };

        for c in 0..n_cells {
            let surface: f64 = mesh.cells[c]
                .faces
                .iter()
                .map(|&f| mesh.faces[f].area)
                .sum();
            let closure = mesh.closure_defect(c);
            if closure.norm() > 1e-10 * surface {
                return Err(Error::InvalidCell {
                    cell: c,
                    message: format!("cell surface is not closed (defect {:e})", closure.norm()),
                });
            }
            let mut volume = 0.0;
            let mut moment = Point::zeros();
            for s in mesh.cell_simplices(c) {
                let v = simplex_volume(&s);
                volume += v;
                let mean = s.iter().sum::<Point>() / s.len() as f64;
                moment += v * mean;
            }
            if !(volume > 0.0) {
                return Err(Error::InvalidCell {
                    cell: c,
                    message: format!("non-positive volume {volume:e} (inverted cell?)"),
                });
            }
            mesh.cells[c].volume = volume;
            mesh.cells[c].centroid = moment / volume;
        }
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// `+1` if `cell` owns `face`, `-1` otherwise.
    pub fn face_sign(&self, face: usize, cell: usize) -> f64 {
        if self.faces[face].owner == cell {
            1.0
        } else {
            -1.0
        }
    }

    /// Interior neighbors of a cell, in face order.
    pub fn neighbors(&self, cell: usize) -> impl Iterator<Item = usize> + '_ {
        self.cells[cell]
            .faces
            .iter()
            .filter_map(move |&f| self.faces[f].other(cell))
    }

    pub fn cell_bounding_box(&self, cell: usize) -> BoundingBox {
        let c = &self.cells[cell];
        BoundingBox {
            centroid: c.centroid,
            extent: c.bbox_max - c.bbox_min,
        }
    }

    /// Sum of outward area vectors over the faces of a cell. Zero for a closed cell.
    pub fn closure_defect(&self, cell: usize) -> Point {
        self.cells[cell]
            .faces
            .iter()
            .map(|&f| self.faces[f].normal * self.faces[f].area * self.face_sign(f, cell))
            .sum()
    }

    pub fn vertex_mean(&self, cell: usize) -> Point {
        let c = &self.cells[cell];
        c.vertices.iter().map(|&v| self.vertices[v]).sum::<Point>() / c.vertices.len() as f64
    }

    /// Fan decomposition of a cell into positively oriented simplices around
    /// its vertex mean (triangles in 2D, tetrahedra in 3D; 3D faces are
    /// themselves fanned around their own vertex mean).
    pub fn cell_simplices(&self, cell: usize) -> Vec<Simplex> {
        let apex = self.vertex_mean(cell);
        let mut out = Vec::new();
        for &f in &self.cells[cell].faces {
            let face = &self.faces[f];
            let owned = face.owner == cell;
            match self.dim {
                2 => {
                    let (a, b) = (
                        self.vertices[face.vertices[0]],
                        self.vertices[face.vertices[1]],
                    );
                    out.push(if owned {
                        vec![apex, a, b]
                    } else {
                        vec![apex, b, a]
                    });
                }
                _ => {
                    for (a, b, m) in self.face_triangles(f) {
                        out.push(if owned {
                            vec![apex, m, a, b]
                        } else {
                            vec![apex, m, b, a]
                        });
                    }
                }
            }
        }
        out
    }

    /// Fan triangles `(a, b, m)` of a 3D face around its vertex mean `m`,
    /// ordered consistently with the face normal.
    pub fn face_triangles(&self, face: usize) -> Vec<(Point, Point, Point)> {
        let verts = &self.faces[face].vertices;
        let m = verts.iter().map(|&v| self.vertices[v]).sum::<Point>() / verts.len() as f64;
        (0..verts.len())
            .map(|k| {
                let a = self.vertices[verts[k]];
                let b = self.vertices[verts[(k + 1) % verts.len()]];
                (a, b, m)
            })
            .collect()
    }

    /// Elevation of a point: the last coordinate axis points upwards.
    pub fn elevation(&self, x: &Point) -> f64 {
        x[self.dim - 1]
    }

    /// Total volume of all cells.
    pub fn total_volume(&self) -> f64 {
        self.cells.iter().map(|c| c.volume).sum()
    }
}

/// Centroid and area vector (area times unit normal) of a face.
fn face_geometry(dim: usize, vertices: &[Point], verts: &[usize]) -> Option<(Point, Point)> {
    if dim == 2 {
        if verts.len() != 2 {
            return None;
        }
        let (a, b) = (vertices[verts[0]], vertices[verts[1]]);
        let d = b - a;
        return Some(((a + b) * 0.5, Point::new(d.y, -d.x, 0.0)));
    }
    if verts.len() < 3 {
        return None;
    }
    let m = verts.iter().map(|&v| vertices[v]).sum::<Point>() / verts.len() as f64;
    let mut area_vec = Point::zeros();
    let mut tris = Vec::with_capacity(verts.len());
    for k in 0..verts.len() {
        let a = vertices[verts[k]];
        let b = vertices[verts[(k + 1) % verts.len()]];
        let av = 0.5 * (a - m).cross(&(b - m));
        area_vec += av;
        tris.push((av, (a + b + m) / 3.0));
    }
    let norm = area_vec.norm();
    if norm <= 0.0 {
        return None;
    }
    let n = area_vec / norm;
    let mut centroid = Point::zeros();
    let mut total = 0.0;
    for (av, c) in tris {
        let a = av.dot(&n);
        centroid += a * c;
        total += a;
    }
    Some((centroid / total, area_vec))
}

/// Signed volume of a simplex given as `d + 1` points (d = 1, 2, 3).
pub fn simplex_volume(s: &[Point]) -> f64 {
    match s.len() {
        2 => (s[1] - s[0]).norm(),
        3 => {
            let (a, b) = (s[1] - s[0], s[2] - s[0]);
            0.5 * (a.x * b.y - a.y * b.x)
        }
        4 => (s[1] - s[0]).dot(&(s[2] - s[0]).cross(&(s[3] - s[0]))) / 6.0,
        n => panic!("simplex with {n} vertices"),
    }
}

/// Structured 3D hexahedral mesh of `nx * ny * nz` cells on `[0,lx]x[0,ly]x[0,lz]`.
/// Cells are numbered with x fastest.
pub fn build_cartesian(
    nx: usize,
    ny: usize,
    nz: usize,
    lx: f64,
    ly: f64,
    lz: f64,
) -> Result<PolyMesh> {
    check_dims(
        &[("nx", nx), ("ny", ny), ("nz", nz)],
        &[("lx", lx), ("ly", ly), ("lz", lz)],
    )?;
    let (dx, dy, dz) = (lx / nx as f64, ly / ny as f64, lz / nz as f64);
    let vid = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);
    let cid = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push(Point::new(i as f64 * dx, j as f64 * dy, k as f64 * dz));
            }
        }
    }
    let mut faces = Vec::new();
    let mut cell_faces = vec![Vec::with_capacity(6); nx * ny * nz];
    let mut push = |faces: &mut Vec<(Vec<usize>, usize, Option<usize>)>,
                    verts: Vec<usize>,
                    owner: usize,
                    neighbor: Option<usize>| {
        let f = faces.len();
        faces.push((verts, owner, neighbor));
        cell_faces[owner].push(f);
        if let Some(n) = neighbor {
            cell_faces[n].push(f);
        }
    };
    // x-faces: normal +x, vertices ordered counter-clockwise seen from +x.
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..=nx {
                let verts = vec![
                    vid(i, j, k),
                    vid(i, j + 1, k),
                    vid(i, j + 1, k + 1),
                    vid(i, j, k + 1),
                ];
                match i {
                    0 => push(
                        &mut faces,
                        verts.into_iter().rev().collect(),
                        cid(0, j, k),
                        None,
                    ),
                    i if i == nx => push(&mut faces, verts, cid(nx - 1, j, k), None),
                    _ => push(&mut faces, verts, cid(i - 1, j, k), Some(cid(i, j, k))),
                }
            }
        }
    }
    for k in 0..nz {
        for j in 0..=ny {
            for i in 0..nx {
                let verts = vec![
                    vid(i, j, k),
                    vid(i, j, k + 1),
                    vid(i + 1, j, k + 1),
                    vid(i + 1, j, k),
                ];
                match j {
                    0 => push(
                        &mut faces,
                        verts.into_iter().rev().collect(),
                        cid(i, 0, k),
                        None,
                    ),
                    j if j == ny => push(&mut faces, verts, cid(i, ny - 1, k), None),
                    _ => push(&mut faces, verts, cid(i, j - 1, k), Some(cid(i, j, k))),
                }
            }
        }
    }
    for k in 0..=nz {
        for j in 0..ny {
            for i in 0..nx {
                let verts = vec![
                    vid(i, j, k),
                    vid(i + 1, j, k),
                    vid(i + 1, j + 1, k),
                    vid(i, j + 1, k),
                ];
                match k {
                    0 => push(
                        &mut faces,
                        verts.into_iter().rev().collect(),
                        cid(i, j, 0),
                        None,
                    ),
                    k if k == nz => push(&mut faces, verts, cid(i, j, nz - 1), None),
                    _ => push(&mut faces, verts, cid(i, j, k - 1), Some(cid(i, j, k))),
                }
            }
        }
    }
    PolyMesh::from_topology(3, vertices, faces, cell_faces)
}

/// Structured 2D quadrilateral mesh of `nx * ny` cells on `[0,lx]x[0,ly]`,
/// x fastest. The y axis is the elevation axis.
pub fn build_cartesian_2d(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<PolyMesh> {
    check_dims(&[("nx", nx), ("ny", ny)], &[("lx", lx), ("ly", ly)])?;
    let (dx, dy) = (lx / nx as f64, ly / ny as f64);
    let vid = |i: usize, j: usize| i + (nx + 1) * j;
    let cid = |i: usize, j: usize| i + nx * j;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Point::new(i as f64 * dx, j as f64 * dy, 0.0));
        }
    }
    let mut faces = Vec::new();
    let mut cell_faces = vec![Vec::with_capacity(4); nx * ny];
    let mut push = |verts: Vec<usize>, owner: usize, neighbor: Option<usize>| {
        let f = faces.len();
        faces.push((verts, owner, neighbor));
        cell_faces[owner].push(f);
        if let Some(n) = neighbor {
            cell_faces[n].push(f);
        }
    };
    // Edge a -> b has normal (dy, -dx): upward edges point +x, leftward edges point +y.
    for j in 0..ny {
        for i in 0..=nx {
            let up = vec![vid(i, j), vid(i, j + 1)];
            match i {
                0 => push(vec![up[1], up[0]], cid(0, j), None),
                i if i == nx => push(up, cid(nx - 1, j), None),
                _ => push(up, cid(i - 1, j), Some(cid(i, j))),
            }
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            let left = vec![vid(i + 1, j), vid(i, j)];
            match j {
                0 => push(vec![left[1], left[0]], cid(i, 0), None),
                j if j == ny => push(left, cid(i, ny - 1), None),
                _ => push(left, cid(i, j - 1), Some(cid(i, j))),
            }
        }
    }
    PolyMesh::from_topology(2, vertices, faces, cell_faces)
}

fn check_dims(counts: &[(&str, usize)], lengths: &[(&str, f64)]) -> Result<()> {
    for &(key, n) in counts {
        if n == 0 {
            return Err(Error::config(key, "cell count must be at least 1"));
        }
    }
    for &(key, l) in lengths {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::config(
                key,
                format!("length must be positive, got {l}"),
            ));
        }
    }
    Ok(())
}
