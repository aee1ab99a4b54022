//! Per-mesh data for the dG transport residual: basis values at cubature
//! points, mass matrices and face traces. Built once per mesh and degree.

use crate::dgbasis::{build_cubature, build_face_quadrature, n_dof, BasisSet};
use crate::mesh::{BoundingBox, Point, PolyMesh};

#[derive(Debug, Clone)]
pub struct VolumePoint {
    /// Weight normalized by the cell volume.
    pub weight: f64,
    pub psi: Vec<f64>,
    pub grad: Vec<Point>,
}

#[derive(Debug, Clone)]
pub struct CellData {
    pub volume: f64,
    pub bbox: BoundingBox,
    pub points: Vec<VolumePoint>,
    /// Normalized mass matrix `(1/|Omega|) int psi_j psi_l`, row-major.
    pub mass: Vec<f64>,
    /// Basis means `(1/|Omega|) int psi_l`.
    pub mean: Vec<f64>,
    /// Basis values at the cell vertices.
    pub vertex_psi: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct FacePoint {
    /// Weight normalized by the face area.
    pub weight: f64,
    pub psi_owner: Vec<f64>,
    pub psi_neighbor: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FaceData {
    pub owner: usize,
    pub neighbor: usize,
    pub points: Vec<FacePoint>,
}

/// Static discretization of degree `k` on a mesh.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub dim: usize,
    pub degree: usize,
    /// Number of dofs per cell at full degree.
    pub ndof: usize,
    pub basis: BasisSet,
    pub cells: Vec<CellData>,
    /// Indexed by mesh face; `None` for boundary faces.
    pub faces: Vec<Option<FaceData>>,
}

impl Discretization {
    pub fn new(mesh: &PolyMesh, degree: usize) -> Self {
        let dim = mesh.dim();
        let basis = BasisSet::new(dim, degree);
        let ndof = basis.len();
        let precision = 2 * degree;
        let cells = (0..mesh.num_cells())
            .map(|i| {
                let bbox = mesh.cell_bounding_box(i);
                let rule = build_cubature(mesh, i, precision);
                let points: Vec<VolumePoint> = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, &weight)| {
                        let mut psi = vec![0.0; ndof];
                        let mut grad = vec![Point::zeros(); ndof];
                        basis.eval_with_gradient(&bbox, x, &mut psi, &mut grad);
                        VolumePoint { weight, psi, grad }
                    })
                    .collect();
                let mut mass = vec![0.0; ndof * ndof];
                let mut mean = vec![0.0; ndof];
                for q in &points {
                    for j in 0..ndof {
                        mean[j] += q.weight * q.psi[j];
                        for l in 0..ndof {
                            mass[j * ndof + l] += q.weight * q.psi[j] * q.psi[l];
                        }
                    }
                }
                let vertex_psi = mesh.cells[i]
                    .vertices
                    .iter()
                    .map(|&v| {
                        let mut psi = vec![0.0; ndof];
                        basis.eval(&bbox, &mesh.vertices[v], &mut psi);
                        psi
                    })
                    .collect();
                CellData {
                    volume: mesh.cells[i].volume,
                    bbox,
                    points,
                    mass,
                    mean,
                    vertex_psi,
                }
            })
            .collect();
        let faces = mesh
            .faces
            .iter()
            .enumerate()
            .map(|(f, face)| {
                let nb = face.neighbor?;
                let rule = build_face_quadrature(mesh, f, precision);
                let bo = mesh.cell_bounding_box(face.owner);
                let bn = mesh.cell_bounding_box(nb);
                let points = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, &weight)| {
                        let mut psi_owner = vec![0.0; ndof];
                        let mut psi_neighbor = vec![0.0; ndof];
                        basis.eval(&bo, x, &mut psi_owner);
                        basis.eval(&bn, x, &mut psi_neighbor);
                        FacePoint {
                            weight,
                            psi_owner,
                            psi_neighbor,
                        }
                    })
                    .collect();
                Some(FaceData {
                    owner: face.owner,
                    neighbor: nb,
                    points,
                })
            })
            .collect();
        Discretization {
            dim,
            degree,
            ndof,
            basis,
            cells,
            faces,
        }
    }

    /// Active dofs for a cell of degree `k`.
    pub fn dofs_for(&self, k: usize) -> usize {
        n_dof(k, self.dim)
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }
}
