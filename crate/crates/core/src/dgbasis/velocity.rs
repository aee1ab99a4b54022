use crate::mesh::{Point, PolyMesh};

/// Cell velocity reconstructed from face fluxes (owner orientation, volumetric
/// rate through the face). Exact for uniform fields.
pub fn interpolate_velocity(mesh: &PolyMesh, cell: usize, face_flux: &[f64]) -> Point {
    let c = &mesh.cells[cell];
    let mut v = Point::zeros();
    for &f in &c.faces {
        v += (mesh.faces[f].centroid - c.centroid) * (mesh.face_sign(f, cell) * face_flux[f]);
    }
    v / c.volume
}
