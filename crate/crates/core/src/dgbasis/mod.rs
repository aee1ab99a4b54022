//! Discontinuous Galerkin bases, cubature and velocity reconstruction.

mod basis;
mod cubature;
mod legendre;
mod quadrature;
mod velocity;

pub use basis::{n_dof, BasisSet};
pub use cubature::{build_cubature, build_face_quadrature, CubatureRule};
pub use legendre::{gauss_legendre, gauss_legendre_unit, legendre};
pub use quadrature::{composite_rule, simplex_rule, subdivision_rule, RawRule};
pub use velocity::interpolate_velocity;
