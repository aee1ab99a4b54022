//! Moment-fitted cubature on polytopal cells and faces.
//!
//! For a region `Omega` and the Legendre basis of degree `k` on its bounding
//! box, pick `n_dof` interior points so that the collocation matrix `Psi`
//! (`Psi[j][q] = psi_j(x_q)`) is well conditioned and solve
//! `Psi w = (1/|Omega|) int psi dV`. The moments on the right are computed
//! with a degree-`k` rule on the fan subdivision of the region.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::mesh::{BoundingBox, Point, PolyMesh, Simplex};

use super::basis::BasisSet;
use super::legendre::gauss_legendre_unit;
use super::quadrature::{composite_rule, face_triangle_rule, RawRule};

/// Cubature rule with weights normalized by the region measure: the rule
/// integrates `f` as `measure * sum_q weights[q] f(points[q])`.
#[derive(Debug, Clone)]
pub struct CubatureRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub measure: f64,
    /// Polynomial degree integrated exactly.
    pub precision: usize,
    /// False when the rule fell back to plain subdivision.
    pub fitted: bool,
}

impl CubatureRule {
    pub fn integrate(&self, f: impl Fn(&Point) -> f64) -> f64 {
        self.measure
            * self
                .points
                .iter()
                .zip(&self.weights)
                .map(|(x, w)| w * f(x))
                .sum::<f64>()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn from_raw(raw: RawRule, precision: usize) -> Self {
        let measure: f64 = raw.weights.iter().sum();
        CubatureRule {
            weights: raw.weights.iter().map(|w| w / measure).collect(),
            points: raw.points,
            measure,
            precision,
            fitted: false,
        }
    }
}

const MAX_RETRIES: usize = 3;

/// Moment fitting on a region given as positively oriented simplices in
/// `dim`-dimensional coordinates (unused components zero).
fn moment_fit(dim: usize, simplices: &[Simplex], k: usize) -> CubatureRule {
    let moments_rule = composite_rule(simplices, k);
    let measure: f64 = moments_rule.weights.iter().sum();
    let centroid = moments_rule
        .points
        .iter()
        .zip(&moments_rule.weights)
        .map(|(x, w)| x * *w)
        .sum::<Point>()
        / measure;
    let mut lo = Point::repeat(f64::INFINITY);
    let mut hi = Point::repeat(f64::NEG_INFINITY);
    for s in simplices {
        for v in s {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
    }
    for a in dim..3 {
        lo[a] = 0.0;
        hi[a] = 0.0;
    }
    let bb = BoundingBox {
        centroid,
        extent: hi - lo,
    };
    let basis = BasisSet::new(dim, k);
    let ndof = basis.len();

    let mut vals = vec![0.0; ndof];
    let mut b = DVector::zeros(ndof);
    for (x, w) in moments_rule.points.iter().zip(&moments_rule.weights) {
        basis.eval(&bb, x, &mut vals);
        for j in 0..ndof {
            b[j] += w * vals[j] / measure;
        }
    }

    let diam = (hi - lo).norm();
    let inset = 1e-6 * diam;
    for attempt in 0..=MAX_RETRIES {
        let m = k + 3 + 2 * attempt;
        let mut candidates = vec![centroid];
        let mut idx = [0usize; 3];
        let counts = [m, if dim > 1 { m } else { 1 }, if dim > 2 { m } else { 1 }];
        loop {
            let mut x = Point::zeros();
            for a in 0..dim {
                x[a] = lo[a] + (hi[a] - lo[a]) * (idx[a] as f64 + 0.5) / counts[a] as f64;
            }
            let d = centroid - x;
            let dn = d.norm();
            if dn > 0.0 {
                x += d * (inset / dn).min(1.0);
            }
            if simplices.iter().any(|s| inside_simplex(s, &x)) {
                candidates.push(x);
            }
            let mut a = 0;
            loop {
                idx[a] += 1;
                if idx[a] < counts[a] {
                    break;
                }
                idx[a] = 0;
                a += 1;
                if a == 3 {
                    break;
                }
            }
            if a == 3 {
                break;
            }
        }
        if attempt > 0 {
            candidates.extend(moments_rule.points.iter().copied());
        }
        if let Some((points, weights)) = fit_points(&basis, &bb, &candidates, &b) {
            return CubatureRule {
                points,
                weights,
                measure,
                precision: k,
                fitted: true,
            };
        }
    }
    warn!("moment fitting failed; falling back to the subdivision rule");
    CubatureRule::from_raw(moments_rule, k)
}

/// Greedy selection of `ndof` candidates (column-pivoted Gram-Schmidt on the
/// basis-value vectors) followed by the solve of `Psi w = b`.
fn fit_points(
    basis: &BasisSet,
    bb: &BoundingBox,
    candidates: &[Point],
    b: &DVector<f64>,
) -> Option<(Vec<Point>, Vec<f64>)> {
    let ndof = basis.len();
    if candidates.len() < ndof {
        return None;
    }
    let mut rows: Vec<DVector<f64>> = candidates
        .iter()
        .map(|x| {
            let mut v = vec![0.0; ndof];
            basis.eval(bb, x, &mut v);
            DVector::from_vec(v)
        })
        .collect();
    let original = rows.clone();
    let scale = rows.iter().map(|r| r.norm()).fold(0.0, f64::max);
    let mut chosen = Vec::with_capacity(ndof);
    for _ in 0..ndof {
        let (best, norm) = rows
            .iter()
            .enumerate()
            .filter(|(i, _)| !chosen.contains(i))
            .map(|(i, r)| (i, r.norm()))
            .fold(
                (usize::MAX, 0.0),
                |acc, (i, n)| if n > acc.1 { (i, n) } else { acc },
            );
        if best == usize::MAX || norm < 1e-8 * scale {
            return None;
        }
        chosen.push(best);
        let q = &rows[best] / norm;
        for (i, r) in rows.iter_mut().enumerate() {
            if !chosen.contains(&i) {
                let c = q.dot(r);
                r.axpy(-c, &q, 1.0);
            }
        }
    }
    let psi = DMatrix::from_fn(ndof, ndof, |j, q| original[chosen[q]][j]);
    let w = psi.clone().lu().solve(b)?;
    let resid = (&psi * &w - b).amax();
    if !(resid <= 1e-13 * (1.0 + b.amax())) {
        return None;
    }
    Some((
        chosen.iter().map(|&i| candidates[i]).collect(),
        w.iter().copied().collect(),
    ))
}

fn inside_simplex(s: &[Point], x: &Point) -> bool {
    let tol = -1e-12;
    match s.len() {
        3 => {
            let m = nalgebra::Matrix2::new(
                s[1].x - s[0].x,
                s[2].x - s[0].x,
                s[1].y - s[0].y,
                s[2].y - s[0].y,
            );
            let Some(inv) = m.try_inverse() else {
                return false;
            };
            let l = inv * nalgebra::Vector2::new(x.x - s[0].x, x.y - s[0].y);
            l[0] >= tol && l[1] >= tol && 1.0 - l[0] - l[1] >= tol
        }
        4 => {
            let m = nalgebra::Matrix3::from_columns(&[s[1] - s[0], s[2] - s[0], s[3] - s[0]]);
            let Some(inv) = m.try_inverse() else {
                return false;
            };
            let l = inv * (x - s[0]);
            l.iter().all(|&v| v >= tol) && 1.0 - l.sum() >= tol
        }
        _ => false,
    }
}

/// Moment-fitted volume rule for a mesh cell, exact for polynomials of
/// total degree `precision` (use `2k` for dG(k) mass matrices).
pub fn build_cubature(mesh: &PolyMesh, cell: usize, precision: usize) -> CubatureRule {
    let rule = moment_fit(mesh.dim(), &mesh.cell_simplices(cell), precision);
    // The fitted weights are relative to the region measure computed from the
    // same subdivision as the cell volume.
    debug_assert!(
        (rule.measure - mesh.cells[cell].volume).abs() <= 1e-12 * mesh.cells[cell].volume
    );
    rule
}

/// Surface rule of precision `k` on a face: Gauss-Legendre on 2D edges,
/// moment fitting on planar 3D faces, per-triangle rules on warped faces.
pub fn build_face_quadrature(mesh: &PolyMesh, face: usize, k: usize) -> CubatureRule {
    let f = &mesh.faces[face];
    if mesh.dim() == 2 {
        let (a, b) = (mesh.vertices[f.vertices[0]], mesh.vertices[f.vertices[1]]);
        let g = gauss_legendre_unit(k / 2 + 1);
        return CubatureRule {
            points: g.iter().map(|(u, _)| a + (b - a) * *u).collect(),
            weights: g.iter().map(|(_, w)| *w).collect(),
            measure: f.area,
            precision: k,
            fitted: false,
        };
    }
    let n = f.normal;
    let verts: Vec<Point> = f.vertices.iter().map(|&v| mesh.vertices[v]).collect();
    let diam = verts
        .iter()
        .flat_map(|a| verts.iter().map(move |b| (a - b).norm()))
        .fold(0.0, f64::max);
    let warp = verts
        .iter()
        .map(|v| (v - f.centroid).dot(&n).abs())
        .fold(0.0, f64::max);
    if warp > 1e-8 * diam {
        return CubatureRule::from_raw(face_triangle_rule(mesh, face, k), k);
    }
    // local orthonormal frame in the face plane
    let e1 = {
        let d = verts[1] - verts[0];
        let t = d - n * d.dot(&n);
        t / t.norm()
    };
    let e2 = n.cross(&e1);
    let to_local = |x: &Point| {
        let d = x - f.centroid;
        Point::new(d.dot(&e1), d.dot(&e2), 0.0)
    };
    let simplices: Vec<Simplex> = mesh
        .face_triangles(face)
        .into_iter()
        .map(|(a, b, m)| vec![to_local(&m), to_local(&a), to_local(&b)])
        .collect();
    let local = moment_fit(2, &simplices, k);
    CubatureRule {
        points: local
            .points
            .iter()
            .map(|p| f.centroid + e1 * p.x + e2 * p.y)
            .collect(),
        weights: local.weights,
        measure: local.measure,
        precision: k,
        fitted: local.fitted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cartesian, build_cartesian_2d, parse_mesh};

    fn monomials(dim: usize, deg: usize) -> Vec<[i32; 3]> {
        let mut out = Vec::new();
        for a in 0..=deg as i32 {
            for b in 0..=deg as i32 {
                for c in 0..=deg as i32 {
                    if a + b + c <= deg as i32 && (dim > 1 || b == 0) && (dim > 2 || c == 0) {
                        out.push([a, b, c]);
                    }
                }
            }
        }
        out
    }

    fn mono(e: [i32; 3], x: &Point) -> f64 {
        x.x.powi(e[0]) * x.y.powi(e[1]) * x.z.powi(e[2])
    }

    #[test]
    fn unit_square_k0_is_centroid() {
        let m = build_cartesian_2d(1, 1, 1.0, 1.0).unwrap();
        let r = build_cubature(&m, 0, 0);
        assert_eq!(r.len(), 1);
        assert!((r.points[0] - Point::new(0.5, 0.5, 0.0)).norm() < 1e-12);
        assert!((r.weights[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn unit_square_k2_matches_tensor_gauss() {
        let m = build_cartesian_2d(1, 1, 1.0, 1.0).unwrap();
        let r = build_cubature(&m, 0, 2);
        assert!(r.fitted);
        assert_eq!(r.len(), 6);
        // tensor Gauss oracle, 3x3 points
        let g = gauss_legendre_unit(3);
        for e in monomials(2, 2) {
            let exact: f64 = g
                .iter()
                .flat_map(|&(x, wx)| {
                    g.iter()
                        .map(move |&(y, wy)| wx * wy * x.powi(e[0]) * y.powi(e[1]))
                })
                .sum();
            assert!((r.integrate(|x| mono(e, x)) - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn pentagon_moments() {
        let text = "2 5 5 1\n0 0\n2 0\n2.5 1.5\n1 2.5\n-0.5 1\n2 0 1 0 -1\n2 1 2 0 -1\n2 2 3 0 -1\n2 3 4 0 -1\n2 4 0 0 -1\n5 0 1 2 3 4\n";
        let m = parse_mesh(text).unwrap();
        let r = build_cubature(&m, 0, 2);
        let oracle = super::super::quadrature::subdivision_rule(&m, 0, 4);
        for e in monomials(2, 2) {
            let exact = oracle.integrate(|x| mono(e, x));
            assert!((r.integrate(|x| mono(e, x)) - exact).abs() < 1e-10 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn edge_rules() {
        let m = build_cartesian_2d(1, 1, 1.0, 1.0).unwrap();
        let f = m
            .faces
            .iter()
            .position(|f| (f.centroid - Point::new(1.0, 0.5, 0.0)).norm() < 1e-12)
            .unwrap();
        let r1 = build_face_quadrature(&m, f, 1);
        assert_eq!(r1.len(), 1);
        assert!((r1.points[0] - Point::new(1.0, 0.5, 0.0)).norm() < 1e-15);
        assert!((r1.measure * r1.weights[0] - 1.0).abs() < 1e-15);
        let r3 = build_face_quadrature(&m, f, 3);
        assert_eq!(r3.len(), 2);
        let offs = 0.5 / 3f64.sqrt();
        assert!((r3.points[0].y - (0.5 - offs)).abs() < 1e-15);
        assert!((r3.points[1].y - (0.5 + offs)).abs() < 1e-15);
    }

    #[test]
    fn square_face_in_3d() {
        let m = build_cartesian(1, 1, 1, 2.0, 1.0, 3.0).unwrap();
        let g = gauss_legendre_unit(3);
        for (fi, face) in m.faces.iter().enumerate() {
            let r = build_face_quadrature(&m, fi, 2);
            assert!(r.fitted);
            assert!((r.measure - face.area).abs() < 1e-13);
            // parametrize the face as centroid + s u + t v over its bounding rectangle
            let verts: Vec<Point> = face.vertices.iter().map(|&v| m.vertices[v]).collect();
            let lo = verts
                .iter()
                .fold(Point::repeat(f64::INFINITY), |a, b| a.inf(b));
            let hi = verts
                .iter()
                .fold(Point::repeat(f64::NEG_INFINITY), |a, b| a.sup(b));
            let axes: Vec<usize> = (0..3).filter(|&a| hi[a] > lo[a]).collect();
            for e in monomials(3, 2) {
                let exact: f64 = g
                    .iter()
                    .flat_map(|&(s, ws)| g.iter().map(move |&(t, wt)| (s, t, ws * wt)))
                    .map(|(s, t, w)| {
                        let mut x = lo;
                        x[axes[0]] += s * (hi[axes[0]] - lo[axes[0]]);
                        x[axes[1]] += t * (hi[axes[1]] - lo[axes[1]]);
                        w * face.area * mono(e, &x)
                    })
                    .sum();
                assert!((r.integrate(|x| mono(e, x)) - exact).abs() < 1e-12 * (1.0 + exact.abs()));
            }
        }
    }
}
