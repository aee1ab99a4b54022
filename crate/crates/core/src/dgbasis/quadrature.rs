//! Conical-product (collapsed Gauss) rules on simplices.

use crate::mesh::{simplex_volume, Point, PolyMesh, Simplex};

use super::legendre::gauss_legendre_unit;

/// A quadrature rule: points and absolute weights.
#[derive(Debug, Clone, Default)]
pub struct RawRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl RawRule {
    pub fn integrate(&self, f: impl Fn(&Point) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }

    fn extend(&mut self, other: RawRule) {
        self.points.extend(other.points);
        self.weights.extend(other.weights);
    }
}

/// Rule exact for polynomials of total degree `degree` on a simplex given by
/// its `d + 1` vertices (d = 1, 2, 3). Weights carry the signed simplex measure.
pub fn simplex_rule(simplex: &[Point], degree: usize) -> RawRule {
    let d = simplex.len() - 1;
    let vol = simplex_volume(simplex);
    let v0 = simplex[0];
    let map =
        |r: &[f64]| -> Point { v0 + (0..d).map(|a| (simplex[a + 1] - v0) * r[a]).sum::<Point>() };
    let mut rule = RawRule::default();
    match d {
        1 => {
            for (u, w) in gauss_legendre_unit(degree / 2 + 1) {
                rule.points.push(map(&[u]));
                rule.weights.push(w * vol);
            }
        }
        2 => {
            // x = u, y = v (1 - u), Jacobian (1 - u); reference area 1/2.
            let n = (degree + 2).div_ceil(2);
            let g = gauss_legendre_unit(n);
            for &(u, wu) in &g {
                for &(v, wv) in &g {
                    rule.points.push(map(&[u, v * (1.0 - u)]));
                    rule.weights.push(wu * wv * (1.0 - u) * 2.0 * vol);
                }
            }
        }
        3 => {
            let n = (degree + 3).div_ceil(2);
            let g = gauss_legendre_unit(n);
            for &(u, wu) in &g {
                for &(v, wv) in &g {
                    for &(t, wt) in &g {
                        rule.points
                            .push(map(&[u, v * (1.0 - u), t * (1.0 - u) * (1.0 - v)]));
                        rule.weights
                            .push(wu * wv * wt * (1.0 - u).powi(2) * (1.0 - v) * 6.0 * vol);
                    }
                }
            }
        }
        _ => panic!("unsupported simplex dimension {d}"),
    }
    rule
}

/// Rule of the given degree on a union of simplices.
pub fn composite_rule(simplices: &[Simplex], degree: usize) -> RawRule {
    let mut rule = RawRule::default();
    for s in simplices {
        rule.extend(simplex_rule(s, degree));
    }
    rule
}

/// Rule of the given degree over a mesh cell by fan subdivision.
pub fn subdivision_rule(mesh: &PolyMesh, cell: usize, degree: usize) -> RawRule {
    composite_rule(&mesh.cell_simplices(cell), degree)
}

/// Per-triangle rule over a (possibly non-planar) 3D face; weights are
/// triangle areas.
pub fn face_triangle_rule(mesh: &PolyMesh, face: usize, degree: usize) -> RawRule {
    let n = (degree + 2).div_ceil(2);
    let g = gauss_legendre_unit(n);
    let mut rule = RawRule::default();
    for (a, b, m) in mesh.face_triangles(face) {
        let area = 0.5 * (a - m).cross(&(b - m)).norm();
        for &(u, wu) in &g {
            for &(v, wv) in &g {
                let (s, t) = (u, v * (1.0 - u));
                rule.points.push(m + (a - m) * s + (b - m) * t);
                rule.weights.push(wu * wv * (1.0 - u) * 2.0 * area);
            }
        }
    }
    rule
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact integral of x^a y^b over the reference triangle: a! b! / (a + b + 2)!
    fn tri_moment(a: u32, b: u32) -> f64 {
        let f = |n: u32| (1..=n).map(f64::from).product::<f64>();
        f(a) * f(b) / f(a + b + 2)
    }

    #[test]
    fn triangle_rule_exact() {
        let s = vec![
            Point::zeros(),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
        ];
        for deg in 0..7u32 {
            let rule = simplex_rule(&s, deg as usize);
            for a in 0..=deg {
                let b = deg - a;
                let q = rule.integrate(|x| x.x.powi(a as i32) * x.y.powi(b as i32));
                assert!((q - tri_moment(a, b)).abs() < 1e-15, "deg {deg}");
            }
        }
    }

    #[test]
    fn tetra_rule_exact() {
        // x^a y^b z^c over the reference tetrahedron: a! b! c! / (a + b + c + 3)!
        let f = |n: u32| (1..=n).map(f64::from).product::<f64>();
        let s = vec![
            Point::zeros(),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
        ];
        for deg in 0..5u32 {
            let rule = simplex_rule(&s, deg as usize);
            for a in 0..=deg {
                for b in 0..=deg - a {
                    let c = deg - a - b;
                    let exact = f(a) * f(b) * f(c) / f(a + b + c + 3);
                    let q = rule.integrate(|x| {
                        x.x.powi(a as i32) * x.y.powi(b as i32) * x.z.powi(c as i32)
                    });
                    assert!((q - exact).abs() < 1e-15);
                }
            }
        }
    }
}
