use crate::mesh::{BoundingBox, Point};

use super::legendre::legendre;

/// Number of polynomials of total degree at most `k` in `d` variables.
pub fn n_dof(k: usize, d: usize) -> usize {
    // C(k + d, d)
    (1..=d).fold(1, |acc, i| acc * (k + i) / i)
}

/// Tensor-product Legendre basis of total degree `<= degree`, ordered by
/// total degree so that the first `n_dof(k, dim)` entries span degree `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    pub dim: usize,
    pub degree: usize,
    pub exponents: Vec<[usize; 3]>,
}

impl BasisSet {
    pub fn new(dim: usize, degree: usize) -> Self {
        assert!((1..=3).contains(&dim));
        let mut exponents = Vec::with_capacity(n_dof(degree, dim));
        for total in 0..=degree {
            match dim {
                1 => exponents.push([total, 0, 0]),
                2 => {
                    for r in (0..=total).rev() {
                        exponents.push([r, total - r, 0]);
                    }
                }
                _ => {
                    for r in (0..=total).rev() {
                        for s in (0..=total - r).rev() {
                            exponents.push([r, s, total - r - s]);
                        }
                    }
                }
            }
        }
        BasisSet {
            dim,
            degree,
            exponents,
        }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Number of functions spanning degree `k <= self.degree`.
    pub fn len_for_degree(&self, k: usize) -> usize {
        n_dof(k.min(self.degree), self.dim)
    }

    /// Values of all basis functions at `x` for the cell with bounding box `bb`.
    pub fn eval(&self, bb: &BoundingBox, x: &Point, values: &mut [f64]) {
        let mut table = [[0.0; 8]; 3];
        let maxdeg = self.degree.min(7);
        for a in 0..self.dim {
            let xi = (x[a] - bb.centroid[a]) / (0.5 * bb.extent[a]);
            for (r, slot) in table[a].iter_mut().enumerate().take(maxdeg + 1) {
                *slot = legendre(r, xi).0;
            }
        }
        for (v, e) in values.iter_mut().zip(&self.exponents) {
            *v = (0..self.dim).map(|a| table[a][e[a]]).product();
        }
    }

    /// Values and gradients of all basis functions at `x`.
    pub fn eval_with_gradient(
        &self,
        bb: &BoundingBox,
        x: &Point,
        values: &mut [f64],
        grads: &mut [Point],
    ) {
        let mut val = [[0.0; 8]; 3];
        let mut der = [[0.0; 8]; 3];
        let maxdeg = self.degree.min(7);
        for a in 0..self.dim {
            let scale = 2.0 / bb.extent[a];
            let xi = (x[a] - bb.centroid[a]) * scale;
            for r in 0..=maxdeg {
                let (l, dl) = legendre(r, xi);
                val[a][r] = l;
                der[a][r] = dl * scale;
            }
        }
        for ((v, g), e) in values.iter_mut().zip(grads.iter_mut()).zip(&self.exponents) {
            *v = (0..self.dim).map(|a| val[a][e[a]]).product();
            let mut grad = Point::zeros();
            for a in 0..self.dim {
                grad[a] = (0..self.dim)
                    .map(|b| if a == b { der[b][e[b]] } else { val[b][e[b]] })
                    .product();
            }
            *g = grad;
        }
    }
}
