//! Sparse assembly and direct solves.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};

/// Coordinate-format accumulator for a square sparse matrix. Duplicate
/// entries are summed on conversion.
#[derive(Debug, Clone, Default)]
pub struct TripletMatrix {
    n: usize,
    entries: Vec<Triplet<usize, usize, f64>>,
}

impl TripletMatrix {
    pub fn new(n: usize) -> Self {
        TripletMatrix {
            n,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, nnz: usize) -> Self {
        TripletMatrix {
            n,
            entries: Vec::with_capacity(nnz),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        self.entries.push(Triplet::new(row, col, value));
    }

    /// Dense copy, for small systems and tests.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for t in &self.entries {
            m[(t.row, t.col)] += t.val;
        }
        m
    }

    /// Solves `A x = b` by sparse LU factorization.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(rhs.len(), self.n);
        if self.n == 0 {
            return Ok(Vec::new());
        }
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(self.n, self.n, &self.entries)
            .map_err(|e| Error::Singular(format!("assembly failed: {e:?}")))?;
        let lu = a
            .sp_lu()
            .map_err(|e| Error::Singular(format!("LU factorization failed: {e:?}")))?;
        let mut x = faer::Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        lu.solve_in_place(x.as_mut());
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular(
                "solution contains non-finite values".into(),
            ));
        }
        Ok(out)
    }
}
