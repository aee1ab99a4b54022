//! Discontinuous Galerkin transport of the water saturation with frozen total
//! fluxes, solved either cell by cell along the flux graph or by Newton's
//! method on all cells at once.

mod discretization;
mod global;
mod problem;
mod reordered;

pub use discretization::{CellData, Discretization, FaceData, FacePoint, VolumePoint};
pub use global::{jacobian_couplings, solve_global_newton, GlobalStats};
pub use problem::{CellEval, FacePointFlux, JacMode, TransportProblem, Upstream};
pub use reordered::{transport_step, TransportStats};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct TransportParams {
    pub degree: usize,
    /// Cells per solve unit; 1 solves component by component.
    pub block_size: usize,
    /// Bound on the residual scaled by `phi b_w |Omega|`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub global_max_iterations: usize,
    pub max_sweeps: usize,
    /// Largest change of a cell mean per Newton iteration.
    pub max_update: f64,
    pub jump_tolerance: f64,
    pub epsilon: f64,
    pub order_reduction: bool,
    /// Graph rebuilds allowed when upstream directions were mispredicted.
    pub graph_passes: usize,
}

impl Default for TransportParams {
    fn default() -> Self {
        TransportParams {
            degree: 0,
            block_size: 1,
            tolerance: 1e-9,
            max_iterations: 25,
            global_max_iterations: 50,
            max_sweeps: 50,
            max_update: 0.2,
            jump_tolerance: 0.2,
            epsilon: 1e-4,
            order_reduction: true,
            graph_passes: 5,
        }
    }
}

impl TransportParams {
    pub fn validate(&self) -> Result<()> {
        if self.degree > 1 {
            return Err(Error::config("solver.degree", "degree must be 0 or 1"));
        }
        if self.block_size == 0 {
            return Err(Error::config(
                "solver.block_size",
                "block size must be at least 1",
            ));
        }
        for (key, v) in [
            ("solver.tolerance", self.tolerance),
            ("solver.max_update", self.max_update),
            ("solver.jump_tolerance", self.jump_tolerance),
            ("solver.epsilon", self.epsilon),
        ] {
            if !(v > 0.0) {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if self.max_iterations == 0 || self.max_sweeps == 0 || self.global_max_iterations == 0 {
            return Err(Error::config(
                "solver.max_iterations",
                "iteration limits must be positive",
            ));
        }
        Ok(())
    }
}

/// Water-saturation dofs of every cell. Cells store `ndof` coefficients; a
/// cell of active degree 0 uses only the first and keeps the rest at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportState {
    pub ndof: usize,
    pub coeffs: Vec<f64>,
    pub degree: Vec<usize>,
}

impl TransportState {
    /// Uniform saturation `s` in every cell.
    pub fn uniform(n_cells: usize, disc: &Discretization, s: f64) -> Self {
        Self::from_means(disc, &vec![s; n_cells])
    }

    /// Piecewise-constant state with the given cell means.
    pub fn from_means(disc: &Discretization, means: &[f64]) -> Self {
        let nd = disc.ndof;
        let mut coeffs = vec![0.0; means.len() * nd];
        for (i, &s) in means.iter().enumerate() {
            coeffs[i * nd] = s;
        }
        TransportState {
            ndof: nd,
            coeffs,
            degree: vec![disc.degree; means.len()],
        }
    }

    pub fn num_cells(&self) -> usize {
        self.degree.len()
    }

    pub fn cell(&self, i: usize) -> &[f64] {
        &self.coeffs[i * self.ndof..(i + 1) * self.ndof]
    }

    pub fn cell_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coeffs[i * self.ndof..(i + 1) * self.ndof]
    }

    pub fn mean(&self, disc: &Discretization, i: usize) -> f64 {
        self.cell(i)
            .iter()
            .zip(&disc.cells[i].mean)
            .map(|(c, m)| c * m)
            .sum()
    }

    pub fn means(&self, disc: &Discretization) -> Vec<f64> {
        (0..self.num_cells()).map(|i| self.mean(disc, i)).collect()
    }

    /// Replaces the cell polynomial by its mean and marks the cell degree 0.
    pub fn collapse(&mut self, disc: &Discretization, i: usize) {
        let m = self.mean(disc, i);
        let c = self.cell_mut(i);
        c.fill(0.0);
        c[0] = m;
        self.degree[i] = 0;
    }

    /// Saturation at point `x` of cell `i`.
    pub fn value_at(&self, disc: &Discretization, i: usize, x: &crate::mesh::Point) -> f64 {
        let mut psi = vec![0.0; disc.ndof];
        disc.basis.eval(&disc.cells[i].bbox, x, &mut psi);
        let n = disc.dofs_for(self.degree[i]);
        psi[..n].iter().zip(self.cell(i)).map(|(p, c)| p * c).sum()
    }

    /// Smallest and largest saturation over the vertices of all cells.
    pub fn vertex_range(&self, disc: &Discretization) -> (f64, f64) {
        let mut range = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..self.num_cells() {
            let n = disc.dofs_for(self.degree[i]);
            for psi in &disc.cells[i].vertex_psi {
                let s: f64 = psi[..n].iter().zip(self.cell(i)).map(|(p, c)| p * c).sum();
                range = (range.0.min(s), range.1.max(s));
            }
        }
        range
    }

    /// Largest dof difference to another state of the same layout.
    pub fn max_difference(&self, other: &TransportState) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Largest change of the cell mean or of a vertex value of cell `i` under
/// the dof update `dx` (the first `dx.len()` coefficients).
fn point_change(disc: &Discretization, i: usize, dx: &[f64]) -> f64 {
    let dot = |w: &[f64]| dx.iter().zip(w).map(|(d, w)| d * w).sum::<f64>().abs();
    let mut m = dot(&disc.cells[i].mean);
    if dx.len() > 1 {
        for psi in &disc.cells[i].vertex_psi {
            m = m.max(dot(psi));
        }
    }
    m
}

/// Scales a Newton update so that no cell value moves by more than `cap`.
/// `mean_changes` yields the largest change of every cell in the update.
fn damping_factor(cap: f64, mean_changes: impl Iterator<Item = f64>) -> f64 {
    let m = mean_changes.fold(0.0f64, |m, d| m.max(d.abs()));
    if m > cap {
        cap / m
    } else {
        1.0
    }
}

/// Step-halving safeguard for multi-dof Newton. A step that fails to lower
/// the scaled residual is retried from the same base point at half length.
#[derive(Default)]
struct Backtrack {
    idx: Vec<usize>,
    base: Vec<f64>,
    dx: Vec<f64>,
    scale: f64,
    norm: f64,
    halvings: usize,
}

impl Backtrack {
    const MAX_HALVINGS: usize = 8;

    /// Called with the residual norm at the current iterate; returns true if
    /// the last step was rejected and a shorter one has been applied.
    fn retreat(&mut self, norm: f64, coeffs: &mut [f64]) -> bool {
        if self.idx.is_empty() || norm < self.norm || self.halvings >= Self::MAX_HALVINGS {
            return false;
        }
        self.scale *= 0.5;
        self.halvings += 1;
        for ((&j, b), d) in self.idx.iter().zip(&self.base).zip(&self.dx) {
            coeffs[j] = b - self.scale * d;
        }
        true
    }

    /// Applies `coeffs[idx] -= scale * dx` and remembers the base point.
    fn step(
        &mut self,
        norm: f64,
        scale: f64,
        update: impl Iterator<Item = (usize, f64)>,
        coeffs: &mut [f64],
    ) {
        self.idx.clear();
        self.base.clear();
        self.dx.clear();
        for (j, d) in update {
            self.idx.push(j);
            self.base.push(coeffs[j]);
            self.dx.push(d);
            coeffs[j] -= scale * d;
        }
        self.scale = scale;
        self.norm = norm;
        self.halvings = 0;
    }
}
