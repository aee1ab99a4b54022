//! Transport solve along the topological order of the flux graph.

use std::collections::{HashMap, HashSet};

use log::debug;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fluxgraph::{block_partition, condense_and_sort, FluxGraph, Ordering, SolveUnit};
use crate::linalg::TripletMatrix;

use super::problem::{CellEval, JacMode, TransportProblem};
use super::{damping_factor, point_change, Backtrack, TransportState};

#[derive(Debug, Clone, Default)]
pub struct TransportStats {
    /// Newton iterations spent on each cell.
    pub iterations: Vec<u32>,
    /// Cells whose dofs changed during the step.
    pub updated: Vec<bool>,
    pub num_components: usize,
    pub num_cycles: usize,
    pub max_cycle_size: usize,
    pub mean_cycle_size: f64,
    /// Gauss-Seidel sweeps of every cycle solve.
    pub sweeps: Vec<usize>,
    /// Cycles that needed the simultaneous Newton fallback.
    pub gs_fallbacks: usize,
    pub reduced_cells: usize,
    /// Traversals of the graph, including re-traversals after mispredicted
    /// upstream directions.
    pub graph_passes: usize,
    pub ordering: Option<Ordering>,
}

impl TransportStats {
    fn new(n: usize) -> Self {
        TransportStats {
            iterations: vec![0; n],
            updated: vec![false; n],
            ..Default::default()
        }
    }

    pub fn active_cells(&self) -> usize {
        self.iterations.iter().filter(|&&k| k > 0).count()
    }

    pub fn total_iterations(&self) -> u64 {
        self.iterations.iter().map(|&k| k as u64).sum()
    }

    /// Average iterations per cell over all cells.
    pub fn mean_iterations(&self) -> f64 {
        self.total_iterations() as f64 / self.iterations.len().max(1) as f64
    }

    pub fn max_iterations(&self) -> u32 {
        self.iterations.iter().copied().max().unwrap_or(0)
    }

    pub fn max_sweeps(&self) -> usize {
        self.sweeps.iter().copied().max().unwrap_or(0)
    }
}

/// Cells among `triggered` whose reduction does not depend on another
/// pending reduction upstream. `components` must be in topological order.
pub(super) fn accept_minimal<'c>(
    components: impl Iterator<Item = &'c [usize]>,
    triggered: &HashSet<usize>,
    pred: &[Vec<usize>],
) -> Vec<usize> {
    let mut affected = HashSet::new();
    let mut accepted = Vec::new();
    for comp in components {
        let tainted = comp.iter().any(|&c| {
            pred[c]
                .iter()
                .any(|p| !comp.contains(p) && affected.contains(p))
        });
        let hits: Vec<usize> = comp
            .iter()
            .copied()
            .filter(|c| triggered.contains(c))
            .collect();
        if !tainted {
            accepted.extend_from_slice(&hits);
        }
        if tainted || !hits.is_empty() {
            affected.extend(comp.iter().copied());
        }
    }
    accepted
}

struct Solver<'p, 'a> {
    prob: &'p TransportProblem<'a>,
    st: TransportState,
    stats: TransportStats,
    scratch: CellEval,
}

impl Solver<'_, '_> {
    fn converged(&mut self, i: usize) -> bool {
        self.prob.cell_converged(i, &self.st, &mut self.scratch)
    }

    fn record(&mut self, i: usize, iterations: usize) {
        self.stats.iterations[i] += iterations as u32;
        if iterations > 0 {
            self.stats.updated[i] = true;
        }
    }

    /// Damped Newton on the dofs of one cell with all neighbors frozen.
    fn solve_cell(&mut self, i: usize) -> Result<()> {
        let prob = self.prob;
        let params = prob.params;
        // bracket of the cell mean for scalar problems
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut bt = Backtrack::default();
        let mut it = 0;
        loop {
            prob.cell_residual(i, &self.st, JacMode::Own, &mut self.scratch);
            let norm = prob.scaled_norm(i, &self.scratch);
            if norm > params.tolerance && bt.retreat(norm, &mut self.st.coeffs) {
                continue;
            }
            if norm <= params.tolerance {
                self.record(i, it);
                return Ok(());
            }
            if it >= params.max_iterations {
                self.record(i, it);
                return Err(Error::step_failure(
                    "transport",
                    format!("cell {i}: residual {norm:e} after {it} Newton iterations"),
                ));
            }
            let n = self.scratch.n;
            if n == 1 {
                let s = self.st.cell(i)[0];
                let (r, j) = (self.scratch.r[0], self.scratch.jac[0]);
                if r < 0.0 {
                    lo = lo.max(s);
                } else {
                    hi = hi.min(s);
                }
                let step = (r / j).clamp(-params.max_update, params.max_update);
                let mut next = s - step;
                if !(j > 0.0) || !(next > lo && next < hi) {
                    next = if lo.is_finite() && hi.is_finite() {
                        0.5 * (lo + hi)
                    } else {
                        s - params.max_update * r.signum()
                    };
                }
                self.st.cell_mut(i)[0] = next;
            } else {
                let jac = DMatrix::from_row_slice(n, n, &self.scratch.jac);
                let rhs = DVector::from_column_slice(&self.scratch.r);
                let dx = jac
                    .lu()
                    .solve(&rhs)
                    .ok_or_else(|| Error::Singular(format!("cell {i} Jacobian")))?;
                let dm = point_change(prob.disc, i, dx.as_slice());
                let scale = damping_factor(params.max_update, std::iter::once(dm));
                let first = i * self.st.ndof;
                bt.step(
                    norm,
                    scale,
                    dx.iter().enumerate().map(|(a, &d)| (first + a, d)),
                    &mut self.st.coeffs,
                );
            }
            it += 1;
        }
    }

    /// Simultaneous Newton over a set of cells; couplings to cells outside
    /// the set are frozen.
    fn solve_block(&mut self, cells: &[usize]) -> Result<()> {
        let prob = self.prob;
        let params = prob.params;
        let mut offset = HashMap::with_capacity(cells.len());
        let mut dim = 0;
        for &c in cells {
            offset.insert(c, dim);
            dim += prob.disc.dofs_for(self.st.degree[c]);
        }
        let mut bt = Backtrack::default();
        let mut it = 0;
        loop {
            let mut res = vec![0.0; dim];
            let mut jac = TripletMatrix::new(dim);
            let mut norm: f64 = 0.0;
            for &c in cells {
                prob.cell_residual(c, &self.st, JacMode::All, &mut self.scratch);
                norm = norm.max(prob.scaled_norm(c, &self.scratch));
                let (o, n) = (offset[&c], self.scratch.n);
                res[o..o + n].copy_from_slice(&self.scratch.r);
                for a in 0..n {
                    for b in 0..n {
                        jac.add(o + a, o + b, self.scratch.jac[a * n + b]);
                    }
                }
                for (nb, m, block) in &self.scratch.neighbors {
                    if let Some(&on) = offset.get(nb) {
                        for a in 0..n {
                            for b in 0..*m {
                                let v = block[a * m + b];
                                if v != 0.0 {
                                    jac.add(o + a, on + b, v);
                                }
                            }
                        }
                    }
                }
            }
            if norm > params.tolerance && bt.retreat(norm, &mut self.st.coeffs) {
                continue;
            }
            if norm <= params.tolerance {
                for &c in cells {
                    self.record(c, it);
                }
                return Ok(());
            }
            if it >= params.max_iterations {
                for &c in cells {
                    self.record(c, it);
                }
                return Err(Error::step_failure(
                    "transport",
                    format!(
                        "block of {} cells: residual {norm:e} after {it} Newton iterations",
                        cells.len()
                    ),
                ));
            }
            let dx = jac.solve(&res)?;
            let disc = prob.disc;
            let scale = damping_factor(
                params.max_update,
                cells.iter().map(|&c| {
                    let o = offset[&c];
                    let n = disc.dofs_for(self.st.degree[c]);
                    point_change(disc, c, &dx[o..o + n])
                }),
            );
            let nd = self.st.ndof;
            let update: Vec<(usize, f64)> = cells
                .iter()
                .flat_map(|&c| {
                    let o = offset[&c];
                    let dx = &dx;
                    (0..disc.dofs_for(self.st.degree[c])).map(move |a| (c * nd + a, dx[o + a]))
                })
                .collect();
            bt.step(norm, scale, update.into_iter(), &mut self.st.coeffs);
            it += 1;
        }
    }

    /// Nonlinear Gauss-Seidel over the cells of a cycle, falling back to a
    /// simultaneous Newton solve when the sweep budget is exhausted. Sweeps
    /// alternate direction so that information travels both ways through
    /// counter-current cycles.
    fn gauss_seidel(&mut self, cells: &[usize]) -> Result<()> {
        let max_sweeps = self.prob.params.max_sweeps;
        for sweep in 1..=max_sweeps {
            let forward = sweep % 2 == 1;
            for k in 0..cells.len() {
                let c = if forward {
                    cells[k]
                } else {
                    cells[cells.len() - 1 - k]
                };
                if let Err(e) = self.solve_cell(c) {
                    debug!("Gauss-Seidel sweep {sweep}: {e}; switching to simultaneous Newton");
                    return self.gs_fallback(cells, sweep);
                }
            }
            if cells.iter().all(|&c| self.converged(c)) {
                self.stats.sweeps.push(sweep);
                return Ok(());
            }
        }
        self.gs_fallback(cells, max_sweeps)
    }

    fn gs_fallback(&mut self, cells: &[usize], sweeps: usize) -> Result<()> {
        self.stats.sweeps.push(sweeps);
        self.stats.gs_fallbacks += 1;
        self.solve_block(cells)
    }

    fn solve_unit(
        &mut self,
        unit: &SolveUnit,
        ordering: &Ordering,
        graph: &FluxGraph,
        pred: &[Vec<usize>],
    ) -> Result<()> {
        let prob = self.prob;
        let single_cycle = unit.components.len() == 1 && unit.has_cycle;
        loop {
            if single_cycle {
                self.gauss_seidel(&unit.cells)?;
            } else if unit.cells.len() == 1 {
                self.solve_cell(unit.cells[0])?;
            } else if unit.cells.iter().all(|&c| self.converged(c)) {
                // already converged: nothing to do
            } else {
                self.solve_block(&unit.cells)?;
            }
            if !prob.params.order_reduction || prob.disc.degree == 0 {
                return Ok(());
            }
            let triggered: HashSet<usize> = unit
                .cells
                .iter()
                .copied()
                .filter(|&c| prob.needs_reduction(c, &self.st, graph))
                .collect();
            if triggered.is_empty() {
                return Ok(());
            }
            let comps = unit
                .components
                .clone()
                .map(|k| ordering.components[k].as_slice());
            let accepted = accept_minimal(comps, &triggered, pred);
            for &c in &accepted {
                self.st.collapse(prob.disc, c);
                self.stats.updated[c] = true;
            }
            self.stats.reduced_cells += accepted.len();
        }
    }
}

/// Solves one transport step unit by unit in the topological order of the
/// flux graph. The graph is built from the time-`n` state; when the final
/// residual check reveals mispredicted upstream directions, the edges of the
/// current state are added and the traversal is repeated.
pub fn transport_step(prob: &TransportProblem) -> Result<(TransportState, TransportStats)> {
    let n = prob.num_cells();
    let params = prob.params;
    let mut solver = Solver {
        prob,
        st: prob.initial_state(),
        stats: TransportStats::new(n),
        scratch: CellEval::default(),
    };
    let mut graph = prob.build_graph(prob.old_state());
    for pass in 1..=params.graph_passes.max(1) {
        let ordering = condense_and_sort(&graph);
        let pred = graph.reversed();
        let units = block_partition(&ordering, params.block_size);
        for unit in &units {
            solver.solve_unit(unit, &ordering, &graph, &pred)?;
        }
        solver.stats.graph_passes = pass;
        solver.stats.num_components = ordering.num_components();
        solver.stats.num_cycles = ordering.cycle_count();
        solver.stats.max_cycle_size = ordering.max_cycle_size();
        solver.stats.mean_cycle_size = ordering.mean_cycle_size();
        solver.stats.ordering = Some(ordering);
        let failed: Vec<usize> = (0..n).filter(|&i| !solver.converged(i)).collect();
        if failed.is_empty() {
            return Ok((solver.st, solver.stats));
        }
        debug!(
            "graph pass {pass}: {} cells unconverged; adding current upstream edges",
            failed.len()
        );
        graph.union_with(&prob.build_graph(&solver.st));
    }
    Err(Error::step_failure(
        "transport",
        format!(
            "residuals unconverged after {} graph passes",
            params.graph_passes
        ),
    ))
}
