//! Reference solver: Newton's method on the coupled system of all cells.

use std::collections::HashSet;

use log::debug;

use crate::error::{Error, Result};
use crate::fluxgraph::condense_and_sort;
use crate::linalg::TripletMatrix;

use super::problem::{CellEval, JacMode, TransportProblem};
use super::reordered::accept_minimal;
use super::{damping_factor, point_change, TransportState};

#[derive(Debug, Clone, Default)]
pub struct GlobalStats {
    /// Newton iterations summed over all reduction rounds.
    pub iterations: usize,
    pub rounds: usize,
    pub reduced_cells: usize,
}

fn offsets(prob: &TransportProblem, st: &TransportState) -> (Vec<usize>, usize) {
    let mut off = Vec::with_capacity(st.num_cells() + 1);
    let mut dim = 0;
    for &k in &st.degree {
        off.push(dim);
        dim += prob.disc.dofs_for(k);
    }
    (off, dim)
}

fn newton(prob: &TransportProblem, st: &mut TransportState) -> Result<usize> {
    let params = prob.params;
    let disc = prob.disc;
    let n = prob.num_cells();
    let (off, dim) = offsets(prob, st);
    let mut ev = CellEval::default();
    let mut it = 0;
    loop {
        let mut res = vec![0.0; dim];
        let mut jac = TripletMatrix::with_capacity(dim, 5 * dim);
        let mut norm: f64 = 0.0;
        for i in 0..n {
            prob.cell_residual(i, st, JacMode::All, &mut ev);
            norm = norm.max(prob.scaled_norm(i, &ev));
            let (o, m) = (off[i], ev.n);
            res[o..o + m].copy_from_slice(&ev.r);
            for a in 0..m {
                for b in 0..m {
                    jac.add(o + a, o + b, ev.jac[a * m + b]);
                }
            }
            for (nb, mj, block) in &ev.neighbors {
                for a in 0..m {
                    for b in 0..*mj {
                        let v = block[a * mj + b];
                        if v != 0.0 {
                            jac.add(o + a, off[*nb] + b, v);
                        }
                    }
                }
            }
        }
        debug!("global transport iteration {it}: scaled residual {norm:e}");
        if norm <= params.tolerance {
            return Ok(it);
        }
        if it >= params.global_max_iterations {
            return Err(Error::step_failure(
                "global transport",
                format!("residual {norm:e} after {it} Newton iterations"),
            ));
        }
        let dx = jac.solve(&res)?;
        let scale = damping_factor(
            params.max_update,
            (0..n).map(|i| {
                let m = disc.dofs_for(st.degree[i]);
                point_change(disc, i, &dx[off[i]..off[i] + m])
            }),
        );
        for i in 0..n {
            let m = disc.dofs_for(st.degree[i]);
            let o = off[i];
            let c = st.cell_mut(i);
            for a in 0..m {
                c[a] -= scale * dx[o + a];
            }
        }
        it += 1;
    }
}

/// Solves the transport step for all cells simultaneously. Order reduction
/// proceeds in rounds: after each converged solve, triggered cells without a
/// triggered cell upstream are reduced and the system is solved again.
pub fn solve_global_newton(prob: &TransportProblem) -> Result<(TransportState, GlobalStats)> {
    let mut st = prob.initial_state();
    let mut stats = GlobalStats::default();
    loop {
        stats.iterations += newton(prob, &mut st)?;
        stats.rounds += 1;
        if !prob.params.order_reduction || prob.disc.degree == 0 {
            break;
        }
        let graph = prob.build_graph(&st);
        let triggered: HashSet<usize> = (0..prob.num_cells())
            .filter(|&i| prob.needs_reduction(i, &st, &graph))
            .collect();
        if triggered.is_empty() {
            break;
        }
        let ordering = condense_and_sort(&graph);
        let pred = graph.reversed();
        let accepted = accept_minimal(
            ordering.components.iter().map(Vec::as_slice),
            &triggered,
            &pred,
        );
        for &c in &accepted {
            st.collapse(prob.disc, c);
        }
        stats.reduced_cells += accepted.len();
    }
    Ok((st, stats))
}

/// Cell pairs `(row, column)` with a nonzero block in the Jacobian of the
/// coupled transport system at the given state.
pub fn jacobian_couplings(prob: &TransportProblem, st: &TransportState) -> Vec<(usize, usize)> {
    let mut ev = CellEval::default();
    let mut out = Vec::new();
    for i in 0..prob.num_cells() {
        prob.cell_residual(i, st, JacMode::All, &mut ev);
        if ev.jac.iter().any(|&v| v != 0.0) {
            out.push((i, i));
        }
        for (nb, _, block) in &ev.neighbors {
            if block.iter().any(|&v| v != 0.0) {
                out.push((i, *nb));
            }
        }
    }
    out
}
