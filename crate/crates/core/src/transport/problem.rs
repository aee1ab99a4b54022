//! One transport step: frozen pressure, total fluxes and well rates; the
//! unknowns are the water-saturation dofs of every cell.

use crate::dgbasis::interpolate_velocity;
use crate::fluxgraph::FluxGraph;
use crate::mesh::{Point, PolyMesh};
use crate::petro::{FluidModel, Phase, RockProperties};
use crate::pressure::PressureState;

use super::discretization::Discretization;
use super::{TransportParams, TransportState};

/// Mobilities at one saturation value and their saturation derivatives.
#[derive(Debug, Clone, Copy)]
struct Mob {
    w: f64,
    o: f64,
    dw: f64,
    d_o: f64,
}

/// Which cells a face value is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Upstream {
    /// Both phases from the owner.
    Owner,
    /// Both phases from the neighbor.
    Neighbor,
    /// Counter-current: water from one side, oil from the other.
    Both,
}

/// Water flux through a face (owner to neighbor) at one quadrature point.
#[derive(Debug, Clone, Copy)]
pub struct FacePointFlux {
    pub value: f64,
    pub d_owner: f64,
    pub d_neighbor: f64,
    pub upstream: Upstream,
}

/// Residual of one cell and optionally its Jacobian blocks.
#[derive(Debug, Clone, Default)]
pub struct CellEval {
    pub n: usize,
    pub r: Vec<f64>,
    /// `n x n`, row-major, derivative with respect to the cell's own dofs.
    pub jac: Vec<f64>,
    /// `(cell, n_cell_dofs, n x n_cell_dofs row-major)` for each neighbor.
    pub neighbors: Vec<(usize, usize, Vec<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacMode {
    None,
    Own,
    All,
}

/// Water flux for `G >= 0` from side `a` to side `b`, with derivatives with
/// respect to the saturations of `a` and `b` and to `G`.
fn oriented_flux(v: f64, g: f64, a: &Mob, b: &Mob) -> (f64, f64, f64, f64, Upstream) {
    let (lw, dlw) = (a.w, a.dw);
    if v > a.w * g {
        let (lo, dlo) = (a.o, a.d_o);
        let t = lw + lo;
        if t <= 0.0 {
            return (0.0, 0.0, 0.0, 0.0, Upstream::Owner);
        }
        let f = lw * (v + lo * g) / t;
        let da = (dlw * (v + lo * g) + lw * dlo * g - f * (dlw + dlo)) / t;
        (f, da, 0.0, lw * lo / t, Upstream::Owner)
    } else if v <= -b.o * g {
        let (lw, dlw, lo, dlo) = (b.w, b.dw, b.o, b.d_o);
        let t = lw + lo;
        if t <= 0.0 {
            return (0.0, 0.0, 0.0, 0.0, Upstream::Neighbor);
        }
        let f = lw * (v + lo * g) / t;
        let db = (dlw * (v + lo * g) + lw * dlo * g - f * (dlw + dlo)) / t;
        (f, 0.0, db, lw * lo / t, Upstream::Neighbor)
    } else {
        let (lo, dlo) = (b.o, b.d_o);
        let t = lw + lo;
        if t <= 0.0 {
            return (0.0, 0.0, 0.0, 0.0, Upstream::Both);
        }
        let f = lw * (v + lo * g) / t;
        let da = (dlw * (v + lo * g) - f * dlw) / t;
        let db = (lw * dlo * g - f * dlo) / t;
        (f, da, db, lw * lo / t, Upstream::Both)
    }
}

fn dot(a: &[f64], b: &[f64], n: usize) -> f64 {
    a[..n].iter().zip(&b[..n]).map(|(x, y)| x * y).sum()
}

pub struct TransportProblem<'a> {
    pub mesh: &'a PolyMesh,
    pub disc: &'a Discretization,
    pub fluid: &'a FluidModel,
    pub params: &'a TransportParams,
    pub dt: f64,
    /// Total flux per face, owner to neighbor.
    flux: Vec<f64>,
    /// Gravity part of the face term `G` per face.
    gravity: Vec<f64>,
    trans: Vec<f64>,
    /// `phi b_w |Omega|` at the new and the old pressure.
    pv: Vec<f64>,
    pv_old: Vec<f64>,
    bw: Vec<f64>,
    bw_face: Vec<f64>,
    mu: Vec<(f64, f64)>,
    velocity: Vec<Point>,
    /// `K e_h (rho_o - rho_w) g` per cell.
    gravity_velocity: Vec<Point>,
    /// Injected water rate per cell (reservoir volume, >= 0).
    injection: Vec<f64>,
    /// Produced total rate per cell (reservoir volume, <= 0).
    production: Vec<f64>,
    old: TransportState,
    flux_threshold: f64,
}

impl<'a> TransportProblem<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mesh: &'a PolyMesh,
        disc: &'a Discretization,
        rock: &RockProperties,
        fluid: &'a FluidModel,
        params: &'a TransportParams,
        trans: &[f64],
        pressure: &PressureState,
        p_prev: &[f64],
        state_n: &TransportState,
        dt: f64,
    ) -> Self {
        let n = mesh.num_cells();
        let p = &pressure.pressure;
        let bw: Vec<f64> = p
            .iter()
            .map(|&q| fluid.shrinkage(Phase::Water, q).0)
            .collect();
        let pv = (0..n)
            .map(|i| rock.porosity_at(i, p[i]).0 * bw[i] * mesh.cells[i].volume)
            .collect();
        let pv_old = (0..n)
            .map(|i| {
                rock.porosity_at(i, p_prev[i]).0
                    * fluid.shrinkage(Phase::Water, p_prev[i]).0
                    * mesh.cells[i].volume
            })
            .collect();
        let bw_face = mesh
            .faces
            .iter()
            .map(|f| f.neighbor.map_or(0.0, |j| 0.5 * (bw[f.owner] + bw[j])))
            .collect();
        let mu = p
            .iter()
            .map(|&q| {
                (
                    fluid.viscosity(Phase::Water, q).0,
                    fluid.viscosity(Phase::Oil, q).0,
                )
            })
            .collect();
        let velocity = (0..n)
            .map(|i| interpolate_velocity(mesh, i, &pressure.flux))
            .collect();
        let up = mesh.dim() - 1;
        let gravity_velocity = (0..n)
            .map(|i| {
                let drho = fluid.density(Phase::Oil, p_prev[i]).0
                    - fluid.density(Phase::Water, p_prev[i]).0;
                let mut v = Point::zeros();
                v[up] = rock.permeability[i][up] * drho * fluid.gravity;
                v
            })
            .collect();
        let mut injection = vec![0.0; n];
        let mut production = vec![0.0; n];
        for w in &pressure.wells {
            for c in &w.completions {
                if c.total > 0.0 {
                    injection[c.cell] += c.water;
                } else {
                    production[c.cell] += c.total;
                }
            }
        }
        let scale = pressure
            .flux
            .iter()
            .chain(&pressure.gravity_flux)
            .fold(0.0f64, |m, v| m.max(v.abs()));
        TransportProblem {
            mesh,
            disc,
            fluid,
            params,
            dt,
            flux: pressure.flux.clone(),
            gravity: pressure.gravity_flux.clone(),
            trans: trans.to_vec(),
            pv,
            pv_old,
            bw,
            bw_face,
            mu,
            velocity,
            gravity_velocity,
            injection,
            production,
            old: state_n.clone(),
            flux_threshold: 1e-12 * scale,
        }
    }

    pub fn num_cells(&self) -> usize {
        self.mesh.num_cells()
    }

    pub fn old_state(&self) -> &TransportState {
        &self.old
    }

    /// Starting state of the step: time-`n` dofs, every cell at full degree.
    pub fn initial_state(&self) -> TransportState {
        let mut s = self.old.clone();
        s.degree.fill(self.disc.degree);
        s
    }

    /// `phi b_w |Omega|` at the end-of-step pressure.
    pub fn pore_mass_factor(&self, cell: usize) -> f64 {
        self.pv[cell]
    }

    fn mob(&self, cell: usize, s: f64) -> Mob {
        let kr = self.fluid.relperm_unchecked(s);
        let (mw, mo) = self.mu[cell];
        Mob {
            w: kr.krw / mw,
            o: kr.kro / mo,
            dw: kr.dkrw / mw,
            d_o: kr.dkro / mo,
        }
    }

    /// Fractional flow, `f_w lambda_o` and their saturation derivatives.
    fn frac(&self, cell: usize, s: f64) -> (f64, f64, f64, f64) {
        let m = self.mob(cell, s);
        let t = m.w + m.o;
        if t <= 0.0 {
            return (0.0, 0.0, 0.0, 0.0);
        }
        let dt = m.dw + m.d_o;
        let fw = m.w / t;
        let dfw = (m.dw * t - m.w * dt) / (t * t);
        let g = m.w * m.o / t;
        let dg = ((m.dw * m.o + m.w * m.d_o) * t - m.w * m.o * dt) / (t * t);
        (fw, dfw, g, dg)
    }

    /// Water flux through interior face `f` for owner/neighbor traces.
    pub fn face_flux(&self, f: usize, s_owner: f64, s_neighbor: f64) -> FacePointFlux {
        let fd = self.disc.faces[f].as_ref().expect("interior face");
        let (i, j) = (fd.owner, fd.neighbor);
        let v = self.flux[f];
        let (mut g, mut dg_i, mut dg_j) = (self.gravity[f], 0.0, 0.0);
        if self.fluid.capillary.is_some() {
            let (pi, dpi) = self.fluid.capillary_pressure(s_owner);
            let (pj, dpj) = self.fluid.capillary_pressure(s_neighbor);
            let t = self.trans[f];
            g -= t * (pi - pj);
            dg_i = -t * dpi;
            dg_j = t * dpj;
        }
        let (mi, mj) = (self.mob(i, s_owner), self.mob(j, s_neighbor));
        if g >= 0.0 {
            let (val, da, db, dgv, up) = oriented_flux(v, g, &mi, &mj);
            FacePointFlux {
                value: val,
                d_owner: da + dgv * dg_i,
                d_neighbor: db + dgv * dg_j,
                upstream: up,
            }
        } else {
            let (val, da, db, dgv, up) = oriented_flux(-v, -g, &mj, &mi);
            FacePointFlux {
                value: -val,
                d_owner: -db + dgv * dg_i,
                d_neighbor: -da + dgv * dg_j,
                upstream: match up {
                    Upstream::Owner => Upstream::Neighbor,
                    Upstream::Neighbor => Upstream::Owner,
                    Upstream::Both => Upstream::Both,
                },
            }
        }
    }

    /// Total flux and face gravity/capillary term magnitude are both below
    /// the zero-flux threshold.
    fn is_null_face(&self, f: usize, s_owner: f64, s_neighbor: f64) -> bool {
        let mut g = self.gravity[f];
        if self.fluid.capillary.is_some() {
            g -= self.trans[f]
                * (self.fluid.capillary_pressure(s_owner).0
                    - self.fluid.capillary_pressure(s_neighbor).0);
        }
        self.flux[f].abs() <= self.flux_threshold && g.abs() <= self.flux_threshold
    }

    fn dofs(&self, st: &TransportState, cell: usize) -> usize {
        self.disc.dofs_for(st.degree[cell])
    }

    /// Face traces `(owner, neighbor)` at every quadrature point of face `f`.
    fn traces(&self, f: usize, st: &TransportState) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let fd = self.disc.faces[f].as_ref().expect("interior face");
        let (no, nn) = (self.dofs(st, fd.owner), self.dofs(st, fd.neighbor));
        let co = st.cell(fd.owner).to_vec();
        let cn = st.cell(fd.neighbor).to_vec();
        fd.points.iter().map(move |q| {
            (
                q.weight,
                dot(&q.psi_owner, &co, no),
                dot(&q.psi_neighbor, &cn, nn),
            )
        })
    }

    /// Flux graph for the given state: per face and quadrature point, an
    /// edge from every cell that supplies an upstream value.
    pub fn build_graph(&self, st: &TransportState) -> FluxGraph {
        let mut g = FluxGraph::new(self.num_cells());
        for (f, fd) in self.disc.faces.iter().enumerate() {
            let Some(fd) = fd else { continue };
            for (_, so, sn) in self.traces(f, st) {
                if self.is_null_face(f, so, sn) {
                    continue;
                }
                match self.face_flux(f, so, sn).upstream {
                    Upstream::Owner => g.add_edge(fd.owner, fd.neighbor),
                    Upstream::Neighbor => g.add_edge(fd.neighbor, fd.owner),
                    Upstream::Both => {
                        g.add_edge(fd.owner, fd.neighbor);
                        g.add_edge(fd.neighbor, fd.owner);
                    }
                }
            }
        }
        g
    }

    /// Residual of the water equation of cell `i` tested against its active
    /// basis functions.
    pub fn cell_residual(&self, i: usize, st: &TransportState, mode: JacMode, out: &mut CellEval) {
        let cd = &self.disc.cells[i];
        let nd = self.disc.ndof;
        let n = self.dofs(st, i);
        let c = st.cell(i);
        let c_old = self.old.cell(i);
        let dt = self.dt;
        out.n = n;
        out.r.clear();
        out.r.resize(n, 0.0);
        let want = mode != JacMode::None;
        out.jac.clear();
        if want {
            out.jac.resize(n * n, 0.0);
        }
        out.neighbors.clear();

        // accumulation
        for j in 0..n {
            let row = &cd.mass[j * nd..(j + 1) * nd];
            out.r[j] += self.pv[i] * dot(row, c, n) - self.pv_old[i] * dot(row, c_old, nd);
            if want {
                for l in 0..n {
                    out.jac[j * n + l] += self.pv[i] * row[l];
                }
            }
        }

        // volume flux and well terms
        let has_source = self.injection[i] != 0.0 || self.production[i] != 0.0;
        if n > 1 || has_source {
            let vol_coef = dt * self.bw[i] * cd.volume;
            let u = self.velocity[i];
            let ug = self.gravity_velocity[i];
            for q in &cd.points {
                let s = dot(&q.psi, c, n);
                let (fw, dfw, fl, dfl) = self.frac(i, s);
                if n > 1 {
                    let uw = u * fw + ug * fl;
                    let duw = u * dfw + ug * dfl;
                    for j in 1..n {
                        let gj = q.grad[j];
                        out.r[j] -= vol_coef * q.weight * uw.dot(&gj);
                        if want {
                            let d = vol_coef * q.weight * duw.dot(&gj);
                            for l in 0..n {
                                out.jac[j * n + l] -= d * q.psi[l];
                            }
                        }
                    }
                }
                if has_source {
                    let src = self.injection[i] + self.production[i] * fw;
                    let coef = dt * self.bw[i] * q.weight;
                    for j in 0..n {
                        out.r[j] -= coef * src * q.psi[j];
                        if want {
                            let d = coef * self.production[i] * dfw * q.psi[j];
                            for l in 0..n {
                                out.jac[j * n + l] -= d * q.psi[l];
                            }
                        }
                    }
                }
            }
        }

        // face fluxes
        for &f in &self.mesh.cells[i].faces {
            let Some(fd) = &self.disc.faces[f] else {
                continue;
            };
            let owned = fd.owner == i;
            let other = if owned { fd.neighbor } else { fd.owner };
            let m = self.dofs(st, other);
            let co = st.cell(fd.owner);
            let cn = st.cell(fd.neighbor);
            let (no, nn) = if owned { (n, m) } else { (m, n) };
            let sign = if owned { 1.0 } else { -1.0 };
            let coef = sign * dt * self.bw_face[f];
            let mut nb = if mode == JacMode::All {
                vec![0.0; n * m]
            } else {
                Vec::new()
            };
            for q in &fd.points {
                let so = dot(&q.psi_owner, co, no);
                let sn = dot(&q.psi_neighbor, cn, nn);
                let ff = self.face_flux(f, so, sn);
                let (psi_i, psi_o, d_self, d_other) = if owned {
                    (&q.psi_owner, &q.psi_neighbor, ff.d_owner, ff.d_neighbor)
                } else {
                    (&q.psi_neighbor, &q.psi_owner, ff.d_neighbor, ff.d_owner)
                };
                let w = coef * q.weight;
                for j in 0..n {
                    out.r[j] += w * ff.value * psi_i[j];
                    if want {
                        for l in 0..n {
                            out.jac[j * n + l] += w * d_self * psi_i[j] * psi_i[l];
                        }
                    }
                    if mode == JacMode::All {
                        for l in 0..m {
                            nb[j * m + l] += w * d_other * psi_i[j] * psi_o[l];
                        }
                    }
                }
            }
            if mode == JacMode::All {
                out.neighbors.push((other, m, nb));
            }
        }
    }

    /// Max-norm of the residual of cell `i` scaled by its pore mass.
    pub fn scaled_norm(&self, i: usize, eval: &CellEval) -> f64 {
        eval.r.iter().fold(0.0f64, |m, r| m.max(r.abs())) / self.pv[i]
    }

    pub fn cell_converged(&self, i: usize, st: &TransportState, scratch: &mut CellEval) -> bool {
        self.cell_residual(i, st, JacMode::None, scratch);
        self.scaled_norm(i, scratch) <= self.params.tolerance
    }

    /// Order-reduction test for a cell at full degree: a vertex value more
    /// than `eps` outside the mobile range `[s_wr, 1 - s_or]`, where the flux
    /// function turns flat, or a face-mean trace jump above the tolerance
    /// against an upstream neighbor (one with an edge into the cell). The
    /// range is widened to include the cell mean, which compression alone
    /// can move slightly past the residual saturations.
    pub fn needs_reduction(&self, i: usize, st: &TransportState, graph: &FluxGraph) -> bool {
        if st.degree[i] == 0 {
            return false;
        }
        let n = self.dofs(st, i);
        let c = st.cell(i);
        let eps = self.params.epsilon;
        let mean = st.mean(self.disc, i);
        let lo = self.fluid.water.residual_saturation.min(mean) - eps;
        let hi = (1.0 - self.fluid.oil.residual_saturation).max(mean) + eps;
        for psi in &self.disc.cells[i].vertex_psi {
            let s = dot(psi, c, n);
            if !(s >= lo && s <= hi) {
                return true;
            }
        }
        for &f in &self.mesh.cells[i].faces {
            let Some(fd) = &self.disc.faces[f] else {
                continue;
            };
            let other = if fd.owner == i { fd.neighbor } else { fd.owner };
            if !graph.has_edge(other, i) {
                continue;
            }
            let (mut ti, mut to) = (0.0, 0.0);
            for (w, so, sn) in self.traces(f, st) {
                let (a, b) = if fd.owner == i { (so, sn) } else { (sn, so) };
                ti += w * a;
                to += w * b;
            }
            if (ti - to).abs() > self.params.jump_tolerance {
                return true;
            }
        }
        false
    }

    /// Cell-averaged water fractional flow, as seen by producing wells.
    pub fn produced_water_fraction(&self, st: &TransportState, i: usize) -> f64 {
        let n = self.dofs(st, i);
        let c = st.cell(i);
        self.disc.cells[i]
            .points
            .iter()
            .map(|q| q.weight * self.frac(i, dot(&q.psi, c, n)).0)
            .sum()
    }

    /// Reservoir-volume water rate of the wells in each cell (positive for
    /// injection) for the given state.
    pub fn well_water_rates(&self, st: &TransportState) -> Vec<f64> {
        (0..self.num_cells())
            .map(|i| {
                if self.production[i] == 0.0 {
                    self.injection[i]
                } else {
                    self.injection[i] + self.production[i] * self.produced_water_fraction(st, i)
                }
            })
            .collect()
    }

    /// Surface water rate of the wells in each cell.
    pub fn well_water_surface_rates(&self, st: &TransportState) -> Vec<f64> {
        self.well_water_rates(st)
            .iter()
            .zip(&self.bw)
            .map(|(q, b)| q * b)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mob(w: f64, o: f64) -> Mob {
        Mob {
            w,
            o,
            dw: 0.0,
            d_o: 0.0,
        }
    }

    #[test]
    fn viscous_upwind() {
        let (a, b) = (mob(1.0, 1.0), mob(3.0, 1.0));
        let (f, ..) = oriented_flux(2.0, 0.0, &a, &b);
        assert_eq!(f, 1.0);
        let (f, _, _, _, up) = oriented_flux(-2.0, 0.0, &a, &b);
        assert_eq!(up, Upstream::Neighbor);
        assert_eq!(f, -1.5);
        let (_, _, _, _, up) = oriented_flux(0.0, 0.0, &a, &b);
        assert_eq!(up, Upstream::Neighbor);
    }

    #[test]
    fn counter_current_case() {
        // zero total flux with gravity pulling water from a to b
        let (a, b) = (mob(2.0, 1.0), mob(1.0, 3.0));
        let (f, _, _, _, up) = oriented_flux(0.0, 1.0, &a, &b);
        assert_eq!(up, Upstream::Both);
        // water from a, oil from b
        assert!((f - 2.0 * 3.0 / 5.0).abs() < 1e-15);
    }
}
