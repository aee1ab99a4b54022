//! Pressure step of the sequential splitting.
//!
//! The water and oil conservation residuals (surface volumes) are weighted by
//! `1 / b_alpha` and summed, which removes the time-`n+1` saturations from the
//! accumulation term. The resulting equation is solved for the oil pressure
//! with saturations frozen at time `n`. Phase fluxes use two-point flux
//! approximation with single-point upstream mobility per phase potential.

use log::debug;

use crate::error::{Error, Result};
use crate::linalg::TripletMatrix;
use crate::mesh::PolyMesh;
use crate::petro::{FluidModel, Phase, RockProperties};

const PHASES: [Phase; 2] = [Phase::Water, Phase::Oil];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WellControl {
    /// Bottom-hole pressure, Pa.
    Bhp(f64),
    /// Total reservoir-volume rate, m^3/s, positive for injection.
    Rate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Completion {
    pub cell: usize,
    /// Well index, m^3.
    pub wi: f64,
}

#[derive(Debug, Clone)]
pub struct WellSpec {
    pub name: String,
    pub completions: Vec<Completion>,
    pub control: WellControl,
    /// Water fraction of the injected stream.
    pub injected_water_fraction: f64,
}

impl WellSpec {
    pub fn validate(&self, n_cells: usize) -> Result<()> {
        let key = || format!("well.{}", self.name);
        if self.completions.is_empty() {
            return Err(Error::config(key(), "well needs at least one completion"));
        }
        for c in &self.completions {
            if c.cell >= n_cells {
                return Err(Error::config(
                    key(),
                    format!("completion cell {} out of range", c.cell),
                ));
            }
            if !(c.wi > 0.0) {
                return Err(Error::config(key(), "well index must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.injected_water_fraction) {
            return Err(Error::config(
                key(),
                "injected water fraction must lie in [0, 1]",
            ));
        }
        Ok(())
    }
}

/// Peaceman well index for a vertical well through an (approximately)
/// hexahedral cell, using the cell bounding box as `dx, dy, dz`. 2D cells
/// have unit thickness.
pub fn peaceman_wi(
    mesh: &PolyMesh,
    rock: &RockProperties,
    cell: usize,
    radius: f64,
    skin: f64,
) -> f64 {
    let ext = mesh.cell_bounding_box(cell).extent;
    let k = rock.permeability[cell];
    let (dx, dy) = (ext.x, ext.y);
    let h = if mesh.dim() == 3 { ext.z } else { 1.0 };
    let (kx, ky) = (k.x, k.y);
    let re = 0.28 * ((ky / kx).sqrt() * dx * dx + (kx / ky).sqrt() * dy * dy).sqrt()
        / ((ky / kx).powf(0.25) + (kx / ky).powf(0.25));
    2.0 * std::f64::consts::PI * (kx * ky).sqrt() * h / ((re / radius).ln() + skin)
}

/// Two-point transmissibilities per face (zero on the boundary).
pub fn transmissibilities(mesh: &PolyMesh, rock: &RockProperties) -> Vec<f64> {
    let half = |cell: usize, f: usize| {
        let face = &mesh.faces[f];
        let d = face.centroid - mesh.cells[cell].centroid;
        let kd = rock.permeability[cell].component_mul(&d);
        (face.area * kd.dot(&face.normal) / d.norm_squared()).abs()
    };
    mesh.faces
        .iter()
        .enumerate()
        .map(|(f, face)| match face.neighbor {
            Some(n) => {
                let (ti, tj) = (half(face.owner, f), half(n, f));
                ti * tj / (ti + tj)
            }
            None => 0.0,
        })
        .collect()
}

/// Elevation difference owner minus neighbor per face (zero on the boundary).
pub fn face_elevation_drops(mesh: &PolyMesh) -> Vec<f64> {
    mesh.faces
        .iter()
        .map(|f| match f.neighbor {
            Some(n) => {
                mesh.elevation(&mesh.cells[f.owner].centroid)
                    - mesh.elevation(&mesh.cells[n].centroid)
            }
            None => 0.0,
        })
        .collect()
}

/// Pressure weights `(1/b_w, 1/b_o)` at pressure `p`.
pub fn weighting_factors(fluid: &FluidModel, p: f64) -> Result<(f64, f64)> {
    let (bw, _) = fluid.shrinkage(Phase::Water, p);
    let (bo, _) = fluid.shrinkage(Phase::Oil, p);
    if !(bw > 0.0 && bo > 0.0) {
        return Err(Error::Domain(format!(
            "non-positive shrinkage factor (b_w = {bw}, b_o = {bo}) at p = {p} Pa"
        )));
    }
    Ok((1.0 / bw, 1.0 / bo))
}

#[derive(Debug, Clone, Copy)]
pub struct PressureConfig {
    /// Bound on the max-norm of the pore-volume scaled residual.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PressureConfig {
    fn default() -> Self {
        PressureConfig {
            tolerance: 1e-8,
            max_iterations: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletionRate {
    pub cell: usize,
    /// Reservoir-volume rates, m^3/s, positive for injection.
    pub total: f64,
    pub water: f64,
    pub oil: f64,
}

#[derive(Debug, Clone)]
pub struct WellSolution {
    pub name: String,
    pub bhp: f64,
    pub completions: Vec<CompletionRate>,
}

impl WellSolution {
    pub fn total_rate(&self) -> f64 {
        self.completions.iter().map(|c| c.total).sum()
    }
}

#[derive(Debug, Clone)]
pub struct PressureState {
    /// Oil pressure per cell, Pa.
    pub pressure: Vec<f64>,
    /// Total reservoir-volume flux per face, owner to neighbor, m^3/s.
    pub flux: Vec<f64>,
    pub water_flux: Vec<f64>,
    pub oil_flux: Vec<f64>,
    /// `T (rho_w - rho_o) g (h_owner - h_neighbor)` per face, with densities
    /// at the start-of-step pressure.
    pub gravity_flux: Vec<f64>,
    pub wells: Vec<WellSolution>,
    pub iterations: usize,
    pub residual: f64,
}

impl PressureState {
    /// Total well rate into each cell, m^3/s (reservoir volume).
    pub fn cell_sources(&self, n_cells: usize) -> Vec<f64> {
        let mut q = vec![0.0; n_cells];
        for w in &self.wells {
            for c in &w.completions {
                q[c.cell] += c.total;
            }
        }
        q
    }
}

/// Static data for repeated pressure solves.
pub struct PressureModel<'a> {
    pub mesh: &'a PolyMesh,
    pub rock: &'a RockProperties,
    pub fluid: &'a FluidModel,
    pub wells: &'a [WellSpec],
    pub trans: Vec<f64>,
    pub dz: Vec<f64>,
    pub config: PressureConfig,
}

struct Assembly {
    residual: Vec<f64>,
    jac: TripletMatrix,
}

impl<'a> PressureModel<'a> {
    pub fn new(
        mesh: &'a PolyMesh,
        rock: &'a RockProperties,
        fluid: &'a FluidModel,
        wells: &'a [WellSpec],
        config: PressureConfig,
    ) -> Result<Self> {
        rock.validate(mesh.num_cells())?;
        fluid.validate()?;
        for w in wells {
            w.validate(mesh.num_cells())?;
        }
        Ok(PressureModel {
            mesh,
            rock,
            fluid,
            wells,
            trans: transmissibilities(mesh, rock),
            dz: face_elevation_drops(mesh),
            config,
        })
    }

    fn rate_wells(&self) -> Vec<usize> {
        (0..self.wells.len())
            .filter(|&w| matches!(self.wells[w].control, WellControl::Rate(_)))
            .collect()
    }

    /// Solves the pressure equation for one step with frozen cell-mean water
    /// saturations `sw`, starting from the previous pressure `p_prev`.
    pub fn solve(&self, p_prev: &[f64], sw: &[f64], dt: f64) -> Result<PressureState> {
        let n = self.mesh.num_cells();
        assert_eq!(p_prev.len(), n);
        assert_eq!(sw.len(), n);
        if !(dt > 0.0) {
            return Err(Error::config("schedule.dt", "time step must be positive"));
        }
        let has_datum = self
            .wells
            .iter()
            .any(|w| matches!(w.control, WellControl::Bhp(_)));
        if !has_datum && self.fluid.is_incompressible() && self.rock.compressibility == 0.0 {
            return Err(Error::config(
                "wells",
                "incompressible system without a bottom-hole-pressure well has no pressure datum",
            ));
        }
        let rate_wells = self.rate_wells();
        let mut x: Vec<f64> = p_prev.to_vec();
        for &w in &rate_wells {
            x.push(p_prev[self.wells[w].completions[0].cell]);
        }

        let mut iterations = 0;
        loop {
            let asm = self.assemble(&x, p_prev, sw, dt, &rate_wells)?;
            let norm = self.scaled_norm(&asm.residual, &x, dt, &rate_wells);
            debug!("pressure iteration {iterations}: scaled residual {norm:e}");
            if norm <= self.config.tolerance {
                return Ok(self.finish(&x, p_prev, sw, &rate_wells, iterations, norm));
            }
            if iterations >= self.config.max_iterations {
                return Err(Error::step_failure(
                    "pressure",
                    format!("residual {norm:e} after {iterations} Newton iterations"),
                ));
            }
            let dx = asm.jac.solve(&asm.residual)?;
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi -= d;
            }
            iterations += 1;
        }
    }

    fn scaled_norm(&self, res: &[f64], x: &[f64], dt: f64, rate_wells: &[usize]) -> f64 {
        let n = self.mesh.num_cells();
        let mut norm: f64 = 0.0;
        for i in 0..n {
            let (phi, _) = self.rock.porosity_at(i, x[i]);
            norm = norm.max((res[i] * dt / (phi * self.mesh.cells[i].volume)).abs());
        }
        for (k, &w) in rate_wells.iter().enumerate() {
            let WellControl::Rate(q) = self.wells[w].control else {
                unreachable!()
            };
            let scale = q.abs().max(1e-30);
            norm = norm.max((res[n + k] / scale).abs());
        }
        norm
    }

    fn well_bhp(&self, w: usize, x: &[f64], rate_wells: &[usize]) -> (f64, Option<usize>) {
        match self.wells[w].control {
            WellControl::Bhp(p) => (p, None),
            WellControl::Rate(_) => {
                let k = rate_wells.iter().position(|&r| r == w).unwrap();
                let idx = self.mesh.num_cells() + k;
                (x[idx], Some(idx))
            }
        }
    }

    /// Reservoir-volume phase rates of a completion and their derivatives
    /// with respect to cell pressure and bottom-hole pressure.
    fn completion_rates(
        &self,
        well: &WellSpec,
        c: &Completion,
        p: f64,
        sw: f64,
        bhp: f64,
    ) -> [(f64, f64, f64); 2] {
        let m = self.fluid.mobility_unchecked(sw, p);
        let dp = bhp - p;
        if dp > 0.0 {
            let lt = m.total();
            let dlt = m.dwater_dp + m.doil_dp;
            let fr = [
                well.injected_water_fraction,
                1.0 - well.injected_water_fraction,
            ];
            fr.map(|f| {
                (
                    c.wi * lt * dp * f,
                    c.wi * (dlt * dp - lt) * f,
                    c.wi * lt * f,
                )
            })
        } else {
            [(m.water, m.dwater_dp), (m.oil, m.doil_dp)]
                .map(|(l, dl)| (c.wi * l * dp, c.wi * (dl * dp - l), c.wi * l))
        }
    }

    fn assemble(
        &self,
        x: &[f64],
        p_prev: &[f64],
        sw: &[f64],
        dt: f64,
        rate_wells: &[usize],
    ) -> Result<Assembly> {
        let mesh = self.mesh;
        let fluid = self.fluid;
        let n = mesh.num_cells();
        let dim = n + rate_wells.len();
        let p = &x[..n];
        let g = fluid.gravity;

        let mut weights = Vec::with_capacity(n);
        for &pi in p {
            let (ww, wo) = weighting_factors(fluid, pi)?;
            let (_, dbw) = fluid.shrinkage(Phase::Water, pi);
            let (_, dbo) = fluid.shrinkage(Phase::Oil, pi);
            // d(1/b)/dp = -b'/b^2
            weights.push([(ww, -dbw * ww * ww), (wo, -dbo * wo * wo)]);
        }

        let mut phase_res = vec![[0.0f64; 2]; n];
        let mut jac = TripletMatrix::with_capacity(dim, 4 * n + 8 * mesh.num_faces());

        for i in 0..n {
            let vol = mesh.cells[i].volume;
            let (phi, dphi) = self.rock.porosity_at(i, p[i]);
            let (phi0, _) = self.rock.porosity_at(i, p_prev[i]);
            let sat = [sw[i], 1.0 - sw[i]];
            let mut diag = 0.0;
            for (a, &ph) in PHASES.iter().enumerate() {
                let (b, db) = fluid.shrinkage(ph, p[i]);
                let (b0, _) = fluid.shrinkage(ph, p_prev[i]);
                phase_res[i][a] += vol / dt * sat[a] * (phi * b - phi0 * b0);
                diag += weights[i][a].0 * vol / dt * sat[a] * (dphi * b + phi * db);
            }
            jac.add(i, i, diag);
        }

        for (f, face) in mesh.faces.iter().enumerate() {
            let Some(j) = face.neighbor else { continue };
            let i = face.owner;
            let t = self.trans[f];
            if t == 0.0 {
                continue;
            }
            for (a, &ph) in PHASES.iter().enumerate() {
                let (pc_i, pc_j) = if ph == Phase::Water {
                    (
                        fluid.capillary_pressure(sw[i]).0,
                        fluid.capillary_pressure(sw[j]).0,
                    )
                } else {
                    (0.0, 0.0)
                };
                let (rho_i, drho_i) = fluid.density(ph, p[i]);
                let (rho_j, drho_j) = fluid.density(ph, p[j]);
                let rho = 0.5 * (rho_i + rho_j);
                let gdz = g * self.dz[f];
                let dpot = (p[i] - pc_i) - (p[j] - pc_j) + rho * gdz;
                let ddpot_i = 1.0 + 0.5 * drho_i * gdz;
                let ddpot_j = -1.0 + 0.5 * drho_j * gdz;
                let up = if dpot > 0.0 { i } else { j };
                let m = fluid.mobility_unchecked(sw[up], p[up]);
                let (lam, dlam) = match ph {
                    Phase::Water => (m.water, m.dwater_dp),
                    Phase::Oil => (m.oil, m.doil_dp),
                };
                let (b, db) = fluid.shrinkage(ph, p[up]);
                let coef = b * lam * t;
                let dcoef = (db * lam + b * dlam) * t;
                let flux = coef * dpot;
                let mut d_i = coef * ddpot_i;
                let mut d_j = coef * ddpot_j;
                if up == i {
                    d_i += dcoef * dpot;
                } else {
                    d_j += dcoef * dpot;
                }
                phase_res[i][a] += flux;
                phase_res[j][a] -= flux;
                let (wi, wj) = (weights[i][a].0, weights[j][a].0);
                jac.add(i, i, wi * d_i);
                jac.add(i, j, wi * d_j);
                jac.add(j, i, -wj * d_i);
                jac.add(j, j, -wj * d_j);
            }
        }

        let mut well_res = vec![0.0; rate_wells.len()];
        for (w, well) in self.wells.iter().enumerate() {
            let (bhp, bhp_idx) = self.well_bhp(w, x, rate_wells);
            for c in &well.completions {
                let i = c.cell;
                let rates = self.completion_rates(well, c, p[i], sw[i], bhp);
                for (a, &ph) in PHASES.iter().enumerate() {
                    let (q, dq_dp, dq_dbhp) = rates[a];
                    let (b, db) = fluid.shrinkage(ph, p[i]);
                    phase_res[i][a] -= b * q;
                    let wa = weights[i][a].0;
                    jac.add(i, i, -wa * (db * q + b * dq_dp));
                    if let Some(k) = bhp_idx {
                        jac.add(i, k, -wa * b * dq_dbhp);
                        jac.add(k, i, dq_dp);
                        jac.add(k, k, dq_dbhp);
                    }
                }
                if let Some(k) = bhp_idx {
                    well_res[k - n] += rates[0].0 + rates[1].0;
                }
            }
            if let (WellControl::Rate(target), Some(k)) = (well.control, bhp_idx) {
                well_res[k - n] -= target;
            }
        }

        let mut residual = Vec::with_capacity(dim);
        for i in 0..n {
            let mut r = 0.0;
            let mut dr = 0.0;
            for a in 0..2 {
                r += weights[i][a].0 * phase_res[i][a];
                dr += weights[i][a].1 * phase_res[i][a];
            }
            residual.push(r);
            jac.add(i, i, dr);
        }
        residual.extend(well_res);
        Ok(Assembly { residual, jac })
    }

    /// Reservoir-volume phase fluxes per face for given pressures and saturations.
    pub fn phase_fluxes(&self, p: &[f64], sw: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let fluid = self.fluid;
        let mut vw = vec![0.0; self.mesh.num_faces()];
        let mut vo = vec![0.0; self.mesh.num_faces()];
        for (f, face) in self.mesh.faces.iter().enumerate() {
            let Some(j) = face.neighbor else { continue };
            let i = face.owner;
            for ph in PHASES {
                let (pc_i, pc_j) = if ph == Phase::Water {
                    (
                        fluid.capillary_pressure(sw[i]).0,
                        fluid.capillary_pressure(sw[j]).0,
                    )
                } else {
                    (0.0, 0.0)
                };
                let rho = 0.5 * (fluid.density(ph, p[i]).0 + fluid.density(ph, p[j]).0);
                let dpot = (p[i] - pc_i) - (p[j] - pc_j) + rho * fluid.gravity * self.dz[f];
                let up = if dpot > 0.0 { i } else { j };
                let m = fluid.mobility_unchecked(sw[up], p[up]);
                let lam = if ph == Phase::Water { m.water } else { m.oil };
                let v = lam * self.trans[f] * dpot;
                match ph {
                    Phase::Water => vw[f] = v,
                    Phase::Oil => vo[f] = v,
                }
            }
        }
        (vw, vo)
    }

    fn finish(
        &self,
        x: &[f64],
        p_prev: &[f64],
        sw: &[f64],
        rate_wells: &[usize],
        iterations: usize,
        residual: f64,
    ) -> PressureState {
        let n = self.mesh.num_cells();
        let p = x[..n].to_vec();
        let (water_flux, oil_flux) = self.phase_fluxes(&p, sw);
        let flux = water_flux
            .iter()
            .zip(&oil_flux)
            .map(|(a, b)| a + b)
            .collect();
        let wells = self
            .wells
            .iter()
            .enumerate()
            .map(|(w, well)| {
                let (bhp, _) = self.well_bhp(w, x, rate_wells);
                let completions = well
                    .completions
                    .iter()
                    .map(|c| {
                        let r = self.completion_rates(well, c, p[c.cell], sw[c.cell], bhp);
                        CompletionRate {
                            cell: c.cell,
                            total: r[0].0 + r[1].0,
                            water: r[0].0,
                            oil: r[1].0,
                        }
                    })
                    .collect();
                WellSolution {
                    name: well.name.clone(),
                    bhp,
                    completions,
                }
            })
            .collect();
        PressureState {
            pressure: p,
            flux,
            water_flux,
            oil_flux,
            gravity_flux: self.gravity_flux(p_prev),
            wells,
            iterations,
            residual,
        }
    }

    /// Gravity contribution to the water-oil potential difference times `T`, per face.
    pub fn gravity_flux(&self, p: &[f64]) -> Vec<f64> {
        let fluid = self.fluid;
        self.mesh
            .faces
            .iter()
            .enumerate()
            .map(|(f, face)| match face.neighbor {
                Some(j) if fluid.gravity != 0.0 => {
                    let i = face.owner;
                    let drho =
                        |q: f64| fluid.density(Phase::Water, q).0 - fluid.density(Phase::Oil, q).0;
                    let d = 0.5 * (drho(p[i]) + drho(p[j]));
                    self.trans[f] * d * fluid.gravity * self.dz[f]
                }
                _ => 0.0,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cartesian, build_cartesian_2d};
    use crate::petro::PhaseProps;
    use crate::units::{BAR, CENTIPOISE};

    fn unit_fluid() -> FluidModel {
        let mut f = FluidModel::new(
            PhaseProps::new(1.0, 1000.0, 0.0, 1.0),
            PhaseProps::new(1.0, 800.0, 0.0, 1.0),
        );
        f.water.corey_exponent = 1.0;
        f.oil.corey_exponent = 1.0;
        f
    }

    #[test]
    fn weighting_factor_values() {
        let mut f = unit_fluid();
        assert_eq!(weighting_factors(&f, 0.0).unwrap(), (1.0, 1.0));
        f.oil.b_ref = 0.9;
        let (_, wo) = weighting_factors(&f, 0.0).unwrap();
        assert!((wo - 1.0 / 0.9).abs() < 1e-15);
        f.oil.compressibility = 1.0;
        assert!(weighting_factors(&f, -2.0).is_err());
    }

    #[test]
    fn two_cell_darcy_flux() {
        // cells of unit length: half-transmissibilities 2, total 1
        let mesh = build_cartesian(2, 1, 1, 2.0, 1.0, 1.0).unwrap();
        let rock = RockProperties::uniform(2, 0.5, 1.0);
        let fluid = unit_fluid();
        let model =
            PressureModel::new(&mesh, &rock, &fluid, &[], PressureConfig::default()).unwrap();
        let f = mesh.faces.iter().position(|f| f.is_interior()).unwrap();
        assert!((model.trans[f] - 1.0).abs() < 1e-14);
        // S_w = 0.5 with linear relperms: unit total mobility
        let (vw, vo) = model.phase_fluxes(&[2.0, 1.0], &[0.5, 0.5]);
        assert!((vw[f] + vo[f] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn uniform_pressure_gives_zero_flux() {
        let mesh = build_cartesian_2d(4, 4, 4.0, 4.0).unwrap();
        let rock = RockProperties {
            compressibility: 1e-9,
            ..RockProperties::uniform(16, 0.2, 1e-13)
        };
        let fluid = unit_fluid();
        let model =
            PressureModel::new(&mesh, &rock, &fluid, &[], PressureConfig::default()).unwrap();
        let st = model.solve(&[100.0 * BAR; 16], &[0.3; 16], 1.0).unwrap();
        assert!(st.flux.iter().all(|&v| v.abs() < 1e-20));
    }

    #[test]
    fn incompressible_without_datum_is_config_error() {
        let mesh = build_cartesian_2d(2, 1, 2.0, 1.0).unwrap();
        let rock = RockProperties::uniform(2, 0.2, 1e-13);
        let fluid = unit_fluid();
        let wells = [WellSpec {
            name: "inj".into(),
            completions: vec![Completion { cell: 0, wi: 1e-12 }],
            control: WellControl::Rate(1e-3),
            injected_water_fraction: 1.0,
        }];
        let model =
            PressureModel::new(&mesh, &rock, &fluid, &wells, PressureConfig::default()).unwrap();
        assert!(matches!(
            model.solve(&[0.0; 2], &[0.5; 2], 1.0),
            Err(Error::Config { .. })
        ));
    }

    fn hydrostatic_column(compressible: bool) -> f64 {
        let mesh = build_cartesian(1, 1, 10, 1.0, 1.0, 10.0).unwrap();
        let mut rock = RockProperties::uniform(10, 0.2, 1e-13);
        rock.compressibility = 1e-9;
        let mut fluid = FluidModel::new(
            PhaseProps::new(1.0 * CENTIPOISE, 1000.0, 0.2, 2.0),
            PhaseProps::new(3.0 * CENTIPOISE, 800.0, 0.2, 2.0),
        );
        fluid.gravity = 9.81;
        if compressible {
            fluid.water.compressibility = 4e-10;
            fluid.p_ref = 100.0 * BAR;
        }
        let model =
            PressureModel::new(&mesh, &rock, &fluid, &[], PressureConfig::default()).unwrap();
        // single-phase oil (water at residual): integrate hydrostatics exactly for constant density
        let sw = vec![0.2; 10];
        let rho = fluid.density(Phase::Oil, 0.0).0;
        let p: Vec<f64> = (0..10)
            .map(|k| 100.0 * BAR + rho * 9.81 * (10.0 - (k as f64 + 0.5)))
            .collect();
        let st = model.solve(&p, &sw, 86400.0).unwrap();
        st.flux.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    #[test]
    fn gravity_equilibrium_has_no_flux() {
        assert!(hydrostatic_column(false) < 1e-18);
        assert!(hydrostatic_column(true) < 1e-18);
    }

    fn five_spot() -> (
        crate::mesh::PolyMesh,
        RockProperties,
        FluidModel,
        Vec<WellSpec>,
    ) {
        let mesh = build_cartesian_2d(20, 20, 200.0, 200.0).unwrap();
        let mut rock = RockProperties::uniform(400, 0.2, 1e-13);
        for (i, k) in rock.permeability.iter_mut().enumerate() {
            *k *= 1.0 + 0.5 * ((i * 7919) % 13) as f64 / 13.0;
        }
        let fluid = FluidModel::new(
            PhaseProps::new(1.0 * CENTIPOISE, 1000.0, 0.2, 2.0),
            PhaseProps::new(3.0 * CENTIPOISE, 800.0, 0.2, 2.0),
        );
        let wi = peaceman_wi(&mesh, &rock, 0, 0.1, 0.0);
        let wells = vec![
            WellSpec {
                name: "inj".into(),
                completions: vec![Completion { cell: 0, wi }],
                control: WellControl::Rate(1e-4),
                injected_water_fraction: 1.0,
            },
            WellSpec {
                name: "prod".into(),
                completions: vec![Completion { cell: 399, wi }],
                control: WellControl::Bhp(100.0 * BAR),
                injected_water_fraction: 0.0,
            },
        ];
        (mesh, rock, fluid, wells)
    }

    #[test]
    fn five_spot_global_balance() {
        let (mesh, rock, fluid, wells) = five_spot();
        let model =
            PressureModel::new(&mesh, &rock, &fluid, &wells, PressureConfig::default()).unwrap();
        let sw: Vec<f64> = (0..400).map(|i| 0.2 + 0.5 * (i % 3) as f64 / 3.0).collect();
        let st = model.solve(&vec![100.0 * BAR; 400], &sw, 86400.0).unwrap();
        let inflow = st.wells[0].total_rate();
        let outflow = -st.wells[1].total_rate();
        assert!((inflow - 1e-4).abs() < 1e-8 * 1e-4);
        assert!((inflow - outflow).abs() <= 1e-8 * inflow);
        // per-cell balance of total reservoir volume for incompressible fluids
        let q = st.cell_sources(400);
        for c in 0..400 {
            let net: f64 = mesh.cells[c]
                .faces
                .iter()
                .map(|&f| mesh.face_sign(f, c) * st.flux[f])
                .sum::<f64>()
                - q[c];
            assert!(net.abs() < 1e-10 * 1e-4, "cell {c}: {net:e}");
        }
    }

    #[test]
    fn incompressible_matrix_is_symmetric_with_constant_null_space() {
        let (mesh, rock, fluid, _) = five_spot();
        let model =
            PressureModel::new(&mesh, &rock, &fluid, &[], PressureConfig::default()).unwrap();
        let sw = vec![0.5; 400];
        let p = vec![100.0 * BAR; 400];
        let asm = model.assemble(&p, &p, &sw, 1.0, &[]).unwrap();
        let a = asm.jac.to_dense();
        assert!((&a - a.transpose()).amax() <= 1e-12 * a.amax());
        let ones = nalgebra::DVector::from_element(400, 1.0);
        assert!((&a * ones).amax() <= 1e-12 * a.amax());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let (_, _, mut fluid, wells) = five_spot();
        fluid.water.compressibility = 1e-9;
        fluid.oil.compressibility = 3e-9;
        fluid.oil.viscosity_compressibility = 1e-8;
        fluid.gravity = 9.81;
        fluid.p_ref = 100.0 * BAR;
        let mesh3 = build_cartesian(4, 3, 3, 40.0, 30.0, 30.0).unwrap();
        let rock3 = RockProperties {
            compressibility: 1e-9,
            ..RockProperties::uniform(36, 0.25, 2e-13)
        };
        let mut wells3 = wells.clone();
        wells3[1].completions[0].cell = 35;
        let model =
            PressureModel::new(&mesh3, &rock3, &fluid, &wells3, PressureConfig::default()).unwrap();
        let n = 36;
        let sw: Vec<f64> = (0..n)
            .map(|i| 0.25 + 0.5 * ((i * 5) % 7) as f64 / 7.0)
            .collect();
        let mut x: Vec<f64> = (0..n)
            .map(|i| 100.0 * BAR + 1e4 * ((i * 3) % 5) as f64)
            .collect();
        x.push(120.0 * BAR);
        let rate_wells = model.rate_wells();
        let asm = model
            .assemble(&x, &x[..n], &sw, 3600.0, &rate_wells)
            .unwrap();
        let jac = asm.jac.to_dense();
        for col in [0, 5, 17, 35, 36] {
            let h = 1.0;
            let mut xp = x.clone();
            xp[col] += h;
            let mut xm = x.clone();
            xm[col] -= h;
            let rp = model
                .assemble(&xp, &x[..n], &sw, 3600.0, &rate_wells)
                .unwrap()
                .residual;
            let rm = model
                .assemble(&xm, &x[..n], &sw, 3600.0, &rate_wells)
                .unwrap()
                .residual;
            for row in 0..=n {
                let fd = (rp[row] - rm[row]) / (2.0 * h);
                let scale = jac.row(row).amax();
                assert!(
                    (fd - jac[(row, col)]).abs() <= 1e-6 * scale,
                    "J[{row},{col}] = {} vs fd {fd}",
                    jac[(row, col)]
                );
            }
        }
    }
}
