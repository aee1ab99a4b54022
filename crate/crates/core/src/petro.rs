//! Rock and fluid properties for a two-phase water/oil system.
//!
//! Compressibility is linearized around a reference pressure for porosity,
//! shrinkage factors and viscosities. Reservoir densities are surface
//! densities times the shrinkage factor. Relative permeabilities follow the
//! Corey form with residual saturations.

use crate::error::{Error, Result};
use crate::mesh::Point;

/// Porosity and diagonal permeability per cell.
#[derive(Debug, Clone)]
pub struct RockProperties {
    pub porosity: Vec<f64>,
    /// Diagonal permeability `(kx, ky, kz)` in m^2.
    pub permeability: Vec<Point>,
    /// Rock compressibility in 1/Pa.
    pub compressibility: f64,
    pub p_ref: f64,
}

impl RockProperties {
    pub fn uniform(n: usize, porosity: f64, perm: f64) -> Self {
        RockProperties {
            porosity: vec![porosity; n],
            permeability: vec![Point::repeat(perm); n],
            compressibility: 0.0,
            p_ref: 0.0,
        }
    }

    /// Porosity at pressure `p` and its pressure derivative.
    pub fn porosity_at(&self, cell: usize, p: f64) -> (f64, f64) {
        let phi0 = self.porosity[cell];
        let c = self.compressibility;
        (phi0 * (1.0 + c * (p - self.p_ref)), phi0 * c)
    }

    pub fn validate(&self, n_cells: usize) -> Result<()> {
        if self.porosity.len() != n_cells || self.permeability.len() != n_cells {
            return Err(Error::config(
                "rock",
                format!("expected {n_cells} porosity/permeability values"),
            ));
        }
        if let Some(i) = self.porosity.iter().position(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::config(
                "rock.porosity",
                format!("cell {i}: porosity must lie in (0, 1]"),
            ));
        }
        if let Some(i) = self
            .permeability
            .iter()
            .position(|k| k.iter().any(|&v| !(v > 0.0)))
        {
            return Err(Error::config(
                "rock.permeability",
                format!("cell {i}: permeability must be positive"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Water,
    Oil,
}

/// Properties of one fluid phase.
#[derive(Debug, Clone)]
pub struct PhaseProps {
    /// Viscosity at the reference pressure, Pa s.
    pub viscosity: f64,
    /// Relative viscosity change per Pa.
    pub viscosity_compressibility: f64,
    /// Shrinkage factor at the reference pressure.
    pub b_ref: f64,
    /// Compressibility of the shrinkage factor, 1/Pa.
    pub compressibility: f64,
    /// Density at surface conditions, kg/m^3.
    pub surface_density: f64,
    pub residual_saturation: f64,
    pub corey_exponent: f64,
}

impl PhaseProps {
    pub fn new(viscosity: f64, surface_density: f64, residual: f64, exponent: f64) -> Self {
        PhaseProps {
            viscosity,
            viscosity_compressibility: 0.0,
            b_ref: 1.0,
            compressibility: 0.0,
            surface_density,
            residual_saturation: residual,
            corey_exponent: exponent,
        }
    }
}

/// Piecewise-linear oil-water capillary pressure `P_cow(S_w)`, flat outside the table.
#[derive(Debug, Clone)]
pub struct CapillaryTable {
    sw: Vec<f64>,
    pc: Vec<f64>,
}

impl CapillaryTable {
    pub fn new(sw: Vec<f64>, pc: Vec<f64>) -> Result<Self> {
        if sw.len() != pc.len() || sw.is_empty() {
            return Err(Error::config(
                "fluid.capillary",
                "table needs matching, non-empty columns",
            ));
        }
        if sw.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config(
                "fluid.capillary",
                "saturations must be strictly increasing",
            ));
        }
        if pc.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::config(
                "fluid.capillary",
                "capillary pressure must be non-increasing in S_w",
            ));
        }
        Ok(CapillaryTable { sw, pc })
    }

    /// Reads a two-column CSV table `S_w, P_cow[bar]`; non-numeric lines are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut sw = Vec::new();
        let mut pc = Vec::new();
        for line in text.lines() {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() < 2 {
                continue;
            }
            if let (Ok(s), Ok(p)) = (cols[0].parse::<f64>(), cols[1].parse::<f64>()) {
                sw.push(s);
                pc.push(p * crate::units::BAR);
            }
        }
        Self::new(sw, pc)
    }

    /// Value and derivative with respect to `S_w`.
    pub fn eval(&self, sw: f64) -> (f64, f64) {
        let n = self.sw.len();
        if n == 1 || sw <= self.sw[0] {
            return (self.pc[0], 0.0);
        }
        if sw >= self.sw[n - 1] {
            return (self.pc[n - 1], 0.0);
        }
        let k = self.sw.partition_point(|&s| s <= sw) - 1;
        let slope = (self.pc[k + 1] - self.pc[k]) / (self.sw[k + 1] - self.sw[k]);
        (self.pc[k] + slope * (sw - self.sw[k]), slope)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelPerm {
    pub krw: f64,
    pub kro: f64,
    pub dkrw: f64,
    pub dkro: f64,
}

/// Phase mobilities with derivatives with respect to `S_w` and `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mobility {
    pub water: f64,
    pub oil: f64,
    pub dwater_ds: f64,
    pub doil_ds: f64,
    pub dwater_dp: f64,
    pub doil_dp: f64,
}

impl Mobility {
    pub fn total(&self) -> f64 {
        self.water + self.oil
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracFlow {
    pub water: f64,
    pub oil: f64,
    pub dwater_ds: f64,
    pub dwater_dp: f64,
}

#[derive(Debug, Clone)]
pub struct FluidModel {
    pub water: PhaseProps,
    pub oil: PhaseProps,
    pub p_ref: f64,
    pub capillary: Option<CapillaryTable>,
    /// Gravitational acceleration, m/s^2 (zero disables gravity).
    pub gravity: f64,
    /// Saturations may leave [0, 1] by this much before evaluation fails.
    pub saturation_slack: f64,
}

impl FluidModel {
    pub fn new(water: PhaseProps, oil: PhaseProps) -> Self {
        FluidModel {
            water,
            oil,
            p_ref: 0.0,
            capillary: None,
            gravity: 0.0,
            saturation_slack: 1e-4,
        }
    }

    pub fn phase(&self, phase: Phase) -> &PhaseProps {
        match phase {
            Phase::Water => &self.water,
            Phase::Oil => &self.oil,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, ph) in [("water", &self.water), ("oil", &self.oil)] {
            if !(ph.viscosity > 0.0) {
                return Err(Error::config(
                    format!("fluid.{name}_viscosity"),
                    "must be positive",
                ));
            }
            if !(ph.b_ref > 0.0) {
                return Err(Error::config(
                    format!("fluid.{name}_b_ref"),
                    "must be positive",
                ));
            }
            if !(ph.corey_exponent >= 1.0) {
                return Err(Error::config(
                    format!("fluid.{name}_corey"),
                    "exponent must be at least 1",
                ));
            }
            if !(0.0..1.0).contains(&ph.residual_saturation) {
                return Err(Error::config(
                    format!("fluid.{name}_residual"),
                    "must lie in [0, 1)",
                ));
            }
        }
        if self.water.residual_saturation + self.oil.residual_saturation >= 1.0 {
            return Err(Error::config(
                "fluid",
                "residual saturations must sum to less than one",
            ));
        }
        Ok(())
    }

    fn movable_span(&self) -> f64 {
        1.0 - self.water.residual_saturation - self.oil.residual_saturation
    }

    /// Corey relative permeabilities; fails outside `[-slack, 1 + slack]`.
    pub fn relperm(&self, sw: f64) -> Result<RelPerm> {
        let e = self.saturation_slack;
        if !(sw >= -e && sw <= 1.0 + e) {
            return Err(Error::Domain(format!(
                "water saturation {sw} outside [0, 1]"
            )));
        }
        Ok(self.relperm_unchecked(sw))
    }

    /// Corey relative permeabilities without the range check (values outside
    /// the mobile range are clamped to the endpoints).
    pub fn relperm_unchecked(&self, sw: f64) -> RelPerm {
        let span = self.movable_span();
        let s = (sw - self.water.residual_saturation) / span;
        let (nw, no) = (self.water.corey_exponent, self.oil.corey_exponent);
        if s <= 0.0 {
            RelPerm {
                krw: 0.0,
                kro: 1.0,
                dkrw: 0.0,
                dkro: 0.0,
            }
        } else if s >= 1.0 {
            RelPerm {
                krw: 1.0,
                kro: 0.0,
                dkrw: 0.0,
                dkro: 0.0,
            }
        } else {
            let so = 1.0 - s;
            RelPerm {
                krw: s.powf(nw),
                kro: so.powf(no),
                dkrw: nw * s.powf(nw - 1.0) / span,
                dkro: -no * so.powf(no - 1.0) / span,
            }
        }
    }

    /// Viscosity and its pressure derivative.
    pub fn viscosity(&self, phase: Phase, p: f64) -> (f64, f64) {
        let ph = self.phase(phase);
        let d = ph.viscosity * ph.viscosity_compressibility;
        (ph.viscosity + d * (p - self.p_ref), d)
    }

    /// Shrinkage factor and its pressure derivative.
    pub fn shrinkage(&self, phase: Phase, p: f64) -> (f64, f64) {
        let ph = self.phase(phase);
        let d = ph.b_ref * ph.compressibility;
        (ph.b_ref + d * (p - self.p_ref), d)
    }

    /// Reservoir density `rho_s * b(p)` and its pressure derivative.
    pub fn density(&self, phase: Phase, p: f64) -> (f64, f64) {
        let (b, db) = self.shrinkage(phase, p);
        let rho = self.phase(phase).surface_density;
        (rho * b, rho * db)
    }

    pub fn capillary_pressure(&self, sw: f64) -> (f64, f64) {
        self.capillary.as_ref().map_or((0.0, 0.0), |t| t.eval(sw))
    }

    pub fn is_incompressible(&self) -> bool {
        self.water.compressibility == 0.0 && self.oil.compressibility == 0.0
    }

    pub fn mobility(&self, sw: f64, p: f64) -> Result<Mobility> {
        self.relperm(sw)?;
        Ok(self.mobility_unchecked(sw, p))
    }

    pub fn mobility_unchecked(&self, sw: f64, p: f64) -> Mobility {
        let kr = self.relperm_unchecked(sw);
        let (mw, dmw) = self.viscosity(Phase::Water, p);
        let (mo, dmo) = self.viscosity(Phase::Oil, p);
        Mobility {
            water: kr.krw / mw,
            oil: kr.kro / mo,
            dwater_ds: kr.dkrw / mw,
            doil_ds: kr.dkro / mo,
            dwater_dp: -kr.krw * dmw / (mw * mw),
            doil_dp: -kr.kro * dmo / (mo * mo),
        }
    }

    pub fn frac_flow(&self, sw: f64, p: f64) -> Result<FracFlow> {
        let m = self.mobility(sw, p)?;
        let total = m.total();
        if !(total > 0.0) {
            return Err(Error::ZeroMobility);
        }
        let fw = m.water / total;
        let dt_ds = m.dwater_ds + m.doil_ds;
        let dt_dp = m.dwater_dp + m.doil_dp;
        Ok(FracFlow {
            water: fw,
            oil: 1.0 - fw,
            dwater_ds: (m.dwater_ds * total - m.water * dt_ds) / (total * total),
            dwater_dp: (m.dwater_dp * total - m.water * dt_dp) / (total * total),
        })
    }
}
