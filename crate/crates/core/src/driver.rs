//! Sequential splitting loop: pressure, flux graph and transport per step,
//! with time-step control and run statistics.

use log::{info, warn};

use crate::error::{Error, Result};
use crate::mesh::PolyMesh;
use crate::petro::{FluidModel, Phase, RockProperties};
use crate::pressure::{PressureConfig, PressureModel, PressureState, WellControl, WellSpec};
use crate::transport::{
    solve_global_newton, transport_step, Discretization, GlobalStats, TransportParams,
    TransportProblem, TransportState, TransportStats,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMode {
    Reordered,
    Global,
    /// Reordered and global solvers on the same pressure field every step;
    /// the reordered result is carried forward.
    Compare,
}

impl std::str::FromStr for SolverMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "reordered" => Ok(SolverMode::Reordered),
            "global" => Ok(SolverMode::Global),
            "compare" => Ok(SolverMode::Compare),
            other => Err(format!(
                "unknown solver mode `{other}` (expected reordered, global or compare)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlChange {
    pub time: f64,
    pub well: String,
    pub control: WellControl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// Strictly increasing, seconds.
    pub report_times: Vec<f64>,
    pub initial_dt: f64,
    pub min_dt: f64,
    pub max_dt: f64,
    pub growth: f64,
    pub cut: f64,
    pub control_changes: Vec<ControlChange>,
}

impl Schedule {
    pub fn new(report_times: Vec<f64>, initial_dt: f64) -> Self {
        Schedule {
            report_times,
            initial_dt,
            min_dt: initial_dt * 1e-6,
            max_dt: f64::INFINITY,
            growth: 1.25,
            cut: 0.5,
            control_changes: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.report_times.is_empty() {
            return Err(Error::config(
                "schedule.report_times",
                "at least one report time is required",
            ));
        }
        if !self.report_times.windows(2).all(|w| w[1] > w[0]) || !(self.report_times[0] > 0.0) {
            return Err(Error::config(
                "schedule.report_times",
                "report times must be positive and strictly increasing",
            ));
        }
        if !(self.min_dt > 0.0 && self.min_dt <= self.initial_dt && self.initial_dt <= self.max_dt)
        {
            return Err(Error::config(
                "schedule.initial_dt",
                "need 0 < min_dt <= initial_dt <= max_dt",
            ));
        }
        if !(self.growth >= 1.0) {
            return Err(Error::config(
                "schedule.growth",
                "growth factor must be at least 1",
            ));
        }
        if !(self.cut > 0.0 && self.cut < 1.0) {
            return Err(Error::config(
                "schedule.cut",
                "cut factor must lie in (0, 1)",
            ));
        }
        Ok(())
    }
}

/// Everything needed for a run.
#[derive(Debug, Clone)]
pub struct Case {
    pub mesh: PolyMesh,
    pub rock: RockProperties,
    pub fluid: FluidModel,
    pub wells: Vec<WellSpec>,
    pub schedule: Schedule,
    pub transport: TransportParams,
    pub pressure: PressureConfig,
    pub mode: SolverMode,
    pub initial_saturation: Vec<f64>,
    /// Oil pressure, Pa.
    pub initial_pressure: Vec<f64>,
}

impl Case {
    pub fn validate(&self) -> Result<()> {
        let n = self.mesh.num_cells();
        self.rock.validate(n)?;
        self.fluid.validate()?;
        self.schedule.validate()?;
        self.transport.validate()?;
        for w in &self.wells {
            w.validate(n)?;
        }
        for c in &self.schedule.control_changes {
            if !self.wells.iter().any(|w| w.name == c.well) {
                return Err(Error::config(
                    "schedule.control_change",
                    format!("unknown well `{}`", c.well),
                ));
            }
        }
        if self.initial_saturation.len() != n || self.initial_pressure.len() != n {
            return Err(Error::config(
                "fluid.initial",
                format!("expected {n} initial values"),
            ));
        }
        if let Some(i) = self
            .initial_saturation
            .iter()
            .position(|s| !(0.0..=1.0).contains(s))
        {
            return Err(Error::config(
                "fluid.initial_saturation",
                format!("cell {i}: saturation outside [0, 1]"),
            ));
        }
        if self.transport.degree > 0 && self.fluid.capillary.is_some() {
            return Err(Error::config(
                "solver.degree",
                "capillary pressure is only supported with degree 0",
            ));
        }
        Ok(())
    }

    pub fn pore_volume(&self) -> f64 {
        (0..self.mesh.num_cells())
            .map(|i| {
                self.rock.porosity_at(i, self.initial_pressure[i]).0 * self.mesh.cells[i].volume
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WellReport {
    pub name: String,
    pub bhp: f64,
    /// Reservoir-volume rates, m^3/s, positive for injection.
    pub water_rate: f64,
    pub oil_rate: f64,
    /// Water fraction of the produced liquid; zero for injectors.
    pub water_cut: f64,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    /// End of the step, seconds.
    pub time: f64,
    pub dt: f64,
    pub pressure_iterations: usize,
    pub transport: Option<TransportStats>,
    pub global: Option<GlobalStats>,
    /// Largest dof difference between the reordered and the global solution.
    pub discrepancy: Option<f64>,
    pub wells: Vec<WellReport>,
    /// Water-mass balance error of the step, surface volume.
    pub mass_error: f64,
    /// Cumulative injected water, reservoir volume.
    pub injected_water: f64,
    pub min_mean: f64,
    pub max_mean: f64,
    /// Saturation range over cell vertices, i.e. of the polynomial itself.
    pub min_point: f64,
    pub max_point: f64,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub saturation: Vec<f64>,
    pub pressure: Vec<f64>,
    pub degree: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub steps: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    pub pore_volume: f64,
    /// Sum over steps of the absolute mass-balance error, surface volume.
    pub cumulative_mass_error: f64,
    pub retries: usize,
    pub final_state: TransportState,
    pub final_pressure: Vec<f64>,
    pub well_names: Vec<String>,
}

impl RunReport {
    pub fn max_step_mass_error(&self) -> f64 {
        self.steps
            .iter()
            .fold(0.0f64, |m, s| m.max(s.mass_error.abs()))
    }

    pub fn max_discrepancy(&self) -> Option<f64> {
        self.steps
            .iter()
            .filter_map(|s| s.discrepancy)
            .reduce(f64::max)
    }
}

struct StepOutcome {
    state: TransportState,
    pressure: PressureState,
    reordered: Option<TransportStats>,
    global: Option<GlobalStats>,
    discrepancy: Option<f64>,
    water_surface: Vec<f64>,
    produced_fw: Vec<f64>,
}

/// Surface water mass `sum phi(p) b_w(p) |Omega| s_mean`.
fn water_mass(case: &Case, p: &[f64], means: &[f64]) -> f64 {
    (0..case.mesh.num_cells())
        .map(|i| {
            let phi = case.rock.porosity_at(i, p[i]).0;
            let bw = case.fluid.shrinkage(Phase::Water, p[i]).0;
            phi * bw * case.mesh.cells[i].volume * means[i]
        })
        .sum()
}

fn advance(
    case: &Case,
    disc: &Discretization,
    pmodel: &PressureModel,
    p: &[f64],
    state: &TransportState,
    dt: f64,
) -> Result<StepOutcome> {
    let means = state.means(disc);
    let pressure = pmodel.solve(p, &means, dt)?;
    let prob = TransportProblem::new(
        &case.mesh,
        disc,
        &case.rock,
        &case.fluid,
        &case.transport,
        &pmodel.trans,
        &pressure,
        p,
        state,
        dt,
    );
    let (next, reordered, global, discrepancy) = match case.mode {
        SolverMode::Reordered => {
            let (s, st) = transport_step(&prob)?;
            (s, Some(st), None, None)
        }
        SolverMode::Global => {
            let (s, gs) = solve_global_newton(&prob)?;
            (s, None, Some(gs), None)
        }
        SolverMode::Compare => {
            let (s, st) = transport_step(&prob)?;
            let (g, gs) = solve_global_newton(&prob)?;
            let d = s.max_difference(&g);
            (s, Some(st), Some(gs), Some(d))
        }
    };
    let water_surface = prob.well_water_surface_rates(&next);
    let produced_fw = (0..case.mesh.num_cells())
        .map(|i| prob.produced_water_fraction(&next, i))
        .collect();
    Ok(StepOutcome {
        state: next,
        pressure,
        reordered,
        global,
        discrepancy,
        water_surface,
        produced_fw,
    })
}

fn well_reports(pressure: &PressureState, produced_fw: &[f64]) -> Vec<WellReport> {
    pressure
        .wells
        .iter()
        .map(|w| {
            let (mut water, mut oil) = (0.0, 0.0);
            for c in &w.completions {
                if c.total > 0.0 {
                    water += c.water;
                    oil += c.oil;
                } else {
                    let fw = produced_fw[c.cell];
                    water += c.total * fw;
                    oil += c.total * (1.0 - fw);
                }
            }
            let produced = -(water.min(0.0) + oil.min(0.0));
            WellReport {
                name: w.name.clone(),
                bhp: w.bhp,
                water_rate: water,
                oil_rate: oil,
                water_cut: if produced > 0.0 {
                    -water.min(0.0) / produced
                } else {
                    0.0
                },
            }
        })
        .collect()
}

/// Runs the case to the last report time.
pub fn run(case: &Case) -> Result<RunReport> {
    run_with(case, |_| {})
}

/// Runs the case, calling `on_step` after every accepted step.
pub fn run_with(case: &Case, mut on_step: impl FnMut(&StepRecord)) -> Result<RunReport> {
    case.validate()?;
    let sched = &case.schedule;
    let disc = Discretization::new(&case.mesh, case.transport.degree);
    let mut wells = case.wells.clone();
    let mut state = TransportState::from_means(&disc, &case.initial_saturation);
    let mut p = case.initial_pressure.clone();
    let pv = case.pore_volume();

    let mut breakpoints: Vec<f64> = sched.report_times.clone();
    breakpoints.extend(
        sched
            .control_changes
            .iter()
            .map(|c| c.time)
            .filter(|&t| t > 0.0),
    );
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();
    let last = *sched.report_times.last().unwrap();
    breakpoints.retain(|&t| t <= last);

    let snapshot = |t: f64, st: &TransportState, p: &[f64]| Snapshot {
        time: t,
        saturation: st.means(&disc),
        pressure: p.to_vec(),
        degree: st.degree.clone(),
    };
    let apply_controls = |wells: &mut Vec<WellSpec>, t: f64| {
        for c in sched.control_changes.iter().filter(|c| c.time <= t) {
            if let Some(w) = wells.iter_mut().find(|w| w.name == c.well) {
                w.control = c.control;
            }
        }
    };
    apply_controls(&mut wells, 0.0);

    let mut report = RunReport {
        steps: Vec::new(),
        snapshots: vec![snapshot(0.0, &state, &p)],
        pore_volume: pv,
        cumulative_mass_error: 0.0,
        retries: 0,
        final_state: state.clone(),
        final_pressure: p.clone(),
        well_names: wells.iter().map(|w| w.name.clone()).collect(),
    };
    let mut t = 0.0;
    let mut dt = sched.initial_dt.min(sched.max_dt);
    let mut injected = 0.0;
    for &target in &breakpoints {
        let pmodel =
            PressureModel::new(&case.mesh, &case.rock, &case.fluid, &wells, case.pressure)?;
        let eps = 1e-9 * target.max(1.0);
        while target - t > eps {
            let remaining = target - t;
            // avoid leaving a sliver before the breakpoint
            let h = if dt >= remaining || remaining - dt < 1e-3 * dt {
                remaining
            } else {
                dt
            };
            match advance(case, &disc, &pmodel, &p, &state, h) {
                Ok(out) => {
                    let means = out.state.means(&disc);
                    let (min_point, max_point) = out.state.vertex_range(&disc);
                    let before = water_mass(case, &p, &state.means(&disc));
                    let after = water_mass(case, &out.pressure.pressure, &means);
                    let mass_error = after - before - h * out.water_surface.iter().sum::<f64>();
                    injected += h * out
                        .pressure
                        .wells
                        .iter()
                        .flat_map(|w| &w.completions)
                        .filter(|c| c.total > 0.0)
                        .map(|c| c.water)
                        .sum::<f64>();
                    report.cumulative_mass_error += mass_error.abs();
                    let record = StepRecord {
                        step: report.steps.len() + 1,
                        time: if h == remaining { target } else { t + h },
                        dt: h,
                        pressure_iterations: out.pressure.iterations,
                        wells: well_reports(&out.pressure, &out.produced_fw),
                        transport: out.reordered,
                        global: out.global,
                        discrepancy: out.discrepancy,
                        mass_error,
                        injected_water: injected,
                        min_mean: means.iter().copied().fold(f64::INFINITY, f64::min),
                        max_mean: means.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        min_point,
                        max_point,
                    };
                    info!(
                        "step {} t = {:.6e} s dt = {:.3e} s, mass error {:.2e}",
                        record.step, record.time, h, mass_error
                    );
                    on_step(&record);
                    t = record.time;
                    report.steps.push(record);
                    state = out.state;
                    p = out.pressure.pressure;
                    if h >= dt {
                        dt = (dt * sched.growth).min(sched.max_dt);
                    }
                }
                Err(e) if e.is_recoverable() => {
                    dt = h * sched.cut;
                    report.retries += 1;
                    warn!("step from t = {t:.6e} s failed ({e}); retrying with dt = {dt:.3e} s");
                    if dt < sched.min_dt {
                        return Err(Error::TimeStepUnderflow {
                            dt,
                            min_dt: sched.min_dt,
                            time: t,
                        });
                    }
                }
                Err(e) => return Err(e),
            }
        }
        t = target;
        apply_controls(&mut wells, t);
        if sched.report_times.contains(&target) {
            report.snapshots.push(snapshot(t, &state, &p));
        }
    }
    report.final_state = state;
    report.final_pressure = p;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_cartesian_2d;
    use crate::pressure::Completion;
    use crate::units::{BAR, CENTIPOISE, DAY};

    fn quarter_five_spot(n: usize, degree: usize) -> Case {
        let mesh = build_cartesian_2d(n, n, 100.0, 100.0).unwrap();
        let nc = mesh.num_cells();
        let mut rock = RockProperties::uniform(nc, 0.2, 1e-13);
        rock.compressibility = 1e-9;
        rock.p_ref = 200.0 * BAR;
        let mut fluid = FluidModel::new(
            PhaseProps::new(1.0 * CENTIPOISE, 1000.0, 0.2, 2.0),
            PhaseProps::new(3.0 * CENTIPOISE, 800.0, 0.2, 2.0),
        );
        fluid.water.compressibility = 4e-10;
        fluid.oil.compressibility = 1e-9;
        fluid.p_ref = 200.0 * BAR;
        let wells = vec![
            WellSpec {
                name: "INJ".into(),
                completions: vec![Completion { cell: 0, wi: 1e-12 }],
                control: WellControl::Rate(2e-4),
                injected_water_fraction: 1.0,
            },
            WellSpec {
                name: "PROD".into(),
                completions: vec![Completion {
                    cell: nc - 1,
                    wi: 1e-12,
                }],
                control: WellControl::Bhp(200.0 * BAR),
                injected_water_fraction: 0.0,
            },
        ];
        Case {
            transport: TransportParams {
                degree,
                ..Default::default()
            },
            pressure: PressureConfig::default(),
            schedule: Schedule::new(vec![5.0 * DAY, 10.0 * DAY], DAY),
            mode: SolverMode::Reordered,
            initial_saturation: vec![0.2; nc],
            initial_pressure: vec![200.0 * BAR; nc],
            mesh,
            rock,
            fluid,
            wells,
        }
    }

    use crate::petro::PhaseProps;

    #[test]
    fn equilibrium_skips_transport() {
        let mut case = quarter_five_spot(4, 1);
        case.wells.clear();
        let r = run(&case).unwrap();
        assert!(!r.steps.is_empty());
        for s in &r.steps {
            let t = s.transport.as_ref().unwrap();
            assert_eq!(t.total_iterations(), 0);
            assert!(s.mass_error.abs() < 1e-12);
        }
        assert_eq!(r.snapshots.len(), 3);
    }

    #[test]
    fn hits_report_times_and_balances_mass() {
        let case = quarter_five_spot(6, 1);
        let r = run(&case).unwrap();
        let times: Vec<f64> = r.snapshots.iter().map(|s| s.time).collect();
        assert_eq!(times, vec![0.0, 5.0 * DAY, 10.0 * DAY]);
        assert!(r.steps.iter().any(|s| (s.time - 5.0 * DAY).abs() < 1e-6));
        let injected: f64 = r.steps.iter().map(|s| s.dt * s.wells[0].water_rate).sum();
        let reported = r.steps.last().unwrap().injected_water;
        assert!(
            (injected - reported).abs() <= 1e-10 * reported,
            "{injected} vs {reported}"
        );
        assert!((reported - 2e-4 * 10.0 * DAY).abs() <= 1e-8 * reported);
        assert!(r.max_step_mass_error() <= 1e-8 * r.pore_volume);
        // water has moved away from the injector
        let s = &r.snapshots[2].saturation;
        assert!(s[0] > 0.5 && s[s.len() - 1] < s[0]);
    }

    #[test]
    fn control_change_applies() {
        let mut case = quarter_five_spot(4, 0);
        case.schedule.control_changes.push(ControlChange {
            time: 3.0 * DAY,
            well: "INJ".into(),
            control: WellControl::Rate(0.0),
        });
        let r = run(&case).unwrap();
        for s in &r.steps {
            let rate = s.wells[0].water_rate;
            if s.time <= 3.0 * DAY + 1.0 {
                assert!((rate - 2e-4).abs() < 1e-12);
            } else {
                assert_eq!(rate, 0.0);
            }
        }
    }

    #[test]
    fn failing_steps_are_retried_with_shorter_steps() {
        let mut case = quarter_five_spot(4, 0);
        case.schedule = Schedule::new(vec![10.0 * DAY], 10.0 * DAY);
        case.transport.max_iterations = 3;
        case.transport.max_update = 0.05;
        let r = run(&case).unwrap();
        assert!(r.retries > 0);
        assert!(r.steps[0].dt < 10.0 * DAY);

        case.schedule.min_dt = 5.0 * DAY;
        assert!(matches!(run(&case), Err(Error::TimeStepUnderflow { .. })));
    }

    #[test]
    fn compare_mode_reports_discrepancy() {
        let mut case = quarter_five_spot(5, 1);
        case.mode = SolverMode::Compare;
        let r = run(&case).unwrap();
        for s in &r.steps {
            assert!(s.discrepancy.unwrap() <= 100.0 * case.transport.tolerance);
            assert!(s.global.is_some() && s.transport.is_some());
        }
    }

    #[test]
    fn schedule_validation() {
        let mut s = Schedule::new(vec![2.0, 1.0], 0.1);
        assert!(s.validate().is_err());
        s.report_times = vec![1.0, 2.0];
        assert!(s.validate().is_ok());
        s.max_dt = 0.01;
        assert!(s.validate().is_err());
    }
}
