//! Case files: flat INI sections describing mesh, rock, fluid, wells,
//! schedule and solver settings.
//!
//! Units are SI except pressures (bar), viscosities (cP) and compressibilities
//! (1/bar), which are converted on load. Every key must be known; anything
//! else is rejected with the offending `section.key` in the error. The full
//! grammar is documented in the repository README.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use ini::Ini;

use crate::driver::{Case, ControlChange, Schedule, SolverMode};
use crate::error::{Error, Result};
use crate::mesh::{build_cartesian, build_cartesian_2d, load_mesh, Point, PolyMesh};
use crate::petro::{CapillaryTable, FluidModel, PhaseProps, RockProperties};
use crate::pressure::{peaceman_wi, Completion, PressureConfig, WellControl, WellSpec};
use crate::transport::TransportParams;
use crate::units::{BAR, CENTIPOISE};

const SECTIONS: [&str; 6] = ["mesh", "rock", "fluid", "wells", "schedule", "solver"];

/// Key/value pairs of one section with bookkeeping of consumed keys.
struct Section {
    name: &'static str,
    values: BTreeMap<String, String>,
    used: HashSet<String>,
}

impl Section {
    fn key(&self, k: &str) -> String {
        format!("{}.{k}", self.name)
    }

    fn raw(&mut self, k: &str) -> Option<String> {
        let v = self.values.get(k).cloned();
        if v.is_some() {
            self.used.insert(k.to_string());
        }
        v
    }

    fn has(&self, k: &str) -> bool {
        self.values.contains_key(k)
    }

    fn parse<T: std::str::FromStr>(&mut self, k: &str) -> Result<Option<T>> {
        match self.raw(k) {
            None => Ok(None),
            Some(v) => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| Error::config(self.key(k), format!("cannot parse `{v}`"))),
        }
    }

    fn get<T: std::str::FromStr>(&mut self, k: &str, default: T) -> Result<T> {
        Ok(self.parse(k)?.unwrap_or(default))
    }

    fn require<T: std::str::FromStr>(&mut self, k: &str) -> Result<T> {
        self.parse(k)?
            .ok_or_else(|| Error::config(self.key(k), "required key is missing"))
    }

    fn flag(&mut self, k: &str, default: bool) -> Result<bool> {
        match self.raw(k).as_deref().map(str::trim) {
            None => Ok(default),
            Some("on" | "true" | "yes" | "1") => Ok(true),
            Some("off" | "false" | "no" | "0") => Ok(false),
            Some(v) => Err(Error::config(
                self.key(k),
                format!("expected on/off, got `{v}`"),
            )),
        }
    }

    fn list<T: std::str::FromStr>(&mut self, k: &str) -> Result<Option<Vec<T>>> {
        let Some(v) = self.raw(k) else {
            return Ok(None);
        };
        split_list(&v)
            .map(|x| {
                x.parse()
                    .map_err(|_| Error::config(self.key(k), format!("cannot parse `{x}`")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn finish(&self) -> Result<()> {
        match self.values.keys().find(|k| !self.used.contains(*k)) {
            Some(k) => Err(Error::config(self.key(k), "unknown key")),
            None => Ok(()),
        }
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
}

fn read_sections(text: &str) -> Result<Vec<Section>> {
    let ini = Ini::load_from_str(text).map_err(|e| Error::config("case", e.to_string()))?;
    let mut out: Vec<Section> = SECTIONS
        .iter()
        .map(|&name| Section {
            name,
            values: BTreeMap::new(),
            used: HashSet::new(),
        })
        .collect();
    for (name, props) in ini.iter() {
        let Some(name) = name else {
            if let Some((k, _)) = props.iter().next() {
                return Err(Error::config(k, "key outside of any section"));
            }
            continue;
        };
        let Some(sec) = out.iter_mut().find(|s| s.name == name) else {
            return Err(Error::config(name, "unknown section"));
        };
        for (k, v) in props.iter() {
            if sec.values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::config(format!("{name}.{k}"), "key given twice"));
            }
        }
    }
    Ok(out)
}

fn read_file(base: &Path, key: String, rel: &str) -> Result<(PathBuf, String)> {
    let path = base.join(rel.trim());
    std::fs::read_to_string(&path)
        .map(|t| (path.clone(), t))
        .map_err(|e| Error::config(key, format!("cannot read {}: {e}", path.display())))
}

/// Per-cell values from a CSV file with one row per cell; `#` starts a comment.
fn per_cell_csv(
    base: &Path,
    key: String,
    rel: &str,
    n: usize,
    cols: usize,
) -> Result<Vec<Vec<f64>>> {
    let (path, text) = read_file(base, key.clone(), rel)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::with_capacity(n);
    for rec in rdr.records() {
        let rec =
            rec.map_err(|e| Error::config(key.clone(), format!("{}: {e}", path.display())))?;
        let row: Vec<f64> = rec
            .iter()
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| {
                Error::config(
                    key.clone(),
                    format!("{}: non-numeric row {}", path.display(), rows.len() + 1),
                )
            })?;
        if row.is_empty() {
            continue;
        }
        if row.len() != 1 && row.len() != cols {
            return Err(Error::config(
                key,
                format!(
                    "{}: row {} has {} columns",
                    path.display(),
                    rows.len() + 1,
                    row.len()
                ),
            ));
        }
        rows.push(row);
    }
    if rows.len() != n {
        return Err(Error::config(
            key,
            format!(
                "{}: expected {n} rows, found {}",
                path.display(),
                rows.len()
            ),
        ));
    }
    Ok(rows)
}

fn mesh_section(s: &mut Section, base: &Path) -> Result<PolyMesh> {
    let kind: String = s.get("type", "cartesian".to_string())?;
    match kind.as_str() {
        "cartesian" => {
            let nx: usize = s.require("nx")?;
            let ny: usize = s.get("ny", 1)?;
            let lx: f64 = s.require("lx")?;
            let ly: f64 = s.get("ly", 1.0)?;
            match s.parse::<usize>("nz")? {
                Some(nz) => {
                    let lz: f64 = s.get("lz", 1.0)?;
                    build_cartesian(nx, ny, nz, lx, ly, lz)
                }
                None => build_cartesian_2d(nx, ny, lx, ly),
            }
        }
        "file" => {
            let rel: String = s.require("path")?;
            load_mesh(base.join(rel.trim()))
        }
        other => Err(Error::config(
            s.key("type"),
            format!("expected cartesian or file, got `{other}`"),
        )),
    }
}

fn rock_section(s: &mut Section, base: &Path, n: usize) -> Result<RockProperties> {
    let porosity = match s.raw("porosity_file") {
        Some(f) => per_cell_csv(base, s.key("porosity_file"), &f, n, 1)?
            .into_iter()
            .map(|r| r[0])
            .collect(),
        None => vec![s.require::<f64>("porosity")?; n],
    };
    let permeability = match s.raw("permeability_file") {
        Some(f) => per_cell_csv(base, s.key("permeability_file"), &f, n, 3)?
            .into_iter()
            .map(|r| {
                if r.len() == 1 {
                    Point::repeat(r[0])
                } else {
                    Point::new(r[0], r[1], r[2])
                }
            })
            .collect(),
        None => vec![Point::repeat(s.require::<f64>("permeability")?); n],
    };
    if s.has("porosity_file") && s.has("porosity") {
        return Err(Error::config(
            s.key("porosity"),
            "give either porosity or porosity_file",
        ));
    }
    if s.has("permeability_file") && s.has("permeability") {
        return Err(Error::config(
            s.key("permeability"),
            "give either permeability or permeability_file",
        ));
    }
    Ok(RockProperties {
        porosity,
        permeability,
        compressibility: s.get("compressibility", 0.0)? / BAR,
        p_ref: s.get("reference_pressure", 0.0)? * BAR,
    })
}

fn phase(s: &mut Section, name: &str, density: f64) -> Result<PhaseProps> {
    let k = |f: &str| format!("{name}_{f}");
    Ok(PhaseProps {
        viscosity: s.require::<f64>(&k("viscosity"))? * CENTIPOISE,
        viscosity_compressibility: s.get(&k("viscosibility"), 0.0)? / BAR,
        b_ref: s.get(&k("b_ref"), 1.0)?,
        compressibility: s.get(&k("compressibility"), 0.0)? / BAR,
        surface_density: s.get(&k("density"), density)?,
        residual_saturation: s.get(&k("residual"), 0.0)?,
        corey_exponent: s.get(&k("corey"), 2.0)?,
    })
}

struct FluidInit {
    fluid: FluidModel,
    saturation: Vec<f64>,
    pressure: Vec<f64>,
}

fn fluid_section(s: &mut Section, base: &Path, n: usize) -> Result<FluidInit> {
    let mut fluid = FluidModel::new(phase(s, "water", 1000.0)?, phase(s, "oil", 800.0)?);
    fluid.p_ref = s.get("reference_pressure", 0.0)? * BAR;
    let saturation = match s.raw("initial_saturation_file") {
        Some(f) => per_cell_csv(base, s.key("initial_saturation_file"), &f, n, 1)?
            .into_iter()
            .map(|r| r[0])
            .collect(),
        None => vec![s.get("initial_saturation", fluid.water.residual_saturation)?; n],
    };
    let pressure = vec![s.require::<f64>("initial_pressure")? * BAR; n];
    Ok(FluidInit {
        fluid,
        saturation,
        pressure,
    })
}

fn parse_control(key: String, kind: &str, value: f64) -> Result<WellControl> {
    match kind {
        "bhp" => Ok(WellControl::Bhp(value * BAR)),
        "rate" => Ok(WellControl::Rate(value)),
        other => Err(Error::config(
            key,
            format!("control must be bhp or rate, got `{other}`"),
        )),
    }
}

/// Wells are flat keys `NAME.field` in the `[wells]` section.
fn wells_section(s: &mut Section, mesh: &PolyMesh, rock: &RockProperties) -> Result<Vec<WellSpec>> {
    let mut names: Vec<String> = Vec::new();
    for k in s.values.keys() {
        let Some((name, _)) = k.split_once('.') else {
            return Err(Error::config(
                s.key(k),
                "well keys have the form NAME.field",
            ));
        };
        if !names.iter().any(|n| n == name) {
            names.push(name.to_string());
        }
    }
    let mut wells = Vec::new();
    for name in names {
        let f = |field: &str| format!("{name}.{field}");
        let cells: Vec<usize> = s
            .list(&f("cells"))?
            .ok_or_else(|| Error::config(s.key(&f("cells")), "required key is missing"))?;
        if let Some(&c) = cells.iter().find(|&&c| c >= mesh.num_cells()) {
            return Err(Error::config(
                s.key(&f("cells")),
                format!("cell {c} out of range"),
            ));
        }
        let radius: f64 = s.get(&f("radius"), 0.1)?;
        let skin: f64 = s.get(&f("skin"), 0.0)?;
        let wi: Option<f64> = s.parse(&f("wi"))?;
        let completions = cells
            .iter()
            .map(|&cell| Completion {
                cell,
                wi: wi.unwrap_or_else(|| peaceman_wi(mesh, rock, cell, radius, skin)),
            })
            .collect();
        let kind: String = s.require(&f("control"))?;
        let value: f64 = match kind.as_str() {
            "bhp" => s.require(&f("bhp"))?,
            _ => s.require(&f("rate"))?,
        };
        let control = parse_control(s.key(&f("control")), kind.trim(), value)?;
        wells.push(WellSpec {
            name: name.clone(),
            completions,
            control,
            injected_water_fraction: s.get(&f("water_fraction"), 1.0)?,
        });
    }
    Ok(wells)
}

fn schedule_section(s: &mut Section) -> Result<Schedule> {
    let report_times: Vec<f64> = match s.list("report_times")? {
        Some(t) => t,
        None => {
            let end: f64 = s.require("end_time")?;
            let count: usize = s.get("report_count", 1)?;
            if count == 0 {
                return Err(Error::config(s.key("report_count"), "must be at least 1"));
            }
            (1..=count).map(|k| end * k as f64 / count as f64).collect()
        }
    };
    let initial_dt: f64 = s.require("initial_dt")?;
    let mut sched = Schedule::new(report_times, initial_dt);
    sched.min_dt = s.get("min_dt", sched.min_dt)?;
    sched.max_dt = s.get("max_dt", sched.max_dt)?;
    sched.growth = s.get("growth", sched.growth)?;
    sched.cut = s.get("cut", sched.cut)?;
    let keys: Vec<String> = s
        .values
        .keys()
        .filter(|k| k.starts_with("control_change"))
        .cloned()
        .collect();
    for k in keys {
        let v = s.raw(&k).unwrap_or_default();
        let parts: Vec<&str> = split_list(&v).collect();
        let [time, well, kind, value] = parts[..] else {
            return Err(Error::config(
                s.key(&k),
                "expected `time well bhp|rate value`",
            ));
        };
        let bad = |what: &str| Error::config(s.key(&k), format!("cannot parse {what}"));
        let time: f64 = time.parse().map_err(|_| bad("time"))?;
        let value: f64 = value.parse().map_err(|_| bad("value"))?;
        sched.control_changes.push(ControlChange {
            time,
            well: well.to_string(),
            control: parse_control(s.key(&k), kind, value)?,
        });
    }
    sched
        .control_changes
        .sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(sched)
}

struct SolverSettings {
    mode: SolverMode,
    transport: TransportParams,
    pressure: PressureConfig,
    gravity: bool,
    capillary: Option<CapillaryTable>,
}

fn solver_section(s: &mut Section, base: &Path) -> Result<SolverSettings> {
    let mode = match s.raw("mode") {
        Some(m) => m
            .trim()
            .parse()
            .map_err(|e: String| Error::config(s.key("mode"), e))?,
        None => SolverMode::Reordered,
    };
    let d = TransportParams::default();
    let transport = TransportParams {
        degree: s.get("degree", d.degree)?,
        block_size: s.get("block_size", d.block_size)?,
        tolerance: s.get("tolerance", d.tolerance)?,
        max_iterations: s.get("max_iterations", d.max_iterations)?,
        global_max_iterations: s.get("global_max_iterations", d.global_max_iterations)?,
        max_sweeps: s.get("max_sweeps", d.max_sweeps)?,
        max_update: s.get("max_update", d.max_update)?,
        jump_tolerance: s.get("jump_tolerance", d.jump_tolerance)?,
        epsilon: s.get("epsilon", d.epsilon)?,
        order_reduction: s.flag("order_reduction", d.order_reduction)?,
        graph_passes: s.get("graph_passes", d.graph_passes)?,
    };
    let p = PressureConfig::default();
    let pressure = PressureConfig {
        tolerance: s.get("pressure_tolerance", p.tolerance)?,
        max_iterations: s.get("pressure_max_iterations", p.max_iterations)?,
    };
    if !(pressure.tolerance > 0.0) {
        return Err(Error::config(
            s.key("pressure_tolerance"),
            "must be positive",
        ));
    }
    let capillary = match s.raw("capillary_table") {
        Some(f) => {
            let key = s.key("capillary_table");
            let (_, text) = read_file(base, key.clone(), &f)?;
            Some(CapillaryTable::from_csv(&text).map_err(|e| Error::config(key, e.to_string()))?)
        }
        None => None,
    };
    Ok(SolverSettings {
        mode,
        transport,
        pressure,
        gravity: s.flag("gravity", false)?,
        capillary,
    })
}

/// Standard gravitational acceleration used when `solver.gravity = on`.
pub const GRAVITY: f64 = 9.80665;

/// Parses a case from text; relative file paths resolve against `base`.
pub fn parse_case(text: &str, base: &Path) -> Result<Case> {
    let mut secs = read_sections(text)?;
    let [mesh_s, rock_s, fluid_s, wells_s, sched_s, solver_s] = &mut secs[..] else {
        unreachable!()
    };
    let mesh = mesh_section(mesh_s, base)?;
    let n = mesh.num_cells();
    let rock = rock_section(rock_s, base, n)?;
    let init = fluid_section(fluid_s, base, n)?;
    let wells = wells_section(wells_s, &mesh, &rock)?;
    let schedule = schedule_section(sched_s)?;
    let solver = solver_section(solver_s, base)?;
    for s in &secs {
        s.finish()?;
    }
    let mut fluid = init.fluid;
    fluid.gravity = if solver.gravity { GRAVITY } else { 0.0 };
    fluid.capillary = solver.capillary;
    let case = Case {
        mesh,
        rock,
        fluid,
        wells,
        schedule,
        transport: solver.transport,
        pressure: solver.pressure,
        mode: solver.mode,
        initial_saturation: init.saturation,
        initial_pressure: init.pressure,
    };
    case.validate()?;
    Ok(case)
}

pub fn load_case(path: impl AsRef<Path>) -> Result<Case> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("case", format!("cannot read {}: {e}", path.display())))?;
    parse_case(&text, path.parent().unwrap_or(Path::new(".")))
}
