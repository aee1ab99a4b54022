//! Shared oracles, random geometry and case builders for the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use seqflow::driver::{Case, Schedule, SolverMode};
use seqflow::mesh::{build_cartesian_2d, Point, PolyMesh};
use seqflow::petro::{FluidModel, PhaseProps, RockProperties};
use seqflow::pressure::{peaceman_wi, Completion, PressureConfig, WellControl, WellSpec};
use seqflow::transport::TransportParams;
use seqflow::units::{BAR, CENTIPOISE, DAY, MILLIDARCY};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- geometry

/// Exact integral of `x^a` (multi-index, total degree <= 2) over a simplex.
pub fn simplex_moment(s: &[Point], alpha: [usize; 3], volume: f64) -> f64 {
    let d = s.len() - 1;
    let idx: Vec<usize> = (0..3)
        .flat_map(|i| std::iter::repeat(i).take(alpha[i]))
        .collect();
    match idx[..] {
        [] => volume,
        [i] => volume * s.iter().map(|v| v[i]).sum::<f64>() / (d + 1) as f64,
        [i, j] => {
            let cross: f64 = s.iter().map(|v| v[i] * v[j]).sum();
            let si: f64 = s.iter().map(|v| v[i]).sum();
            let sj: f64 = s.iter().map(|v| v[j]).sum();
            volume * (cross + si * sj) / ((d + 1) * (d + 2)) as f64
        }
        _ => panic!("degree > 2"),
    }
}

pub fn simplex_volume(s: &[Point]) -> f64 {
    if s.len() == 3 {
        let (a, b) = (s[1] - s[0], s[2] - s[0]);
        0.5 * (a.x * b.y - a.y * b.x).abs()
    } else {
        (s[1] - s[0])
            .cross(&(s[2] - s[0]))
            .dot(&(s[3] - s[0]))
            .abs()
            / 6.0
    }
}

/// Monomial exponents of total degree <= 2 in `dim` variables.
pub fn monomials(dim: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for a in 0..=2 {
        for b in 0..=2 - a {
            for c in 0..=2 - a - b {
                if dim == 2 && c > 0 {
                    continue;
                }
                out.push([a, b, c]);
            }
        }
    }
    out
}

pub fn monomial(x: &Point, a: [usize; 3]) -> f64 {
    x.x.powi(a[0] as i32) * x.y.powi(a[1] as i32) * x.z.powi(a[2] as i32)
}

/// One-cell mesh of a random convex polygon with 3 to 12 vertices.
pub fn random_convex_polygon(rng: &mut ChaCha8Rng) -> PolyMesh {
    let n = rng.random_range(3..=12);
    let mut angles: Vec<f64> = (0..n)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    angles.sort_by(f64::total_cmp);
    // random affine map keeps convexity and orientation
    let (sx, sy, sh) = (
        rng.random_range(0.2..3.0),
        rng.random_range(0.2..3.0),
        rng.random_range(-1.0..1.0),
    );
    let (ox, oy) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
    let verts: Vec<Point> = angles
        .iter()
        .map(|&t| Point::new(ox + sx * t.cos() + sh * t.sin(), oy + sy * t.sin(), 0.0))
        .collect();
    let faces = (0..n).map(|k| (vec![k, (k + 1) % n], 0, None)).collect();
    PolyMesh::from_topology(2, verts, faces, vec![(0..n).collect()]).unwrap()
}

/// Brute-force convex hull of points in general position: every triple whose
/// plane has all remaining points on one side is a face, oriented outward.
pub fn convex_hull_faces(pts: &[Point]) -> Vec<Vec<usize>> {
    let n = pts.len();
    let mut faces = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                let nrm = (pts[b] - pts[a]).cross(&(pts[c] - pts[a]));
                let side: Vec<f64> = (0..n)
                    .filter(|&k| k != a && k != b && k != c)
                    .map(|k| nrm.dot(&(pts[k] - pts[a])))
                    .collect();
                if side.iter().all(|&s| s < 0.0) {
                    faces.push(vec![a, b, c]);
                } else if side.iter().all(|&s| s > 0.0) {
                    faces.push(vec![a, c, b]);
                }
            }
        }
    }
    faces
}

/// One-cell mesh of a random convex polyhedron: hull of 4 to 12 points on a
/// stretched sphere.
pub fn random_convex_polyhedron(rng: &mut ChaCha8Rng) -> PolyMesh {
    let n = rng.random_range(4..=12);
    let scale = Point::new(
        rng.random_range(0.3..3.0),
        rng.random_range(0.3..3.0),
        rng.random_range(0.3..3.0),
    );
    let offset = Point::new(
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
    );
    loop {
        let pts: Vec<Point> = (0..n)
            .map(|_| {
                let v = Point::new(
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                );
                offset + v.normalize().component_mul(&scale)
            })
            .collect();
        let faces = convex_hull_faces(&pts);
        // skip degenerate draws (flat hulls)
        if faces.len() < 4 {
            continue;
        }
        let nf = faces.len();
        let topo = faces.into_iter().map(|f| (f, 0, None)).collect();
        if let Ok(m) = PolyMesh::from_topology(3, pts, topo, vec![(0..nf).collect()]) {
            return m;
        }
    }
}

/// Clips a convex CCW polygon by the half-plane `(x - p) . nrm <= 0`.
fn clip(poly: &[Point], p: &Point, nrm: &Point) -> Vec<Point> {
    let mut out = Vec::new();
    for k in 0..poly.len() {
        let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
        let (da, db) = ((a - p).dot(nrm), (b - p).dot(nrm));
        if da <= 0.0 {
            out.push(a);
        }
        if (da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0) {
            out.push(a + (b - a) * (da / (da - db)));
        }
    }
    out
}

/// Voronoi mesh of `n` random sites in `[0, lx] x [0, ly]` built by clipping
/// the box with bisector half-planes.
pub fn voronoi_mesh(n: usize, lx: f64, ly: f64, rng: &mut ChaCha8Rng) -> PolyMesh {
    let sites: Vec<Point> = (0..n)
        .map(|_| Point::new(rng.random_range(0.0..lx), rng.random_range(0.0..ly), 0.0))
        .collect();
    let boxp = vec![
        Point::new(0.0, 0.0, 0.0),
        Point::new(lx, 0.0, 0.0),
        Point::new(lx, ly, 0.0),
        Point::new(0.0, ly, 0.0),
    ];
    let tol = 1e-9 * lx.max(ly);
    let mut verts: Vec<Point> = Vec::new();
    let key = |p: &Point| ((p.x / tol).round() as i64, (p.y / tol).round() as i64);
    let mut vmap: HashMap<(i64, i64), usize> = HashMap::new();
    let mut cell_loops = Vec::with_capacity(n);
    for (i, s) in sites.iter().enumerate() {
        let mut poly = boxp.clone();
        for (j, t) in sites.iter().enumerate() {
            if i != j {
                poly = clip(&poly, &(0.5 * (s + t)), &(t - s));
            }
        }
        let mut ids: Vec<usize> = Vec::new();
        for p in &poly {
            let id = *vmap.entry(key(p)).or_insert_with(|| {
                verts.push(*p);
                verts.len() - 1
            });
            if ids.last() != Some(&id) && ids.first() != Some(&id) {
                ids.push(id);
            }
        }
        cell_loops.push(ids);
    }
    let mut faces: Vec<(Vec<usize>, usize, Option<usize>)> = Vec::new();
    let mut edge_face: HashMap<(usize, usize), usize> = HashMap::new();
    let mut cell_faces = vec![Vec::new(); n];
    for (c, lp) in cell_loops.iter().enumerate() {
        for k in 0..lp.len() {
            let (a, b) = (lp[k], lp[(k + 1) % lp.len()]);
            match edge_face.get(&(b, a)) {
                Some(&f) => {
                    faces[f].2 = Some(c);
                    cell_faces[c].push(f);
                }
                None => {
                    edge_face.insert((a, b), faces.len());
                    cell_faces[c].push(faces.len());
                    faces.push((vec![a, b], c, None));
                }
            }
        }
    }
    PolyMesh::from_topology(2, verts, faces, cell_faces).expect("valid Voronoi mesh")
}

// ---------------------------------------------------------------- cases

pub fn corey_fluid(mu_w_cp: f64, mu_o_cp: f64, residual: f64) -> FluidModel {
    FluidModel::new(
        PhaseProps::new(mu_w_cp * CENTIPOISE, 1000.0, residual, 2.0),
        PhaseProps::new(mu_o_cp * CENTIPOISE, 850.0, residual, 2.0),
    )
}

/// Weak compressibility around `p_ref` (bar).
pub fn make_compressible(rock: &mut RockProperties, fluid: &mut FluidModel, p_ref: f64) {
    rock.compressibility = 1e-5 / BAR;
    rock.p_ref = p_ref * BAR;
    fluid.water.compressibility = 4e-5 / BAR;
    fluid.oil.compressibility = 1e-4 / BAR;
    fluid.p_ref = p_ref * BAR;
}

fn well(
    name: &str,
    mesh: &PolyMesh,
    rock: &RockProperties,
    cell: usize,
    control: WellControl,
    fw: f64,
) -> WellSpec {
    WellSpec {
        name: name.into(),
        completions: vec![Completion {
            cell,
            wi: peaceman_wi(mesh, rock, cell, 0.1, 0.0),
        }],
        control,
        injected_water_fraction: fw,
    }
}

fn uniform_schedule(end: f64, steps: usize, reports: usize) -> Schedule {
    let dt = end / steps as f64;
    let mut s = Schedule::new(
        (1..=reports)
            .map(|k| end * k as f64 / reports as f64)
            .collect(),
        dt,
    );
    s.max_dt = dt;
    s.growth = 1.0;
    s
}

/// Quarter five-spot on a 20 x 20 grid with log-normal permeability.
pub fn five_spot(degree: usize, block_size: usize, mode: SolverMode) -> Case {
    let n = 20;
    let mesh = build_cartesian_2d(n, n, 200.0, 200.0).unwrap();
    let nc = mesh.num_cells();
    let mut r = rng(20);
    let mut rock = RockProperties::uniform(nc, 0.2, 100.0 * MILLIDARCY);
    for k in rock.permeability.iter_mut() {
        let z: f64 = r.sample(StandardNormal);
        *k = Point::repeat(100.0 * MILLIDARCY * z.exp());
    }
    let mut fluid = corey_fluid(1.0, 5.0, 0.2);
    make_compressible(&mut rock, &mut fluid, 200.0);
    let pv = 0.2 * 200.0 * 200.0;
    let end = 200.0 * DAY;
    let wells = vec![
        well(
            "INJ",
            &mesh,
            &rock,
            0,
            WellControl::Rate(0.5 * pv / end),
            1.0,
        ),
        well(
            "PROD",
            &mesh,
            &rock,
            nc - 1,
            WellControl::Bhp(200.0 * BAR),
            0.0,
        ),
    ];
    Case {
        transport: TransportParams {
            degree,
            block_size,
            ..Default::default()
        },
        pressure: PressureConfig::default(),
        schedule: uniform_schedule(end, 40, 10),
        mode,
        initial_saturation: vec![0.2; nc],
        initial_pressure: vec![200.0 * BAR; nc],
        mesh,
        rock,
        fluid,
        wells,
    }
}

/// Center line of the `k`-th sinuous channel at abscissa `x` in `[0, 1]`.
fn channel_center(k: usize, x: f64) -> f64 {
    let base = [0.2, 0.5, 0.8][k];
    let (amp, waves, phase) = [(0.08, 1.5, 0.0), (0.12, 1.0, 1.0), (0.06, 2.0, 2.5)][k];
    base + amp * (std::f64::consts::TAU * waves * x + phase).sin()
}

/// 60 x 60 layer with three sinuous high-permeability channels on a
/// low-permeability background. Water is injected at the left end of the
/// middle channel and produced at its right end; 0.2 pore volumes in total.
pub fn channel(degree: usize, mode: SolverMode, steps: usize) -> Case {
    let n = 60;
    let len = 600.0;
    let mesh = build_cartesian_2d(n, n, len, len).unwrap();
    let nc = mesh.num_cells();
    let mut r = rng(60);
    let width = 0.045;
    let mut rock = RockProperties::uniform(nc, 0.1, MILLIDARCY);
    for c in 0..nc {
        let x = mesh.cells[c].centroid / len;
        let in_channel = (0..3).any(|k| (x.y - channel_center(k, x.x)).abs() < width);
        let z: f64 = r.sample(StandardNormal);
        let (phi, k) = if in_channel {
            (0.25, 1000.0)
        } else {
            (0.1, 2.0)
        };
        rock.porosity[c] = phi;
        rock.permeability[c] = Point::repeat(k * MILLIDARCY * (0.5 * z).exp());
    }
    // incompressible: with any compressibility the pressure transient keeps
    // every pore volume, and hence every residual, moving at each step
    let fluid = corey_fluid(2.85, 3.0, 0.2);
    let pv: f64 = (0..nc)
        .map(|c| rock.porosity[c] * mesh.cells[c].volume)
        .sum();
    let cell_at = |x: f64, y: f64| {
        let (i, j) = ((x * n as f64) as usize, (y * n as f64) as usize);
        i.min(n - 1) + n * j.min(n - 1)
    };
    let inj = cell_at(0.5 / n as f64, channel_center(1, 0.0));
    let prod = cell_at(1.0 - 0.5 / n as f64, channel_center(1, 1.0));
    let end = 500.0 * DAY;
    let wells = vec![
        well(
            "INJ",
            &mesh,
            &rock,
            inj,
            WellControl::Rate(0.2 * pv / end),
            1.0,
        ),
        well(
            "PROD",
            &mesh,
            &rock,
            prod,
            WellControl::Bhp(275.0 * BAR),
            0.0,
        ),
    ];
    Case {
        transport: TransportParams {
            degree,
            ..Default::default()
        },
        pressure: PressureConfig::default(),
        schedule: uniform_schedule(end, steps, 5),
        mode,
        initial_saturation: vec![0.2; nc],
        initial_pressure: vec![300.0 * BAR; nc],
        mesh,
        rock,
        fluid,
        wells,
    }
}

/// Incompressible 1D displacement on `n` cells over 100 m; 1.2 pore volumes
/// are injected over `steps` equal steps. Reports every 0.05 PV.
pub fn buckley_leverett(n: usize, degree: usize, steps: usize) -> Case {
    let mesh = build_cartesian_2d(n, 1, 100.0, 1.0).unwrap();
    let rock = RockProperties::uniform(n, 0.2, 1000.0 * MILLIDARCY);
    let fluid = corey_fluid(2.85, 3.0, 0.2);
    let pv = 0.2 * 100.0;
    let end = 100.0 * DAY;
    let rate = 1.2 * pv / end;
    let wells = vec![
        WellSpec {
            name: "INJ".into(),
            completions: vec![Completion { cell: 0, wi: 1e-10 }],
            control: WellControl::Rate(rate),
            injected_water_fraction: 1.0,
        },
        WellSpec {
            name: "PROD".into(),
            completions: vec![Completion {
                cell: n - 1,
                wi: 1e-10,
            }],
            control: WellControl::Bhp(100.0 * BAR),
            injected_water_fraction: 0.0,
        },
    ];
    Case {
        transport: TransportParams {
            degree,
            ..Default::default()
        },
        pressure: PressureConfig::default(),
        schedule: uniform_schedule(end, steps, 24),
        mode: SolverMode::Reordered,
        initial_saturation: vec![0.2; n],
        initial_pressure: vec![100.0 * BAR; n],
        mesh,
        rock,
        fluid,
        wells,
    }
}

/// Vertical column of `n` cells (10 m), water above oil, no wells.
pub fn gravity_column(n: usize, mode: SolverMode, end_days: f64, steps: usize) -> Case {
    let mesh = build_cartesian_2d(1, n, 1.0, 10.0).unwrap();
    let mut rock = RockProperties::uniform(n, 0.2, 1000.0 * MILLIDARCY);
    let mut fluid = corey_fluid(1.0, 3.0, 0.2);
    fluid.gravity = 9.80665;
    make_compressible(&mut rock, &mut fluid, 100.0);
    let sat = (0..n).map(|c| if c >= n / 2 { 0.8 } else { 0.2 }).collect();
    Case {
        transport: TransportParams::default(),
        pressure: PressureConfig::default(),
        schedule: uniform_schedule(end_days * DAY, steps, 5),
        mode,
        initial_saturation: sat,
        initial_pressure: vec![100.0 * BAR; n],
        mesh,
        rock,
        fluid,
        wells: Vec::new(),
    }
}
