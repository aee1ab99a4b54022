use std::path::Path;
use std::process::Command;

const CASE: &str = "
[mesh]
nx = 5
ny = 5
lx = 50
ly = 50

[rock]
porosity = 0.2
permeability = 1e-13
compressibility = 1e-4
reference_pressure = 200

[fluid]
water_viscosity = 1
oil_viscosity = 3
water_residual = 0.2
oil_residual = 0.2
water_compressibility = 4e-5
oil_compressibility = 1e-4
reference_pressure = 200
initial_pressure = 200

[wells]
INJ.cells = 0
INJ.control = rate
INJ.rate = 1e-4
PROD.cells = 24
PROD.control = bhp
PROD.bhp = 200
PROD.water_fraction = 0

[schedule]
end_time = 864000
report_count = 2
initial_dt = 86400

[solver]
degree = 0
";

fn seqflow(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_seqflow"))
        .args(args)
        .output()
        .unwrap()
}

fn write_case(dir: &Path, text: &str) -> String {
    let path = dir.join("case.ini");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_writes_csv_and_vtk() {
    let dir = tempfile::tempdir().unwrap();
    let case = write_case(dir.path(), CASE);
    let out = dir.path().join("out");
    let o = seqflow(&[
        "run",
        &case,
        "--out",
        out.to_str().unwrap(),
        "--degree",
        "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("# seqflow report v1\nstep,time_s"));
    assert!(csv.lines().nth(1).unwrap().contains("PROD_water_cut"));
    for k in 0..3 {
        let vtk = std::fs::read_to_string(out.join(format!("snapshot_{k:04}.vtk"))).unwrap();
        assert!(vtk.contains("CELL_TYPES 25"));
    }
    let vtk = std::fs::read_to_string(out.join("snapshot_0002.vtk")).unwrap();
    assert!(
        vtk.contains("SCALARS degree int 1\nLOOKUP_TABLE default\n1\n") || vtk.contains("\n0\n")
    );
}

#[test]
fn compare_mode_fills_discrepancy_column() {
    let dir = tempfile::tempdir().unwrap();
    let case = write_case(dir.path(), CASE);
    let out = dir.path().join("out");
    let o = seqflow(&[
        "run",
        &case,
        "--out",
        out.to_str().unwrap(),
        "--mode",
        "compare",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let mut lines = csv.lines().skip(1);
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|&h| h == "discrepancy").unwrap();
    for row in lines {
        let v: f64 = row.split(',').nth(col).unwrap().parse().unwrap();
        assert!(v <= 1e-7);
    }
}

#[test]
fn missing_mesh_file_exits_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let text = CASE.replace(
        "nx = 5\nny = 5\nlx = 50\nly = 50",
        "type = file\npath = no_such.mesh",
    );
    let case = write_case(dir.path(), &text);
    let o = seqflow(&[
        "run",
        &case,
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such.mesh"));
}

#[test]
fn unknown_key_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let case = write_case(dir.path(), &CASE.replace("degree = 0", "degre = 0"));
    let o = seqflow(&["run", &case]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("solver.degre"));
}

#[test]
fn numerical_abort_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let text = CASE
        .replace(
            "degree = 0",
            "degree = 0\nmax_iterations = 1\nmax_update = 0.001",
        )
        .replace("initial_dt = 86400", "initial_dt = 86400\nmin_dt = 43200");
    let case = write_case(dir.path(), &text);
    let o = seqflow(&[
        "run",
        &case,
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}
