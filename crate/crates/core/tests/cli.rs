//! End-to-end runs of the command-line front end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use superfock::states::DensityCoefficients;
use tempfile::TempDir;

fn superfock(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_superfock")).args(args).current_dir(dir).env_remove("SUPERFOCK_THREADS").output().unwrap()
}

fn run_config(dir: &Path, text: &str) -> Output {
    fs::write(dir.join("run.cfg"), text).unwrap();
    superfock(&["run", "run.cfg", "--out-dir", "out"], dir)
}

/// Column names and rows of an output table.
fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut columns = Vec::new();
    let mut rows = Vec::new();
    for line in text.lines() {
        if let Some(c) = line.strip_prefix("# columns: ") {
            columns = c.split(',').map(String::from).collect();
        } else if !line.starts_with('#') {
            rows.push(line.split(',').map(|x| x.parse().unwrap()).collect());
        }
    }
    (columns, rows)
}

fn column(table: &(Vec<String>, Vec<Vec<f64>>), name: &str) -> Vec<f64> {
    let k = table.0.iter().position(|c| c == name).unwrap_or_else(|| panic!("no column {name}"));
    table.1.iter().map(|r| r[k]).collect()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn single_atom_decay_csv() {
    let dir = TempDir::new().unwrap();
    let out = run_config(dir.path(), "scenario = compact\ncompact.N = 1\ncompact.p2 = 1\ntime.t_max = 5\ntime.points = 51\n");
    ok(&out);
    let table = read_table(&dir.path().join("out/compact.csv"));
    assert_eq!(table.0, ["t", "p1", "p2", "intensity"]);
    assert_eq!(table.1.len(), 51);
    for (t, p) in column(&table, "t").iter().zip(column(&table, "p2")) {
        assert!((p - (-t).exp()).abs() < 1e-6, "t = {t}");
    }
    let text = fs::read_to_string(dir.path().join("out/compact.csv")).unwrap();
    assert!(text.starts_with("# superfock "));
    assert!(text.contains("# config: compact.N = 1\n"));
    assert!(text.contains("# config: integrator.method = "));
}

#[test]
fn excitation_sweep_peaks_decrease() {
    let dir = TempDir::new().unwrap();
    let out = run_config(dir.path(), "scenario = compact\ncompact.N = 12\ncompact.p2 = 1.0, 0.8, 0.5\ntime.t_max = 3\n");
    ok(&out);
    let peaks: Vec<f64> = ["1.0", "0.8", "0.5"]
        .iter()
        .map(|label| {
            let table = read_table(&dir.path().join(format!("out/compact_p2_{label}.csv")));
            column(&table, "intensity").into_iter().fold(0.0, f64::max)
        })
        .collect();
    assert!(peaks[0] > peaks[1] && peaks[1] > peaks[2], "{peaks:?}");
}

#[test]
fn spectrum_and_snapshot_files() {
    let dir = TempDir::new().unwrap();
    let cfg = "scenario = compact\ncompact.N = 3\ncompact.p2 = 0.5\ntime.t_max = 2\n\
               spectrum.enabled = true\nspectrum.t_max = 4\nspectrum.t_points = 41\nspectrum.tau_max = 4\n\
               spectrum.tau_points = 41\nspectrum.omega_points = 21\noutput.snapshot = true\noutput.prefix = demo\n";
    ok(&run_config(dir.path(), cfg));
    let spec = read_table(&dir.path().join("out/demo_spectrum.csv"));
    assert_eq!(spec.0, ["omega", "S", "S_normalized"]);
    assert_eq!(spec.1.len(), 21);
    let top = column(&spec, "S_normalized").into_iter().fold(f64::MIN, f64::max);
    assert!((top - 1.0).abs() < 1e-12);
    let snap = fs::read_to_string(dir.path().join("out/demo_final.state")).unwrap();
    let rho = DensityCoefficients::from_snapshot(&snap).unwrap();
    assert_eq!(rho.time(), 2.0);
    assert!((rho.trace() - 1.0).abs() < 1e-8);
}

#[test]
fn cavity_conserved_columns() {
    let dir = TempDir::new().unwrap();
    let out = run_config(dir.path(), "scenario = tcm\ntcm.N = 4\ntcm.p2 = 0.5\ntcm.field = fock:10\ntime.t_max = 3\ntime.points = 31\n");
    ok(&out);
    let table = read_table(&dir.path().join("out/tcm.csv"));
    for name in ["K1", "K2", "trace", "excitations"] {
        let c = column(&table, name);
        for x in &c {
            assert!((x - c[0]).abs() < 1e-9, "{name} drifts");
        }
    }
    assert!((column(&table, "trace")[0] - 1.0).abs() < 1e-12);
}

#[test]
fn lambda_without_pump_stays_put() {
    let dir = TempDir::new().unwrap();
    ok(&run_config(dir.path(), "scenario = lambda\nlambda.N = 3\nlambda.ip = 0\nlambda.gamma = 5\ntime.points = 11\n"));
    let table = read_table(&dir.path().join("out/lambda.csv"));
    for (p0, photons) in column(&table, "p0").iter().zip(column(&table, "photons")) {
        assert_eq!(*p0, 1.0);
        assert_eq!(photons, 0.0);
    }
}

#[test]
fn output_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = "scenario = compact\ncompact.N = 8\ncompact.p2 = 0.9, 0.4\n";
    ok(&run_config(dir.path(), cfg));
    let first: Vec<Vec<u8>> = ["compact_p2_0.9.csv", "compact_p2_0.4.csv"].iter().map(|f| fs::read(dir.path().join("out").join(f)).unwrap()).collect();
    fs::write(dir.path().join("run.cfg"), cfg).unwrap();
    ok(&superfock(&["run", "run.cfg", "--out-dir", "again", "--threads", "1"], dir.path()));
    for (name, bytes) in ["compact_p2_0.9.csv", "compact_p2_0.4.csv"].iter().zip(&first) {
        assert_eq!(&fs::read(dir.path().join("again").join(name)).unwrap(), bytes, "{name}");
    }
}

#[test]
fn validate_reports_problems() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("good.cfg"), "scenario = tcm\ntcm.N = 2\n").unwrap();
    let out = superfock(&["validate", "good.cfg"], dir.path());
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("tcm scenario"));

    fs::write(dir.path().join("bad.cfg"), "scenario = compact\ncompact.N = 4\ncompact.p3 = 1\n").unwrap();
    let out = superfock(&["validate", "bad.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let out = superfock(&["validate", "missing.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exit_code() {
    let dir = TempDir::new().unwrap();
    let out = run_config(dir.path(), "scenario = compact\ncompact.N = 10\ncompact.p2 = 1\nintegrator.method = rk4\nintegrator.step = 1\ntime.points = 3\n");
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.path().join("out/compact.csv").exists());
}
