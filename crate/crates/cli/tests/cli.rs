use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const LAMBDA: f64 = 0.8316;

fn kho(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kho")).args(args).output().expect("failed to spawn kho")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn key_values(text: &str) -> HashMap<String, String> {
    text.lines().filter_map(|l| l.split_once('=')).map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn float(map: &HashMap<String, String>, key: &str) -> f64 {
    map.get(key).unwrap_or_else(|| panic!("missing {key}")).parse().unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn help_and_version() {
    let o = kho(&["--help"]);
    assert!(o.status.success());
    for sub in ["evolve", "sweep", "oracle-check", "info"] {
        assert!(stdout(&o).contains(sub), "{sub} missing from help");
    }
    let o = kho(&["--version"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("kho "));
}

#[test]
fn evolve_without_eta_is_a_usage_error() {
    let o = kho(&["evolve", "--D", "4e-3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn evolve_rejects_invalid_values_with_error_line() {
    let o = kho(&["evolve", "--eta", "-0.1", "--D", "1e-3"]);
    assert_eq!(o.status.code(), Some(2));
    let line = stderr(&o).lines().last().unwrap().to_string();
    assert!(line.starts_with("error kind=config msg="), "{line}");

    let o = kho(&["evolve", "--eta", "0.125", "--D", "-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn grid_too_coarse_is_a_physics_error() {
    let o = kho(&["oracle-check", "--eta", "0.125", "--grid-n", "64", "--grid-l", "4"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("kind=grid_too_coarse"), "{}", stderr(&o));
}

#[test]
fn evolve_lyapunov_point_recovers_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("series.csv");
    let o =
        kho(&["evolve", "--eta", "0.125", "--D", "4e-3", "--K", "2", "--kicks", "8", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = key_values(&stdout(&o));
    for key in ["gamma_q", "gamma_cl"] {
        let g = float(&summary, key);
        assert!((g - LAMBDA).abs() < 0.15 * LAMBDA, "{key} = {g}");
    }
    assert_eq!(summary["status"], "ok");
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "n,s_quantum,s_classical,purity_q,purity_cl,negativity,l1_dist,boundary_mass"
    );
    assert_eq!(csv.lines().count(), 10);
}

#[test]
fn evolve_unitary_keeps_entropy_at_zero() {
    let o = kho(&["evolve", "--eta", "0.5", "--D", "0", "--K", "2", "--kicks", "6"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = column(&stdout(&o), "s_quantum");
    assert_eq!(s.len(), 7);
    assert!(s.iter().all(|v| v.abs() < 1e-4), "{s:?}");
}

#[test]
fn evolve_writes_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("series.csv");
    let snaps = dir.path().join("snaps");
    let o = kho(&[
        "evolve",
        "--eta",
        "0.5",
        "--D",
        "1e-2",
        "--kicks",
        "3",
        "--grid-n",
        "256",
        "--out",
        out.to_str().unwrap(),
        "--snapshot-kick",
        "2",
        "--slice-q",
        "-2",
        "--output-dir",
        snaps.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = key_values(&stdout(&o));
    let meta = Path::new(&summary["snapshot"]);
    assert!(meta.exists());
    assert!(meta.with_extension("f64").exists());
    let slice = fs::read_to_string(snaps.join("eta0.5_D0.01_n2_slice.csv")).unwrap();
    let q: f64 = slice.lines().next().unwrap().strip_prefix("# q = ").unwrap().parse().unwrap();
    let spacing = 2.0 * 4.0 * std::f64::consts::PI / 256.0;
    assert!((q + 2.0).abs() <= spacing / 2.0, "{q}");
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("sweep.toml");
    let text = format!(
        "K = 2.0\neta = [0.5]\nD = [1e-2, 1e-3]\nn_kicks = 4\noutput_dir = \"{}\"\nworkers = 2\n{extra}\n[grid]\nn_points = 256\nhalf_width = 12.566370614359172\n",
        dir.join("out").display()
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn sweep_writes_one_row_per_point_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let o = kho(&["sweep", "--config", config.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = key_values(&stdout(&o));
    let csv_path = Path::new(&summary["sweep_csv"]).to_path_buf();
    let first = fs::read(&csv_path).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(
        text.starts_with("eta,hbar_eff,D,chi_prime,chi,gamma_q,gamma_cl,r2_q,r2_cl,n_E,sigma_at_nE,regime,status\n")
    );

    let o = kho(&["sweep", "--config", config.to_str().unwrap(), "--workers", "1"]);
    assert!(o.status.success());
    assert_eq!(fs::read(&csv_path).unwrap(), first);
}

#[test]
fn sweep_names_the_bad_key() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "etta = 3");
    let o = kho(&["sweep", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("etta"), "{}", stderr(&o));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "K = 2.0\neta = [0.5]\nD = [1e-2]\nn_kicks = 2\n").unwrap();
    let o = kho(&["sweep", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n_kicks"), "{}", stderr(&o));
}

#[test]
fn oracle_check_defaults_pass() {
    let o = kho(&["oracle-check"]);
    assert!(o.status.success(), "{}\n{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    for kernel in ["classical", "quantum"] {
        let line = text.lines().find(|l| l.starts_with(&format!("kernel={kernel} "))).unwrap();
        assert!(line.ends_with("result=pass"), "{line}");
        let l1: f64 = line.split(' ').find_map(|f| f.strip_prefix("l1=")).unwrap().parse().unwrap();
        assert!(l1 < 1e-3, "{line}");
    }
    assert!(text.lines().any(|l| l.starts_with("kernel=approx ")));
}

#[test]
fn oracle_check_refuses_large_grid_and_zero_diffusion() {
    let o = kho(&["oracle-check", "--grid-n", "512"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("kind=grid_too_large"), "{}", stderr(&o));

    let o = kho(&["oracle-check", "--D", "0"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("unsupported"), "{}", stderr(&o));
}

#[test]
fn info_reports_crossover_numbers() {
    let o = kho(&["info", "--eta", "0.125", "--D", "9e-5", "--K", "2"]);
    assert!(o.status.success());
    let m = key_values(&stdout(&o));
    assert!((float(&m, "hbar_eff") - 0.03125).abs() < 1e-15);
    assert!((float(&m, "chi_prime") - 10.85).abs() < 0.01);
    assert!((float(&m, "chi") - 571.9).abs() < 0.1);
    assert!((float(&m, "lambda") - LAMBDA).abs() < 5e-4);
    assert_eq!(m["n_E"], "2");
    assert_eq!(m["regime"], "crossover");
}

#[test]
fn info_edge_cases() {
    let o = kho(&["info", "--eta", "0.125", "--D", "1e-3", "--K", "0"]);
    assert!(o.status.success());
    let m = key_values(&stdout(&o));
    assert_eq!(m["lambda"], "none");
    assert!(m["origin"].starts_with("elliptic"));

    let o = kho(&["info", "--eta", "0.125", "--D", "0"]);
    assert!(o.status.success());
    let m = key_values(&stdout(&o));
    assert_eq!(m["chi_prime"], "inf");
    assert_eq!(m["chi"], "inf");
}
