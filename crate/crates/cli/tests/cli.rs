use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sqkerr::duffing::{branch_occupation, qubit_population, Branch, DuffingParams};
use sqkerr::fock::DensityMatrix;
use sqkerr::model::kerr_perturbative;
use sqkerr::tomography::{symmetric_grid, wigner};
use sqkerr::units::{khz, mhz, to_khz};
use tempfile::TempDir;

fn sqkerr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqkerr")).args(args).output().expect("binary runs")
}

fn run_ok(cmd: &str, config: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = sqkerr(&args);
    assert!(o.status.success(), "{cmd} failed: {}", String::from_utf8_lossy(&o.stderr));
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let head = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (head, rows)
}

fn col(head: &[String], name: &str) -> usize {
    head.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

const ZERO_DRIVE: &str = "
[simulation]
phonon_levels = 12
t_max_us = 4.0
steps = 8
snapshots_us = [4.0]
wigner_extent = 2.0
wigner_points = 21
";

#[test]
fn zero_drive_stays_in_vacuum() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "zero.toml", ZERO_DRIVE);
    let out = dir.path().join("out");
    run_ok("simulate", &cfg, &out, &[]);

    let s = json(&out.join("summary.json"));
    assert_eq!(s["command"], "simulate");
    assert_eq!(s["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(s["config"]["simulation"]["phonon_levels"], 12);
    let fin = &s["result"]["final_state"]["stats"];
    assert!((fin["v_min"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    assert!((fin["v_max"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    let eps = &s["result"]["effective"]["params"]["epsilon"];
    assert!(eps.is_array() && eps.as_array().unwrap().len() == 2, "complex values are [re, im]");

    let (_, rows) = csv_rows(&out.join("trajectory.csv"));
    assert_eq!(rows.len(), 9);
    let map = sqkerr::tomography::WignerMap::read_csv(std::io::BufReader::new(
        fs::File::open(out.join("wigner_t4.000us.csv")).unwrap(),
    ))
    .unwrap();
    let peak = map.values[[10, 10]];
    assert!((peak - 1.0 / std::f64::consts::PI).abs() < 1e-9, "{peak}");
    // the grid covers [-2, 2]^2, which holds erf(2)^2 of the vacuum
    let norm = map.normalization();
    assert!((norm - 0.990_70).abs() < 2e-3, "{norm}");
}

#[test]
fn effective_model_writes_snapshots() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "eff.toml",
        "
[simulation]
phonon_levels = 30
t_max_us = 12.0
steps = 24
snapshots_us = [3.0, 6.0, 12.0]
wigner_points = 31

[effective]
epsilon_mhz = 0.011
kerr_mhz = 0.014
decay_time_us = 40.0
",
    );
    let out = dir.path().join("out");
    run_ok("simulate", &cfg, &out, &[]);
    for t in ["3.000", "6.000", "12.000"] {
        assert!(out.join(format!("wigner_t{t}us.csv")).exists(), "missing snapshot {t}");
    }
    let s = json(&out.join("summary.json"));
    let best = s["result"]["best"]["v_min"].as_f64().unwrap();
    assert!(best < 0.4, "squeezing expected, got V_min = {best}");
    assert!(s["result"]["final_state"]["qfi_max"].as_f64().unwrap() > 2.0);
}

#[test]
fn effective_rate_fit_recovers_epsilon_without_kerr() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "fit.toml",
        "
[simulation]
phonon_levels = 30
t_max_us = 6.0
steps = 30
fit_rate = true

[effective]
epsilon_mhz = 0.0076
decay_time_us = 12.8
",
    );
    let out = dir.path().join("out");
    run_ok("simulate", &cfg, &out, &[]);
    let s = json(&out.join("summary.json"));
    let e = s["result"]["rate_fit"]["epsilon_khz"].as_f64().unwrap();
    assert!((e / 7.6 - 1.0).abs() < 1e-3, "{e}");
}

#[test]
fn tiny_full_model_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "full.toml",
        "
[drives]
xi1 = 0.1
xi2 = 0.1

[simulation]
model = 'full'
qubit_levels = 3
phonon_levels = 4
t_max_us = 0.02
steps = 2
",
    );
    let out = dir.path().join("out");
    run_ok("simulate", &cfg, &out, &[]);
    let s = json(&out.join("summary.json"));
    assert_eq!(s["result"]["model"], "full");
    assert!(s["result"]["full"]["predicted_epsilon_khz"].as_f64().unwrap() > 0.0);
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[device]\ncoupling_mhz = 0.29\nwrong_key = 3\n");
    let o = sqkerr(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "config");
    let msg = err["message"].as_str().unwrap();
    assert!(msg.contains("wrong_key") && msg.contains("line 3"), "{msg}");
}

#[test]
fn missing_config_file_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let o = sqkerr(&["limits", "--config", dir.path().join("nope.toml").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_axis_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "sweep.toml",
        "
[sweep]
quantity = 'squeezing_rate'
axes = [ { name = 'xi_product', values = [] } ]
",
    );
    let o = sqkerr(&["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(err["message"].as_str().unwrap().contains("empty"));
}

#[test]
fn sweep_rate_flags_failures_and_continues() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "sweep.toml",
        "
[sweep]
quantity = 'squeezing_rate'
axes = [ { name = 'delta_a_mhz', values = [1.5] }, { name = 'xi_product', values = [0.005, 0.02, 1.44] } ]
",
    );
    let out = dir.path().join("out");
    run_ok("sweep", &cfg, &out, &["--workers", "2"]);
    let (head, rows) = csv_rows(&out.join("sweep.csv"));
    assert_eq!(head, ["delta_a_mhz", "xi_product", "epsilon_khz", "status", "error"]);
    assert_eq!(rows.len(), 3);
    let e1: f64 = rows[0][2].parse().unwrap();
    let e2: f64 = rows[1][2].parse().unwrap();
    assert!((e2 / e1 - 4.0).abs() < 1e-12, "rate is linear in the drive product");
    assert_eq!(rows[1][3], "ok");
    assert_eq!(rows[2][3], "failed");
    assert!(rows[2][4].contains("xi"), "{}", rows[2][4]);
    let s = json(&out.join("sweep.json"));
    assert_eq!(s["result"]["failed"].as_array().unwrap().len(), 1);
}

#[test]
fn sweep_kerr_has_both_columns() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "kerr.toml",
        "
[simulation]
qubit_levels = 4
phonon_levels = 8

[sweep]
quantity = 'kerr'
axes = [ { name = 'delta_a_mhz', linspace = [0.5, 6.0, 4] } ]
",
    );
    let out = dir.path().join("out");
    run_ok("sweep", &cfg, &out, &[]);
    let (head, rows) = csv_rows(&out.join("sweep.csv"));
    let (ip, ie) = (col(&head, "kerr_perturbative_khz"), col(&head, "kerr_exact_khz"));
    assert_eq!(rows.len(), 4);
    let dev = sqkerr::model::DeviceParams::default();
    for r in &rows {
        let da: f64 = r[0].parse().unwrap();
        let p: f64 = r[ip].parse().unwrap();
        let want = to_khz(kerr_perturbative(dev.g, mhz(da), dev.alpha).unwrap());
        assert!((p - want).abs() < 1e-9 * want.abs());
        let e: f64 = r[ie].parse().unwrap();
        assert!(e > 0.0);
    }
    // far detuned the two agree
    let last = &rows[3];
    let (p, e): (f64, f64) = (last[ip].parse().unwrap(), last[ie].parse().unwrap());
    assert!((e / p - 1.0).abs() < 0.1, "{e} vs {p}");
}

#[test]
fn sweep_resumes_from_cache() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "loss.toml",
        "
[sweep]
quantity = 'measurement_loss'
axes = [ { name = 'v0', values = [0.25] }, { name = 't_meas_us', values = [0.0, 10.0] }, { name = 'decay_time_us', values = [78.0] } ]
",
    );
    let out = dir.path().join("out");
    run_ok("sweep", &cfg, &out, &[]);
    let first = fs::read(out.join("sweep.csv")).unwrap();
    let cache = out.join("cache/point_000001.json");
    let mut entry = json(&cache);
    entry["values"][0] = Value::from(0.123);
    fs::write(&cache, entry.to_string()).unwrap();
    run_ok("sweep", &cfg, &out, &[]);
    let (head, rows) = csv_rows(&out.join("sweep.csv"));
    assert_eq!(rows[1][col(&head, "v_measured")], "0.123", "cached value is reused");
    assert_ne!(first, fs::read(out.join("sweep.csv")).unwrap());

    // a different configuration does not pick up stale entries
    let cfg2 = write(
        dir.path(),
        "loss2.toml",
        "
[sweep]
quantity = 'measurement_loss'
axes = [ { name = 'v0', values = [0.25] }, { name = 't_meas_us', values = [0.0, 10.0] }, { name = 'decay_time_us', values = [50.0] } ]
",
    );
    run_ok("sweep", &cfg2, &out, &[]);
    let (_, rows) = csv_rows(&out.join("sweep.csv"));
    assert_ne!(rows[1][3], "0.123");
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "zero.toml", ZERO_DRIVE);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok("simulate", &cfg, &a, &["--seed", "5"]);
    run_ok("simulate", &cfg, &b, &["--seed", "5"]);
    for f in ["summary.json", "trajectory.csv", "wigner_t4.000us.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }

    let sweep = write(
        dir.path(),
        "sweep.toml",
        "
[sweep]
quantity = 'squeezing_rate'
cache = false
axes = [ { name = 'xi1', values = [0.1, 0.2] }, { name = 'xi2', values = [0.1, 0.3] } ]
",
    );
    let (c, d) = (dir.path().join("c"), dir.path().join("d"));
    let e = dir.path().join("e");
    run_ok("sweep", &sweep, &c, &["--workers", "3"]);
    run_ok("sweep", &sweep, &d, &["--workers", "3"]);
    run_ok("sweep", &sweep, &e, &["--workers", "1"]);
    for f in ["sweep.csv", "sweep.json"] {
        assert_eq!(fs::read(c.join(f)).unwrap(), fs::read(d.join(f)).unwrap(), "{f} differs");
    }
    // row order and values do not depend on the pool size
    assert_eq!(fs::read(c.join("sweep.csv")).unwrap(), fs::read(e.join("sweep.csv")).unwrap());
    assert!(!c.join("cache").exists());
}

fn write_wigner(dir: &Path, rho: &DensityMatrix, extent: f64, n: usize) -> PathBuf {
    let g = symmetric_grid(extent, n);
    let map = wigner(rho, &g, &g).unwrap();
    let p = dir.join("map.csv");
    let mut f = fs::File::create(&p).unwrap();
    map.write_csv(&mut f).unwrap();
    p
}

#[test]
fn reconstruct_vacuum() {
    let dir = TempDir::new().unwrap();
    let map = write_wigner(dir.path(), &DensityMatrix::vacuum(20), 3.0, 17);
    let cfg = write(dir.path(), "t.toml", "[tomography]\ntruncation = 8\ntruncation_spread = 1\n");
    let out = dir.path().join("out");
    run_ok("reconstruct", &cfg, &out, &["--input", map.to_str().unwrap()]);
    let r = json(&out.join("reconstruction.json"));
    let p0 = r["result"]["populations"][0].as_f64().unwrap();
    assert!(p0 > 0.999, "p0 = {p0}");
    assert_eq!(r["result"]["mle"]["truncation"], 8);
    assert_eq!(r["result"]["mle"]["truncation_sensitivity"]["truncations"], serde_json::json!([7, 8, 9]));
    let rho00 = &r["result"]["mle"]["rho"][0][0];
    assert_eq!(rho00.as_array().unwrap().len(), 2);
}

#[test]
fn reconstruct_squeezed_has_even_structure() {
    let dir = TempDir::new().unwrap();
    let truth = DensityMatrix::squeezed_vacuum(0.5 * 2f64.ln(), 0.0, 40);
    let map = write_wigner(dir.path(), &truth, 3.0, 21);
    let cfg = write(dir.path(), "t.toml", "[tomography]\ntruncation_spread = 0\n");
    let out = dir.path().join("out");
    run_ok("reconstruct", &cfg, &out, &["--input", map.to_str().unwrap(), "--truncation", "15"]);
    let r = json(&out.join("reconstruction.json"));
    let odd = r["result"]["odd_population"].as_f64().unwrap();
    let v = r["result"]["stats"]["v_min"].as_f64().unwrap();
    assert!(odd < 0.05, "{odd}");
    assert!((v - 0.25).abs() < 0.005, "{v}");
}

#[test]
fn reconstruct_noise_depends_on_seed_only() {
    let dir = TempDir::new().unwrap();
    let map = write_wigner(dir.path(), &DensityMatrix::vacuum(20), 2.5, 9);
    let cfg = write(dir.path(), "t.toml", "[tomography]\ntruncation = 5\ntruncation_spread = 0\nparity_noise = 0.02\n");
    let m = map.to_str().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    run_ok("reconstruct", &cfg, &a, &["--input", m, "--seed", "3"]);
    run_ok("reconstruct", &cfg, &b, &["--input", m, "--seed", "3"]);
    run_ok("reconstruct", &cfg, &c, &["--input", m, "--seed", "4"]);
    let f = "reconstruction.json";
    assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    assert_ne!(fs::read(a.join(f)).unwrap(), fs::read(c.join(f)).unwrap());
}

#[test]
fn reconstruct_malformed_csv() {
    let dir = TempDir::new().unwrap();
    let bad = write(dir.path(), "bad.csv", "x\\p,0,1\n0,0.1\n");
    let cfg = write(dir.path(), "t.toml", "");
    let o = sqkerr(&[
        "reconstruct",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
        "--input",
        bad.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(err["message"].as_str().unwrap().contains("cells"));
}

/// Writes synthetic spectroscopy for a known Duffing oscillator.
fn duffing_csv(dir: &Path, truth: &DuffingParams, n: usize, span: f64) -> PathBuf {
    let (da, g) = (mhz(0.53), mhz(0.29));
    let mut text = String::from("delta_p_MHz,p_e\n");
    for i in 0..n {
        let x = truth.omega_a + span * (-1.0 + 2.0 * i as f64 / (n - 1) as f64);
        let pe = qubit_population(branch_occupation(truth, x, Branch::Lowest).unwrap(), da, g);
        text.push_str(&format!("{},{}\n", x / mhz(1.0), pe));
    }
    write(dir, "spec.csv", &text)
}

fn duffing_config(dir: &Path, alpha_m: f64, kappa: f64, drive: f64) -> PathBuf {
    let text = format!(
        "[duffing]\ndelta_a_mhz = 0.53\ncoupling_mhz = 0.29\nalpha_m_mhz = {}\nkappa_mhz = {}\ndrive_mhz = {}\n",
        alpha_m / mhz(1.0),
        kappa / mhz(1.0),
        drive / mhz(1.0)
    );
    write(dir, "duffing.toml", &text)
}

fn truth() -> DuffingParams {
    let k = khz(1.2);
    DuffingParams { alpha_m: 2.0 * khz(14.0), kappa: k, omega_a: 0.3 * k, omega_p_amp: 0.02f64.sqrt() * k / 2.0 }
}

#[test]
fn duffing_round_trip() {
    let dir = TempDir::new().unwrap();
    let t = truth();
    let data = duffing_csv(dir.path(), &t, 61, 6.0 * t.kappa);
    let cfg = duffing_config(dir.path(), 0.85 * t.alpha_m, 1.2 * t.kappa, 0.9 * t.omega_p_amp);
    let out = dir.path().join("out");
    run_ok("fit-duffing", &cfg, &out, &["--input", data.to_str().unwrap()]);
    let r = json(&out.join("duffing_fit.json"));
    let a = r["result"]["fitted_khz"]["alpha_m"].as_f64().unwrap();
    assert!((a / to_khz(t.alpha_m) - 1.0).abs() <= 0.02, "alpha_m = {a} kHz");
    assert_eq!(r["result"]["points"], 61);
}

#[test]
fn duffing_kappa_init_off_by_three() {
    let dir = TempDir::new().unwrap();
    let t = truth();
    let data = duffing_csv(dir.path(), &t, 61, 6.0 * t.kappa);
    let cfg = duffing_config(dir.path(), 0.85 * t.alpha_m, 3.0 * t.kappa, 0.9 * t.omega_p_amp);
    let out = dir.path().join("out");
    run_ok("fit-duffing", &cfg, &out, &["--input", data.to_str().unwrap()]);
    let r = json(&out.join("duffing_fit.json"));
    let k = r["result"]["fitted_khz"]["kappa"].as_f64().unwrap();
    let a = r["result"]["fitted_khz"]["alpha_m"].as_f64().unwrap();
    assert!((k / to_khz(t.kappa) - 1.0).abs() <= 0.02, "kappa = {k} kHz");
    assert!((a / to_khz(t.alpha_m) - 1.0).abs() <= 0.02, "alpha_m = {a} kHz");
}

#[test]
fn duffing_saturated_population_is_reported() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("delta_p_MHz,p_e\n");
    for i in 0..10 {
        text.push_str(&format!("{},{}\n", 0.001 * i as f64, if i == 4 { 0.6 } else { 0.01 }));
    }
    let data = write(dir.path(), "sat.csv", &text);
    let cfg = duffing_config(dir.path(), khz(28.0), khz(1.2), khz(0.1));
    let o = sqkerr(&[
        "fit-duffing",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
        "--input",
        data.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "saturation");
}

#[test]
fn limits_write_tables() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "limits.toml",
        "
[limits]
epsilon_mhz = [0.0076]
delta_a_mhz = [0.5, 1.5]
p_e = 0.05
eps_over_k = [1.0]
gamma_over_k = [1.0]
kerr_dim = 20
v0 = 0.25
decay_time_us = 78.0
t_meas_us = [0.0, 5.0]
",
    );
    let out = dir.path().join("out");
    run_ok("limits", &cfg, &out, &[]);
    let (head, rows) = csv_rows(&out.join("decoherence_limit.csv"));
    assert_eq!(rows.len(), 2);
    assert!(head.contains(&"db".to_string()));
    let (_, k) = csv_rows(&out.join("kerr_limit.csv"));
    assert_eq!(k.len(), 1);
    let (mh, m) = csv_rows(&out.join("measurement_loss.csv"));
    assert_eq!(m[0][col(&mh, "v_measured")], "0.25");
    let j = json(&out.join("limits.json"));
    assert_eq!(j["result"]["measurement"].as_array().unwrap().len(), 2);
}

#[test]
fn limits_without_grids_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "l.toml", "[limits]\nv0 = 0.3\n");
    let o = sqkerr(&["limits", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
