use std::fs;
use std::path::Path;
use std::process::Command;

use qswitch_cli::config::{loss_from_attenuation, ExperimentConfig, ExperimentName, Tau};
use qswitch_cli::{resolve, run};

fn small_bell() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.protocol.name = ExperimentName::Bell;
    cfg.protocol.tau_ns = Tau::Ns(350.0);
    cfg.noise.t1_us = 5.0;
    cfg.monte_carlo.trajectories = 60;
    cfg.monte_carlo.resamples = 20;
    cfg.monte_carlo.sample_size = Some(30);
    cfg.monte_carlo.seed = 7;
    cfg
}

fn read(dir: &Path, file: &str) -> Vec<u8> {
    fs::read(dir.join(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

fn rows(dir: &Path, file: &str) -> Vec<Vec<String>> {
    let text = String::from_utf8(read(dir, file)).unwrap();
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn column(table: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = table[0].iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    table[1..].iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn identical_seed_gives_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small_bell();
    run(&cfg, a.path()).unwrap();
    let mut threaded = cfg.clone();
    threaded.monte_carlo.threads = Some(3);
    run(&threaded, b.path()).unwrap();
    assert_eq!(read(a.path(), "fidelity.csv"), read(b.path(), "fidelity.csv"));
    let t = rows(a.path(), "fidelity.csv");
    assert!(column(&t, "jumps")[0] > 0.0, "T1 = 5 us should produce jumps");
}

#[test]
fn manifest_reruns_byte_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = small_bell();
    cfg.protocol.tau_ns = Tau::Auto;
    cfg.noise.attenuation_db_per_km = Some(0.5);
    run(&cfg, a.path()).unwrap();
    let text = fs::read_to_string(a.path().join("manifest.toml")).unwrap();
    let loaded = ExperimentConfig::from_toml(&text).unwrap();
    assert_eq!(resolve(&loaded), resolve(&cfg));
    run(&loaded, b.path()).unwrap();
    assert_eq!(read(a.path(), "fidelity.csv"), read(b.path(), "fidelity.csv"));
    assert_eq!(read(a.path(), "manifest.toml"), read(b.path(), "manifest.toml"));
}

#[test]
fn manifest_records_mode_set_and_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.protocol.name = ExperimentName::EmitterCheck;
    run(&cfg, dir.path()).unwrap();
    let m: toml::Table = fs::read_to_string(dir.path().join("manifest.toml")).unwrap().parse().unwrap();
    let net = m["derived"]["network"].as_table().unwrap();
    assert_eq!(net["modes_per_link"].as_integer(), Some(70));
    assert_eq!(net["mode_set_size"].as_integer(), Some(140));
    assert_eq!(m["derived"]["schemas"]["emitter_check.csv"].as_integer(), Some(1));
    assert_eq!(m["network"]["chi_over_kappa"].as_array().unwrap().len(), 4);
    assert_eq!(m["monte_carlo"]["sample_size"].as_integer(), Some(500));
}

#[test]
fn w_manifest_lists_shift_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.protocol.name = ExperimentName::W;
    cfg.protocol.tau_ns = Tau::Ns(800.0);
    cfg.noise.t1_us = f64::INFINITY;
    cfg.monte_carlo.trajectories = 4;
    cfg.monte_carlo.resamples = 2;
    run(&cfg, dir.path()).unwrap();
    let m: toml::Table = fs::read_to_string(dir.path().join("manifest.toml")).unwrap().parse().unwrap();
    let sched: Vec<f64> = m["derived"]["w_shift_schedule_over_kappa"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_float().unwrap())
        .collect();
    assert_eq!(sched.len(), 2);
    assert!((sched[0] - 0.5f64.sqrt()).abs() < 1e-15);
    assert!((sched[1] - 1.0).abs() < 1e-15);
    let t = rows(dir.path(), "fidelity.csv");
    assert!(column(&t, "fidelity_coherent")[0] > 0.999);
    assert_eq!(column(&t, "fidelity_stddev")[0], 0.0);
}

#[test]
fn bell_at_100us_exceeds_99_percent() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.protocol.name = ExperimentName::Bell;
    cfg.noise.t1_us = 100.0;
    cfg.monte_carlo.trajectories = 400;
    cfg.monte_carlo.sample_size = Some(200);
    cfg.monte_carlo.resamples = 50;
    run(&cfg, dir.path()).unwrap();
    let t = rows(dir.path(), "fidelity.csv");
    assert!(column(&t, "fidelity_mean")[0] >= 0.99);
    assert!(column(&t, "fidelity_stddev")[0] >= 0.0);
}

#[test]
fn bell_precondition_reports_required_shift() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_bell();
    cfg.network.chi_over_kappa = Some(vec![0.5, 1.0, 1.0, 1.0]);
    let err = format!("{:#}", run(&cfg, dir.path()).unwrap_err());
    assert!(err.contains("kappa = 6.283185307179586e7"), "{err}");
    assert!(err.contains("chi_over_kappa[0] = 1"), "{err}");
}

#[test]
fn schema_errors_are_exhaustive() {
    let doc = r#"
[network]
nodes = "three"
colour = 1
[noise]
t1_us = -4
p_loss = 0.1
attenuation_db_per_km = 0.5
[protocol]
tau_ns = "soon"
[unknown]
"#;
    let err = ExperimentConfig::from_toml(doc).unwrap_err();
    let joined = err.0.join("\n");
    assert_eq!(err.0.len(), 4, "{joined}");
    for key in ["network.nodes", "network.colour", "protocol.tau_ns", "unknown"] {
        assert!(joined.contains(key), "missing {key}: {joined}");
    }
    // Structurally valid, semantically wrong.
    let doc = "[noise]\nt1_us = -4\np_loss = 0.1\nattenuation_db_per_km = 0.5\n[monte_carlo]\ntrajectories = 10\nsample_size = 20\n";
    let err = ExperimentConfig::from_toml(doc).unwrap_err();
    assert_eq!(err.0.len(), 3, "{}", err.0.join("\n"));
}

#[test]
fn integers_accepted_for_float_fields() {
    let cfg = ExperimentConfig::from_toml("[network]\nkappa_mhz = 10\n[protocol]\ntau_ns = 350\n").unwrap();
    assert_eq!(cfg.network.kappa_mhz, 10.0);
    assert_eq!(cfg.protocol.tau_ns, Tau::Ns(350.0));
    let cfg = ExperimentConfig::from_toml("[noise]\nt1_us = inf\n").unwrap();
    assert!(cfg.noise.t1_us.is_infinite());
}

#[test]
fn attenuation_matches_quoted_loss() {
    let p = loss_from_attenuation(0.5, 10.0);
    assert!((p - 1.1506e-3).abs() < 1e-7, "{p}");
    assert!((p - 1.2e-3).abs() / 1.2e-3 < 0.05);
    assert_eq!(loss_from_attenuation(0.0, 10.0), 0.0);
}

#[test]
fn csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.protocol.name = ExperimentName::Route;
    cfg.protocol.tau_ns = Tau::Ns(1000.0);
    run(&cfg, dir.path()).unwrap();
    let bytes = read(dir.path(), "route.csv");
    assert!(!bytes.contains(&b'\r'));
    let text = String::from_utf8(bytes).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("order,open_left,open_right,tau_s"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "left_first");
    assert_eq!(row[3], "9.9999999999999995e-7");
    assert_eq!(row[3].parse::<f64>().unwrap(), 1e-6);
    let t = rows(dir.path(), "route.csv");
    let (l, r, e) = (column(&t, "left")[0], column(&t, "right")[0], column(&t, "emitter")[0]);
    assert!((l - 0.5).abs() < 2e-3 && (r - 0.25).abs() < 2e-3 && (e - 0.25).abs() < 2e-3, "{l} {r} {e}");
}

#[test]
fn tau_sweep_has_interior_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.protocol.name = ExperimentName::SweepTau;
    cfg.protocol.t1_us_list = vec![10.0, 100.0];
    run(&cfg, dir.path()).unwrap();
    let opt = rows(dir.path(), "tau_opt.csv");
    let taus = column(&opt, "tau_opt_s");
    assert!(taus[0] < taus[1]);
    assert!((320e-9..=400e-9).contains(&taus[1]), "{}", taus[1]);
    let curves = rows(dir.path(), "sweep_tau.csv");
    let coherent = column(&curves, "fidelity_coherent");
    let n = coherent.len() / 2;
    assert!(coherent[n - 1] > coherent[0]);
    let dec = &column(&curves, "fidelity_decohered")[n..];
    let best = dec.iter().cloned().fold(f64::MIN, f64::max);
    assert!(best > dec[0] && best > dec[n - 1]);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qswitch"))
}

#[test]
fn emitter_check_exits_zero_and_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["emitter-check", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.matches("PASS").count(), 18, "{stdout}");
    let t = rows(dir.path(), "emitter_check.csv");
    assert!(t[1..].iter().all(|r| r[4] == "true"));
}

#[test]
fn out_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from_env");
    let out = bin()
        .arg("emitter-check")
        .env("QSWITCH_OUT", &target)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(target.join("emitter_check.csv").exists());
    assert!(target.join("run.log").exists());
}

#[test]
fn usage_errors_exit_with_two() {
    let out = bin().arg("teleport").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = bin().args(["bell", "--frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[network]\nnodes = 1.5\n[protocol]\nname = \"x\"\n").unwrap();
    let out = bin().arg("run").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("network.nodes") && stderr.contains("protocol.name"), "{stderr}");
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("c.toml");
    fs::write(&conf, "[monte_carlo]\nseed = 3\ntrajectories = 5\n[protocol]\nname = \"qst\"\n").unwrap();
    let out_dir = dir.path().join("o");
    let out = bin()
        .args(["emitter-check", "--seed", "11", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let m: toml::Table = fs::read_to_string(out_dir.join("manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(m["monte_carlo"]["seed"].as_integer(), Some(11));
    assert_eq!(m["monte_carlo"]["trajectories"].as_integer(), Some(5));
    assert_eq!(m["protocol"]["name"].as_str(), Some("emitter-check"));
}
