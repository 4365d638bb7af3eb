use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fracsource::io::{parse_csv, Manifest, ReconstructionJson, SpectrumJson};
use fracsource::ExperimentConfig;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fracsource"));
    c.env_remove("SOURCE_DATE_EPOCH");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn spectrum_export_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[spectrum]\nlambda_max = 6.0\n");
    let out = dir.path().join("a");
    let o = run(&["spectrum", "--config", s(&cfg), "--out", s(&out), "--quiet"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let bytes = std::fs::read(out.join("spectrum.json")).unwrap();
    let spec: SpectrumJson = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(spec.modes.len(), 1);
    assert!((spec.modes[0].lambda - 5.783_185_962_946_784).abs() < 1e-9);

    let o = run(&["spectrum", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(out.join("spectrum.json")).unwrap(), bytes);

    let bad = write_config(dir.path(), "bad.toml", "[spectrum]\nlambda_max = 5.0\n");
    let o = run(&["spectrum", "--config", s(&bad), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("spectrum"), "{}", stderr(&o));
}

#[test]
fn synth_writes_full_grid_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&["synth", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for l in 1..=2 {
        let (header, rows) = parse_csv(&out.join(format!("flux_sensor{l}.csv"))).unwrap();
        assert_eq!(header, ["t", "flux"]);
        assert_eq!(rows.len(), 4001);
        assert_eq!(rows[4000][0], 4.0);
        let (header, rows) = parse_csv(&out.join(format!("laplace_sensor{l}.csv"))).unwrap();
        assert_eq!(header, ["re_s", "im_s", "re_G", "im_G"]);
        assert_eq!(rows.len(), 8);
    }
    assert!(!out.join("flux_sensor1_noisy.csv").exists());
    let m: Manifest =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest_synth.json")).unwrap()).unwrap();
    assert_eq!(m.command, "synth");
    assert_eq!(m.seed, 42);
    assert!(m.timestamp.is_none());
    let mut listed: Vec<String> = m.files.iter().map(|f| f.name.clone()).collect();
    listed.sort();
    let mut present: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest_synth.json")
        .collect();
    present.sort();
    assert_eq!(listed, present);
    let copy = ExperimentConfig::load(&out.join("config.toml")).unwrap();
    assert_eq!(copy, ExperimentConfig::default());
}

#[test]
fn manifest_timestamp_comes_from_source_date_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = bin()
        .args(["spectrum", "--out", s(&out)])
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let m: Manifest =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest_spectrum.json")).unwrap()).unwrap();
    assert_eq!(m.timestamp, Some(1_700_000_000));
}

#[test]
fn zero_source_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "zero.toml",
        "[model]\ncuts = [0.2, inf]\n[[model.pieces]]\nmodes = []\n",
    );
    let o = run(&["synth", "--config", s(&cfg), "--out", s(&dir.path().join("r"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("model"), "{}", stderr(&o));
}

#[test]
fn noisy_synth_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n.toml", "[noise]\nlevel = 0.01\n[grid]\nsteps = 400\n");
    let read = |name: &str, seed: &str| {
        let out = dir.path().join(format!("s{seed}-{name}"));
        let o = run(&["synth", "--config", s(&cfg), "--out", s(&out), "--seed", seed]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        std::fs::read(out.join("flux_sensor1_noisy.csv")).unwrap()
    };
    assert_eq!(read("a", "7"), read("b", "7"));
    assert_ne!(read("a", "7"), read("a", "8"));
}

#[test]
fn invert_requires_two_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(code(&run(&["synth", "--out", s(&out)])), 0);
    let one = out.join("flux_sensor1.csv");
    let o = run(&["invert", "--out", s(&out), "--traces", s(&one)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("exactly 2"), "{}", stderr(&o));
    let o = run(&["invert", "--out", s(&dir.path().join("empty"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn invert_and_plotdata_on_reference_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(code(&run(&["synth", "--out", s(&out)])), 0);
    let o = run(&["invert", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rec: ReconstructionJson =
        serde_json::from_str(&std::fs::read_to_string(out.join("reconstruction.json")).unwrap()).unwrap();
    assert_eq!(rec.k_hat, 2);
    assert!((rec.alpha_hat - 0.75).abs() < 1e-4);
    assert_eq!(rec.coeffs.len(), 2 * 5);
    let (header, rows) = parse_csv(&out.join("residuals.csv")).unwrap();
    assert_eq!(header, ["t", "residual_1", "residual_2"]);
    assert_eq!(rows.len(), 4001);

    let plots = dir.path().join("plots");
    let o = run(&["plotdata", s(&out), "--out", s(&plots)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (_, flux) = parse_csv(&plots.join("plot_flux.csv")).unwrap();
    assert_eq!(flux.len(), 2 * 4001);
    let (header, alpha) = parse_csv(&plots.join("plot_alpha_fit.csv")).unwrap();
    let slope = header.iter().position(|h| h == "slope").unwrap();
    assert!(alpha.iter().all(|r| r[slope] == -(1.0 + rec.alpha_hat)));
    let cuts = std::fs::read_to_string(plots.join("plot_cuts.csv")).unwrap();
    assert_eq!(cuts.lines().count(), 3);
    assert!(cuts.starts_with("index,true,reconstructed\n0,0.2,"));
}

#[test]
fn plotdata_needs_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["plotdata", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("missing"), "{}", stderr(&o));
    let o = run(&["plotdata", s(&dir.path().join("nope"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn quarter_turn_sensors_hit_the_geometry_guard() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "q.toml",
        &format!("[sensors]\ntheta1 = 0.3\ntheta2 = {:?}\n", 0.3 + std::f64::consts::FRAC_PI_2),
    );
    let out = dir.path().join("run");
    assert_eq!(code(&run(&["synth", "--config", s(&cfg), "--out", s(&out)])), 0);
    let o = run(&["invert", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("|m| = 2"), "{}", stderr(&o));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "u.toml", "[grid]\nstep = 10\n");
    let o = run(&["spectrum", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    let o = run(&["spectrum", "--config", s(&dir.path().join("missing.toml"))]);
    assert_eq!(code(&o), 2);
}
