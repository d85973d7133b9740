use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn phasesweep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasesweep"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

fn error_line(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has an error line");
    serde_json::from_str(line).expect("error line is JSON")
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn simulate_calibrate_reconstruct_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "rows = 8\ncols = 10\nnum_sources = 4\nnoise_sigma = 0.01\n");
    let sim = tmp.path().join("sim");
    let cal = tmp.path().join("cal");
    let rec = tmp.path().join("rec");

    let out = phasesweep(&["simulate", "--config", &cfg, "--out", sim.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["dataset.json", "source_00.bin", "source_03.bin", "scene.csv", "code.csv", "kernel.csv"] {
        assert!(sim.join(f).exists(), "missing {f}");
    }

    let out = phasesweep(&[
        "calibrate",
        "--config",
        &cfg,
        "--input",
        sim.to_str().unwrap(),
        "--out",
        cal.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["weights"].as_array().unwrap().len(), 4);
    assert_eq!(report["merged_samples"], 8000);

    let out = phasesweep(&[
        "reconstruct",
        "--config",
        &cfg,
        "--input",
        cal.join("interleaved.bin").to_str().unwrap(),
        "--out",
        rec.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(rec.join("depth_input.pgm").exists());
    assert!(rec.join("hue_input.ppm").exists());
    let m = manifest(&rec);
    assert_eq!(m["experiment"], "reconstruct");
    assert!(m["files"].as_object().unwrap().contains_key("transient_input.csv"));
}

#[test]
fn manifest_lists_checksums_of_written_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("ae");
    let out = phasesweep(&["analyze-error", "--seed", "17", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let m = manifest(&out_dir);
    assert_eq!(m["seed"], 17);
    assert_eq!(m["tool"], "phasesweep");
    for (name, sum) in m["files"].as_object().unwrap() {
        let bytes = fs::read(out_dir.join(name)).unwrap();
        assert_eq!(sum.as_str().unwrap(), phasesweep_cli::output::sha256_hex(&bytes));
    }
    let csv = fs::read_to_string(out_dir.join("error_vs_theta.csv")).unwrap();
    assert!(csv.starts_with('#'));
}

#[test]
fn seed_flag_changes_noisy_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "noise_sigma = 0.05\nstudy_trials = 10\n");
    let run = |seed: &str, name: &str| {
        let dir = tmp.path().join(name);
        let out = phasesweep(&["study-sampling", "--config", &cfg, "--seed", seed, "--out", dir.to_str().unwrap()]);
        assert!(out.status.success());
        fs::read(dir.join("sampling_study.csv")).unwrap()
    };
    let a = run("1", "a");
    let b = run("1", "b");
    let c = run("2", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn invalid_field_exits_nonzero_with_json_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "num_pll_steps = 0\n");
    let out = phasesweep(&["simulate", "--config", &cfg, "--out", tmp.path().join("x").to_str().unwrap()]);
    assert!(!out.status.success());
    let err = error_line(&out);
    assert_eq!(err["error"], "config");
    assert_eq!(err["field"], "num_pll_steps");
}

#[test]
fn unknown_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "no_such_key = 3\n");
    let out = phasesweep(&["quantify", "--config", &cfg]);
    assert!(!out.status.success());
    assert_eq!(error_line(&out)["error"], "config-parse");
}

#[test]
fn missing_input_reports_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = phasesweep(&[
        "calibrate",
        "--input",
        tmp.path().join("absent").to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert_eq!(error_line(&out)["error"], "io");
}

#[test]
fn measured_kernel_needs_a_uniform_axis() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "rows = 4\ncols = 12\nnum_sheets = 3\nkernel = \"measured\"\n");
    let out = phasesweep(&["quantify", "--config", &cfg, "--out", tmp.path().join("q").to_str().unwrap()]);
    assert!(!out.status.success());
    assert_eq!(error_line(&out)["error"], "invalid-parameter");

    let cfg = write_config(
        tmp.path(),
        "rows = 4\ncols = 12\nnum_sheets = 3\nkernel = \"measured\"\nmatched_spacing = true\n",
    );
    let out = phasesweep(&["quantify", "--config", &cfg, "--out", tmp.path().join("q2").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn scatter_with_zero_time_constant_matches_delta_paths() {
    use phasesweep_cli::experiments::{build_scene, run_scattering_scene};
    use phasesweep_cli::{ExperimentConfig, ScenePreset};
    let tmp = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        rows: 8,
        cols: 10,
        scattering_ps: 0.0,
        out_dir: tmp.path().join("s").display().to_string(),
        ..ExperimentConfig::default()
    };
    let scene = build_scene(&config, ScenePreset::Grapes).unwrap();
    assert!(scene.pixels().iter().all(|p| p.scattering == 0.0));
    let run = run_scattering_scene(&config).unwrap();
    assert!(run.report.multi.hue_levels >= run.report.single.hue_levels);
}

#[test]
fn help_lists_every_subcommand() {
    let out = phasesweep(&["--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in [
        "simulate",
        "calibrate",
        "reconstruct",
        "analyze-error",
        "study-sampling",
        "quantify",
        "scene-mirror",
        "scene-scatter",
    ] {
        assert!(text.contains(cmd), "{cmd}");
    }
}
