//! End-to-end tests driving the compiled binary. Every spawn scrubs the
//! ACZ_* environment so ambient overrides cannot leak into assertions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Output;

use acz_core::io::{read_map_csv, read_trace_csv};

const ENV_VARS: [&str; 4] = ["ACZ_SEED", "ACZ_OUT", "ACZ_THREADS", "ACZ_FORMAT"];

fn acz_env(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_acz"));
    cmd.args(args);
    for k in ENV_VARS {
        cmd.env_remove(k);
    }
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn acz")
}

fn acz(args: &[&str]) -> Output {
    acz_env(args, &[])
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Byte map of a dataset directory, keyed by file name.
fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        map.insert(
            entry.file_name().to_string_lossy().into_owned(),
            std::fs::read(entry.path()).unwrap(),
        );
    }
    map
}

const AMP_CFG: &str = r#"
schema_version = 1
scenario = "amplitude-sweep"
seed = 11

[physics]
detuning_mhz = 140.0

[protocol]
kind = "cp2"
ideal_pulses = true
tau = { kind = "linear", min_us = 0.3, max_us = 6.0, points = 20 }

[camera]
sigma_s = 0.01

[amplitude_sweep]
amplitudes_mt = [0.5, 0.7, 0.9]
budget = { repetitions = 3000 }
"#;

/// Noiseless sweep close around the resonator peak so every trace holds a
/// couple of oscillation periods.
const FREQ_CFG: &str = r#"
schema_version = 1
scenario = "frequency-sweep"
seed = 4

[physics]
detuning_mhz = 140.0

[camera]
sigma_s = 0.0

[frequency_sweep]
f_mw = { min_mhz = 2320.0, max_mhz = 2420.0, points = 5 }
budget = { repetitions = 100 }
"#;

#[test]
fn validate_config_accepts_and_reports_identity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "amp.toml", AMP_CFG);
    let out = acz(&["validate-config", "--config", cfg.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("ok: amplitude-sweep"), "{text}");
    assert!(text.contains("config_sha256: "), "{text}");
}

#[test]
fn validate_config_itemizes_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "bad.toml",
        r#"
schema_version = 9
scenario = "amplitude-sweep"
seed = 1

[camera]
sigma_s = -1.0
"#,
    );
    let out = acz(&["validate-config", "--config", cfg.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);
    let err = stderr(&out);
    let lines: Vec<&str> =
        err.lines().filter(|l| l.starts_with("error: config-validation: ")).collect();
    assert!(lines.len() >= 3, "want schema, camera, and section violations:\n{err}");
    assert!(err.contains("schema_version"), "{err}");
    assert!(err.contains("sigma_s"), "{err}");
    assert!(err.contains("amplitude_sweep"), "{err}");
}

#[test]
fn parse_and_io_failures_use_their_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "broken.toml", "scenario = [[[");
    let out = acz(&["validate-config", "--config", cfg.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).starts_with("error: config-parse: "), "{}", stderr(&out));
    // The parse diagnostic is flattened to a single stderr line.
    assert_eq!(stderr(&out).trim_end().lines().count(), 1);

    let out = acz(&["validate-config", "--config", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).starts_with("error: io: "), "{}", stderr(&out));
}

#[test]
fn simulate_writes_one_trace_per_amplitude() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "amp.toml", AMP_CFG);
    let ds = dir.path().join("ds");
    let out = acz(&["simulate", "--config", cfg.to_str().unwrap(), "--out", ds.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("files: 3"), "{}", stdout(&out));
    for name in ["trace_000.csv", "trace_001.csv", "trace_002.csv", "manifest.toml"] {
        assert!(ds.join(name).is_file(), "missing {name}");
    }
}

#[test]
fn reruns_are_byte_identical_and_thread_count_is_invisible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "amp.toml", AMP_CFG);
    let run = |sub: &str, threads: &str| {
        let ds = dir.path().join(sub);
        let out = acz(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            ds.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
        dir_bytes(&ds)
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "4");
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn seed_precedence_is_flag_over_env_over_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "amp.toml", AMP_CFG);
    let run = |sub: &str, extra: &[&str], envs: &[(&str, &str)]| {
        let ds = dir.path().join(sub);
        let mut args =
            vec!["simulate", "--config", cfg.to_str().unwrap(), "--out", ds.to_str().unwrap()];
        args.extend_from_slice(extra);
        let out = acz_env(&args, envs);
        assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
        dir_bytes(&ds)
    };
    let base = run("base", &[], &[]);
    let env5 = run("env5", &[], &[("ACZ_SEED", "5")]);
    let flag5 = run("flag5", &["--seed", "5"], &[]);
    let flag5_env9 = run("flag5env9", &["--seed", "5"], &[("ACZ_SEED", "9")]);
    assert_ne!(base, env5, "environment seed must override the config seed");
    assert_eq!(env5, flag5, "same effective seed, same bytes");
    assert_eq!(flag5, flag5_env9, "flag must override the environment seed");

    let out = acz_env(
        &["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()],
        &[("ACZ_SEED", "not-a-number")],
    );
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("error: config-parse: ACZ_SEED"), "{}", stderr(&out));
}

#[test]
fn output_dir_resolution_falls_back_to_env_then_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "amp.toml", AMP_CFG);

    // No --out, no ACZ_OUT, no output_dir in the config: rejected.
    let out = acz(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("error: config-validation: no output directory"), "{}", stderr(&out));

    let env_dir = dir.path().join("from_env");
    let out = acz_env(
        &["simulate", "--config", cfg.to_str().unwrap()],
        &[("ACZ_OUT", env_dir.to_str().unwrap())],
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    assert!(env_dir.join("manifest.toml").is_file());

    let cfg_dir = dir.path().join("from_config");
    // Top-level keys must precede the first section header.
    let with_dir = format!(
        "output_dir = \"{}\"\n{AMP_CFG}",
        cfg_dir.to_str().unwrap().replace('\\', "/")
    );
    let cfg2 = write_cfg(dir.path(), "amp_outdir.toml", &with_dir);
    let out = acz(&["simulate", "--config", cfg2.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    assert!(cfg_dir.join("manifest.toml").is_file());
}

#[test]
fn fit_recovers_a_noiseless_frequency_sweep_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "freq.toml", FREQ_CFG);
    let ds = dir.path().join("ds");
    let out = acz(&["simulate", "--config", cfg.to_str().unwrap(), "--out", ds.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));

    let out = acz(&["fit", "--data", ds.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));

    let summary = std::fs::read_to_string(ds.join("fit_summary.csv")).unwrap();
    let mut checked = 0;
    for line in summary.lines().skip(2) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[5], "ok", "{line}");
        let index: usize = cells[0]
            .trim_start_matches("trace_")
            .trim_end_matches(".csv")
            .parse()
            .unwrap();
        let trace = read_trace_csv(&ds.join(cells[0])).unwrap();
        let b_true: f64 = trace.meta["b_true_mt"].parse().unwrap();
        let b_fit: f64 = cells[3].parse().unwrap();
        assert!(
            (b_fit - b_true).abs() <= 1e-5 * b_true,
            "trace {index}: fit {b_fit} vs injected {b_true}"
        );
        assert!(ds.join(format!("fit_{index:03}.txt")).is_file());
        checked += 1;
    }
    assert_eq!(checked, 5);
}

#[test]
fn fit_names_the_corrupt_trace_and_keeps_going() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "amp.toml", AMP_CFG);
    let ds = dir.path().join("ds");
    let out = acz(&["simulate", "--config", cfg.to_str().unwrap(), "--out", ds.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0);

    std::fs::write(ds.join("trace_001.csv"), "scrambled\n").unwrap();
    let out = acz(&["fit", "--data", ds.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "one bad trace must not fail the batch: {}", stderr(&out));
    let summary = std::fs::read_to_string(ds.join("fit_summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(2).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].ends_with(",ok"), "{}", rows[0]);
    assert!(rows[1].starts_with("trace_001.csv,nan,") && rows[1].contains("format"), "{}", rows[1]);
    assert!(rows[2].ends_with(",ok"), "{}", rows[2]);

    std::fs::write(ds.join("trace_000.csv"), "scrambled\n").unwrap();
    std::fs::write(ds.join("trace_002.csv"), "scrambled\n").unwrap();
    let out = acz(&["fit", "--data", ds.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("error: dataset: all 3 traces failed"), "{}", stderr(&out));
}

#[test]
fn json_format_round_trips_through_simulate_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "freq.toml", FREQ_CFG);
    let ds = dir.path().join("ds");
    let out = acz(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        ds.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    assert!(ds.join("trace_000.json").is_file());
    assert!(!ds.join("trace_000.csv").exists());

    // The fit's own output format comes from the environment here.
    let out = acz_env(&["fit", "--data", ds.to_str().unwrap()], &[("ACZ_FORMAT", "json")]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let rows: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ds.join("fit_summary.json")).unwrap())
            .unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 5);
    for row in rows {
        assert_eq!(row["status"], "ok");
        assert!(row["b_mw_mt"].as_f64().unwrap() > 0.0);
    }
    assert!(ds.join("fit_000.json").is_file());

    let out = acz(&["simulate", "--config", cfg.to_str().unwrap(), "--out", ds.to_str().unwrap(), "--format", "yaml"]);
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("error: domain: unknown format"), "{}", stderr(&out));
}

#[test]
fn sensitivity_prints_a_report_and_single_n_omits_the_scaling_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "sens.toml",
        r#"
schema_version = 1
scenario = "sensitivity-scan"
seed = 3

[physics]
detuning_mhz = 140.0

[sensitivity_scan]
n_pi = [8]
total_times_s = [5.0, 15.0, 50.0]
trials = 20
tau_coarse = { kind = "linear", min_us = 0.1, max_us = 8.0, points = 17 }
eta_best_tau = { min_us = 0.1, max_us = 10.0, points = 120 }
"#,
    );
    let ds = dir.path().join("ds");
    let out =
        acz(&["sensitivity", "--config", cfg.to_str().unwrap(), "--out", ds.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("eta"), "{text}");
    assert!(text.contains("assumption:"), "{text}");
    assert!(!text.contains("pulse_scaling_p:"), "one pulse count cannot fix an exponent: {text}");
    for name in ["report.txt", "sigma_b_vs_time.csv", "eta_vs_n.csv"] {
        assert!(ds.join(name).is_file(), "missing {name}");
    }

    // A dataset with no traces is not fittable.
    let out = acz(&["fit", "--data", ds.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("error: dataset: no trace files"), "{}", stderr(&out));
}

#[test]
fn scenario_specific_commands_reject_other_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "amp.toml", AMP_CFG);
    let ds = dir.path().join("ds");
    for (cmd, wanted) in [("sensitivity", "sensitivity-scan"), ("field-map", "imaging")] {
        let out = acz(&[cmd, "--config", cfg.to_str().unwrap(), "--out", ds.to_str().unwrap()]);
        assert_eq!(exit_code(&out), 1, "{cmd}");
        let err = stderr(&out);
        assert!(
            err.contains("error: config-validation:") && err.contains(wanted),
            "{cmd}: {err}"
        );
    }
}

#[test]
fn field_map_reconstructs_the_synthetic_antenna_map() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "map.toml",
        r#"
schema_version = 1
scenario = "imaging"
seed = 21

[physics]
detuning_mhz = 140.0

[protocol]
tau = { kind = "linear", min_us = 0.02, max_us = 0.8, points = 40 }

[camera]
sigma_s = 0.01

[imaging]
kind = "rabi"
budget = { total_time_s = 10.0 }

[imaging.grid]
width = 4
height = 4
pixel_size_um = 24.0
"#,
    );
    let ds = dir.path().join("ds");
    let out = acz(&["field-map", "--config", cfg.to_str().unwrap(), "--out", ds.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("map: 4x4 pixels"), "{text}");

    let truth = read_map_csv(&ds.join("true_map.csv")).unwrap();
    let recovered = read_map_csv(&ds.join("recovered_map.csv")).unwrap();
    let mut sum_sq = 0.0;
    let mut n = 0;
    for i in 0..truth.values.len() {
        assert!(recovered.mask[i], "pixel {i} failed to fit");
        let rel = (recovered.values[i] - truth.values[i]) / truth.values[i];
        sum_sq += rel * rel;
        n += 1;
    }
    let rms = (sum_sq / n as f64).sqrt();
    assert!(rms < 0.02, "field map reconstruction off by {rms}");

    let manifest = std::fs::read_to_string(ds.join("manifest.toml")).unwrap();
    assert!(manifest.contains("recovered_map.csv"), "{manifest}");
}
