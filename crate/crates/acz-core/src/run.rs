//! Scenario drivers: turn a validated config into a dataset directory with
//! a manifest. Everything is deterministic in the config seed; file lists
//! and contents are independent of thread count.

use std::path::Path;

use crate::config::{
    ExperimentConfig, ImagingModeKind, ProtocolKind, ProtocolSection, Scenario,
};
use crate::error::Error;
use crate::io::{
    write_manifest, write_map_csv, write_map_json, write_pixels_csv, write_trace_csv,
    write_trace_json, Manifest, OutputFormat,
};
use crate::measure::{
    repetition_time_us, synth_field_map, synth_noisy_trace, synth_pixel_traces,
    synth_resonator_amplitude, CameraModel, ImagingKind,
};
use crate::sensitivity::{
    eta_best, fit_eta, fit_pulse_scaling, sigma_b_vs_time, t2_forward, SensitivityReport,
};
use crate::sequence::{build_cp2, build_xy8n, PulseSequence};
use crate::signal::{closed_form_trace, lowpass_filter, simulate_trace, SignalModelParams, SignalTrace};
use crate::spin::{rabi_from_field, DriveParams};
use crate::Result;

fn trace_file_name(index: usize, format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => format!("trace_{index:03}.csv"),
        OutputFormat::Json => format!("trace_{index:03}.json"),
    }
}

fn write_trace(path: &Path, trace: &SignalTrace, format: OutputFormat) -> Result<()> {
    match format {
        OutputFormat::Csv => write_trace_csv(path, trace),
        OutputFormat::Json => write_trace_json(path, trace),
    }
}

fn build_sequences(protocol: &ProtocolSection, tau_grid: &[f64]) -> Result<Vec<PulseSequence>> {
    tau_grid
        .iter()
        .map(|&tau| match protocol.kind {
            ProtocolKind::Cp2 => {
                build_cp2(tau, protocol.control_rabi_mhz, protocol.ideal_pulses)
            }
            ProtocolKind::Xy8 => {
                build_xy8n(protocol.n, tau, protocol.control_rabi_mhz, protocol.ideal_pulses)
            }
        })
        .collect()
}

fn sweep_us(tau_grid: &[f64], cam: &CameraModel) -> f64 {
    tau_grid.iter().map(|&t| repetition_time_us(t, cam.tau_read)).sum()
}

/// Runs the configured scenario into `out_dir` and returns the written
/// manifest. The directory is created if needed; existing files with the
/// same names are overwritten.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    format: OutputFormat,
) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let files = match cfg.scenario {
        Scenario::AmplitudeSweep => run_amplitude_sweep(cfg, out_dir, format)?,
        Scenario::FrequencySweep => run_frequency_sweep(cfg, out_dir, format)?,
        Scenario::Imaging => run_imaging(cfg, out_dir, format)?,
        Scenario::SensitivityScan => run_sensitivity_scan(cfg, out_dir)?,
        Scenario::CombStudy => run_comb_study(cfg, out_dir, format)?,
    };
    let manifest = Manifest::for_config(cfg, files)?;
    write_manifest(out_dir, &manifest)?;
    Ok(manifest)
}

/// One fully simulated, noise-dressed trace per microwave amplitude.
fn run_amplitude_sweep(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    format: OutputFormat,
) -> Result<Vec<String>> {
    let section = cfg.amplitude_sweep.as_ref().expect("validated");
    let constants = cfg.physics.constants();
    let base = cfg.physics.model();
    let tau = cfg.protocol.resolve_tau(base.t2)?;
    let seqs = build_sequences(&cfg.protocol, &tau)?;
    let cam = cfg.effective_camera();
    let total_time = section.budget.total_time_for(sweep_us(&tau, &cam));
    let mut files = Vec::new();
    for (i, &b) in section.amplitudes_mt.iter().enumerate() {
        let omega = rabi_from_field(b, &constants)?;
        let p = SignalModelParams { omega, ..base };
        let drive = DriveParams::new(p.detuning, omega, 0.0);
        let clean = simulate_trace(&seqs, &drive, cfg.protocol.phase_grid_step, &p)?;
        // Independent noise per amplitude: offset the stream space so point
        // streams never collide across traces.
        let cam_i = CameraModel { seed: cam.seed.wrapping_add(i as u64), ..cam };
        let mut noisy = synth_noisy_trace(&clean, &cam_i, total_time)?;
        noisy.meta.insert("scenario".into(), cfg.scenario.as_str().into());
        noisy.meta.insert("index".into(), format!("{i}"));
        noisy.meta.insert("b_mt".into(), format!("{b}"));
        noisy.meta.insert("omega_mhz".into(), format!("{omega}"));
        noisy.meta.insert("detuning_mhz".into(), format!("{}", p.detuning));
        let name = trace_file_name(i, format);
        write_trace(&out_dir.join(&name), &noisy, format)?;
        files.push(name);
    }
    Ok(files)
}

/// One closed-form trace per drive frequency, the amplitude following the
/// resonator line shape.
fn run_frequency_sweep(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    format: OutputFormat,
) -> Result<Vec<String>> {
    let section = cfg.frequency_sweep.as_ref().expect("validated");
    let constants = cfg.physics.constants();
    let base = cfg.physics.model();
    let tau = cfg.protocol.resolve_tau(base.t2)?;
    let cam = cfg.effective_camera();
    let total_time = section.budget.total_time_for(sweep_us(&tau, &cam));
    let freqs = section.f_mw.resolve()?;
    let amps = synth_resonator_amplitude(&section.resonator, &freqs, section.ripple)?;
    let mut files = Vec::new();
    for (i, (&f_mw, &b)) in freqs.iter().zip(&amps).enumerate() {
        let delta = base.f_nv - f_mw;
        let omega = rabi_from_field(b, &constants)?;
        let p = SignalModelParams { omega, detuning: delta, ..base };
        let clean = closed_form_trace(&tau, &p)?;
        let cam_i = CameraModel { seed: cam.seed.wrapping_add(i as u64), ..cam };
        let mut noisy = synth_noisy_trace(&clean, &cam_i, total_time)?;
        noisy.meta.insert("scenario".into(), cfg.scenario.as_str().into());
        noisy.meta.insert("index".into(), format!("{i}"));
        noisy.meta.insert("f_mw_mhz".into(), format!("{f_mw}"));
        noisy.meta.insert("delta_mhz".into(), format!("{delta}"));
        noisy.meta.insert("b_true_mt".into(), format!("{b}"));
        let name = trace_file_name(i, format);
        write_trace(&out_dir.join(&name), &noisy, format)?;
        files.push(name);
    }
    Ok(files)
}

/// Ground-truth field map plus the camera stack imaged over it.
fn run_imaging(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    format: OutputFormat,
) -> Result<Vec<String>> {
    let section = cfg.imaging.as_ref().expect("validated");
    let constants = cfg.physics.constants();
    let base = cfg.physics.model();
    let tau = cfg.protocol.resolve_tau(base.t2)?;
    let cam = cfg.effective_camera();
    let total_time = section.budget.total_time_for(sweep_us(&tau, &cam));
    let map = synth_field_map(&section.antenna, &section.grid)?;
    let kind = match section.kind {
        ImagingModeKind::Rabi => ImagingKind::Rabi,
        ImagingModeKind::Acz => ImagingKind::Acz { detuning: base.detuning },
    };
    let mut set = synth_pixel_traces(&map, kind, &tau, &base, &constants, &cam, total_time)?;
    set.meta.insert("scenario".into(), cfg.scenario.as_str().into());
    let mut files = Vec::new();
    match format {
        OutputFormat::Csv => {
            write_map_csv(&out_dir.join("true_map.csv"), &map)?;
            files.push("true_map.csv".into());
            files.push("true_map.meta.toml".into());
        }
        OutputFormat::Json => {
            write_map_json(&out_dir.join("true_map.json"), &map)?;
            files.push("true_map.json".into());
        }
    }
    write_pixels_csv(&out_dir.join("pixels.csv"), &set)?;
    files.push("pixels.csv".into());
    Ok(files)
}

/// Monte Carlo sensitivity pipeline: scatter vs time per pulse count, the
/// scaling fits, and the best-sensitivity search.
fn run_sensitivity_scan(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<String>> {
    let section = cfg.sensitivity_scan.as_ref().expect("validated");
    let constants = cfg.physics.constants();
    let base = cfg.physics.model();
    let mut cam = cfg.effective_camera();
    cam.sigma_s *= section.roi_noise_factor;
    let tau_coarse = section.resolve_tau_coarse()?;
    let mut sigma_rows = String::from("n_pi,t_s,sigma_b_mt\n");
    let mut eta_rows = String::from("n_pi,t2_us,eta_mt_sqrt_s,eta_ut_per_sqrt_hz,sigma0_mt\n");
    let mut etas: Vec<(f64, f64)> = Vec::new();
    let mut first_samples: Option<Vec<(f64, f64)>> = None;
    let mut first_eta = (0.0, 0.0);
    for (idx, &n) in section.n_pi.iter().enumerate() {
        let t2_n = t2_forward(n as f64, section.n_ref, section.t2_ref_us, section.s_exponent)?;
        let p_n = SignalModelParams { t2: t2_n, ..base };
        let cam_n = CameraModel { seed: cam.seed.wrapping_add((idx as u64) << 16), ..cam };
        let samples = sigma_b_vs_time(
            &p_n,
            &cam_n,
            &constants,
            &tau_coarse,
            &section.total_times_s,
            section.trials,
        )?;
        let (eta_n, sigma0_n) = fit_eta(&samples)?;
        for &(t, s) in &samples {
            sigma_rows.push_str(&format!("{n},{t},{s}\n"));
        }
        eta_rows.push_str(&format!("{n},{t2_n},{eta_n},{},{sigma0_n}\n", eta_n * 1e3));
        etas.push((n as f64, eta_n));
        if first_samples.is_none() {
            first_samples = Some(samples);
            first_eta = (eta_n, sigma0_n);
        }
    }
    let p_exp = if etas.len() >= 3 { Some(fit_pulse_scaling(&etas)?) } else { None };

    // Best sensitivity is evaluated at the longest sequence studied, whose
    // scaled decay time benefits most.
    let n_max = *section.n_pi.iter().max().expect("validated non-empty") as f64;
    let t2_max = t2_forward(n_max, section.n_ref, section.t2_ref_us, section.s_exponent)?;
    let p_best = SignalModelParams { t2: t2_max, ..base };
    let (eta_b, tau_star) = eta_best(
        &p_best,
        &cam,
        &constants,
        (section.eta_best_tau.min_us, section.eta_best_tau.max_us),
        section.eta_best_tau.points,
    )?;

    let mut files = vec!["report.txt".to_string(), "sigma_b_vs_time.csv".to_string(),
        "eta_vs_n.csv".to_string()];
    if let Some(scan) = &section.detuning_scan {
        let mut rows = String::from("delta_mhz,eta_best_mt_sqrt_s,eta_best_ut_per_sqrt_hz,tau_star_us\n");
        let omega_scan = rabi_from_field(scan.b_mt, &constants)?;
        for k in 0..scan.points {
            let delta = scan.min_mhz
                + (scan.max_mhz - scan.min_mhz) * k as f64 / (scan.points - 1) as f64;
            let p_d = SignalModelParams { omega: omega_scan, detuning: delta, ..p_best };
            let (e, t) = eta_best(
                &p_d,
                &cam,
                &constants,
                (section.eta_best_tau.min_us, section.eta_best_tau.max_us),
                section.eta_best_tau.points,
            )?;
            rows.push_str(&format!("{delta},{e},{},{t}\n", e * 1e3));
        }
        std::fs::write(out_dir.join("eta_best_delta.csv"), rows)?;
        files.push("eta_best_delta.csv".into());
    }

    let report = SensitivityReport {
        sigma_b_samples: first_samples.expect("validated non-empty"),
        eta: first_eta.0,
        sigma0: first_eta.1,
        p: p_exp,
        s_t2: section.s_exponent,
        eta_best: eta_b,
        tau_star,
        tau_range: (section.eta_best_tau.min_us, section.eta_best_tau.max_us),
        assumptions: vec![
            format!(
                "per-readout contrast noise sigma_s = {} (base {} x roi factor {})",
                cam.sigma_s, cfg.camera.sigma_s, section.roi_noise_factor
            ),
            format!("readout time tau_read = {} us per repetition", cam.tau_read),
            format!("full readout contrast C = {}", base.contrast),
            format!(
                "decay scaling T2(N) = {} us x (N/{})^{}",
                section.t2_ref_us, section.n_ref, section.s_exponent
            ),
            format!(
                "eta_best evaluated at N_pi = {n_max} (T2 = {t2_max} us) over tau in [{}, {}] us",
                section.eta_best_tau.min_us, section.eta_best_tau.max_us
            ),
            format!("{} Monte Carlo trials per integration time", section.trials),
        ],
    };
    report.validate()?;
    std::fs::write(out_dir.join("report.txt"), report.render_text())?;
    std::fs::write(out_dir.join("sigma_b_vs_time.csv"), sigma_rows)?;
    std::fs::write(out_dir.join("eta_vs_n.csv"), eta_rows)?;
    Ok(files)
}

/// Dense-grid sequence simulation plus its low-passed version and the
/// smooth closed-form reference.
fn run_comb_study(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    format: OutputFormat,
) -> Result<Vec<String>> {
    let section = cfg.comb_study.as_ref().expect("validated");
    let base = cfg.physics.model();
    let a = base.detuning.hypot(base.omega);
    // Default step resolves the dressed-frequency modulation ten times per
    // period.
    let step = section.step_us.unwrap_or(1.0 / (10.0 * a));
    let count = ((section.tau_max_us - section.tau_min_us) / step).floor() as usize + 1;
    if count < 16 {
        return Err(Error::Grid(format!(
            "comb grid has only {count} points; widen the range or shrink the step"
        )));
    }
    let tau: Vec<f64> = (0..count).map(|i| section.tau_min_us + i as f64 * step).collect();
    let seqs = build_sequences(&cfg.protocol, &tau)?;
    let drive = DriveParams::new(base.detuning, base.omega, 0.0);
    let mut raw = simulate_trace(&seqs, &drive, cfg.protocol.phase_grid_step, &base)?;
    raw.meta.insert("scenario".into(), cfg.scenario.as_str().into());
    raw.meta.insert("dressed_mhz".into(), format!("{a}"));
    raw.meta.insert("windows".into(), format!("{}", 4 * cfg.protocol.n));
    let mut smooth = lowpass_filter(&raw, section.cutoff_mhz)?;
    smooth.meta.insert("cutoff_mhz".into(), format!("{}", section.cutoff_mhz));
    let mut reference = closed_form_trace(&tau, &base)?;
    reference.meta.insert("scenario".into(), cfg.scenario.as_str().into());
    let (raw_name, smooth_name, ref_name) = match format {
        OutputFormat::Csv => ("raw.csv", "lowpassed.csv", "reference.csv"),
        OutputFormat::Json => ("raw.json", "lowpassed.json", "reference.json"),
    };
    write_trace(&out_dir.join(raw_name), &raw, format)?;
    write_trace(&out_dir.join(smooth_name), &smooth, format)?;
    write_trace(&out_dir.join(ref_name), &reference, format)?;
    Ok(vec![raw_name.into(), smooth_name.into(), ref_name.into()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{read_manifest, read_pixels_csv, read_trace_csv};

    fn read_all_bytes(dir: &Path, files: &[String]) -> Vec<(String, Vec<u8>)> {
        let mut out: Vec<(String, Vec<u8>)> = files
            .iter()
            .map(|f| (f.clone(), std::fs::read(dir.join(f)).unwrap()))
            .collect();
        out.push((
            "manifest.toml".into(),
            std::fs::read(dir.join("manifest.toml")).unwrap(),
        ));
        out
    }

    #[test]
    fn amplitude_sweep_writes_one_trace_per_amplitude_deterministically() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
schema_version = 1
scenario = "amplitude-sweep"
seed = 21

[protocol]
tau = { kind = "log", min_us = 0.05, max_us = 6.4, points = 10 }

[amplitude_sweep]
amplitudes_mt = [0.2, 0.3, 0.4]
budget = { repetitions = 500 }
"#,
        )
        .unwrap();
        let dir1 = tempfile::tempdir().unwrap();
        let m1 = run_experiment(&cfg, dir1.path(), OutputFormat::Csv).unwrap();
        assert_eq!(m1.files, vec!["trace_000.csv", "trace_001.csv", "trace_002.csv"]);
        let t0 = read_trace_csv(&dir1.path().join("trace_000.csv")).unwrap();
        assert_eq!(t0.len(), 10);
        assert_eq!(t0.meta["b_mt"], "0.2");
        assert_eq!(t0.meta["repetitions"], "500");
        read_manifest(dir1.path()).unwrap();

        let dir2 = tempfile::tempdir().unwrap();
        run_experiment(&cfg, dir2.path(), OutputFormat::Csv).unwrap();
        assert_eq!(
            read_all_bytes(dir1.path(), &m1.files),
            read_all_bytes(dir2.path(), &m1.files)
        );
    }

    #[test]
    fn frequency_sweep_amplitudes_follow_the_resonator() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
schema_version = 1
scenario = "frequency-sweep"
seed = 4

[physics]
f_nv_mhz = 2870.0

[protocol]
tau = { kind = "log", min_us = 0.05, max_us = 6.4, points = 8 }

[frequency_sweep]
f_mw = { min_mhz = 2200.0, max_mhz = 2540.0, points = 5 }
budget = { repetitions = 2000 }

[frequency_sweep.resonator]
f0 = 2370.0
q_factor = 16.0
coupling = 1.0
drive_amp = 0.8
"#,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = run_experiment(&cfg, dir.path(), OutputFormat::Csv).unwrap();
        assert_eq!(m.files.len(), 5);
        let peak = read_trace_csv(&dir.path().join("trace_002.csv")).unwrap();
        assert_eq!(peak.meta["f_mw_mhz"], "2370");
        let b_peak: f64 = peak.meta["b_true_mt"].parse().unwrap();
        let b_edge: f64 = read_trace_csv(&dir.path().join("trace_000.csv"))
            .unwrap()
            .meta["b_true_mt"]
            .parse()
            .unwrap();
        assert!((b_peak - 0.8).abs() < 1e-12);
        assert!(b_edge < 0.5 * b_peak);
    }

    #[test]
    fn imaging_scenario_emits_truth_map_and_stack() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
schema_version = 1
scenario = "imaging"
seed = 8

[protocol]
tau = { kind = "linear", min_us = 0.05, max_us = 2.0, points = 12 }

[imaging]
kind = "acz"
budget = { repetitions = 50000 }

[imaging.grid]
width = 3
height = 3
pixel_size_um = 12.0
"#,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = run_experiment(&cfg, dir.path(), OutputFormat::Csv).unwrap();
        assert!(m.files.contains(&"true_map.csv".to_string()));
        let set = read_pixels_csv(&dir.path().join("pixels.csv")).unwrap();
        assert_eq!(set.width, 3);
        assert_eq!(set.contrast.len(), 9);
        assert_eq!(set.tau_grid.len(), 12);
    }

    #[test]
    fn comb_study_emits_raw_lowpassed_and_reference() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
schema_version = 1
scenario = "comb-study"
seed = 2

[physics]
detuning_mhz = 140.0

[protocol]
kind = "xy8"
n = 8
ideal_pulses = true

[comb_study]
tau_min_us = 0.3
tau_max_us = 0.75
cutoff_mhz = 1.0
"#,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = run_experiment(&cfg, dir.path(), OutputFormat::Csv).unwrap();
        assert_eq!(m.files, vec!["raw.csv", "lowpassed.csv", "reference.csv"]);
        let raw = read_trace_csv(&dir.path().join("raw.csv")).unwrap();
        let smooth = read_trace_csv(&dir.path().join("lowpassed.csv")).unwrap();
        let reference = read_trace_csv(&dir.path().join("reference.csv")).unwrap();
        assert_eq!(raw.len(), smooth.len());
        let rms = |a: &SignalTrace, b: &SignalTrace| {
            (a.contrast
                .iter()
                .zip(&b.contrast)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                / a.len() as f64)
                .sqrt()
        };
        // Low-passing moves the simulated curve toward the smooth model.
        assert!(rms(&smooth, &reference) < rms(&raw, &reference));
    }

    #[test]
    fn sensitivity_scan_writes_report_and_tables() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
schema_version = 1
scenario = "sensitivity-scan"
seed = 5

[sensitivity_scan]
n_pi = [2, 8, 16]
total_times_s = [5.0, 15.0, 50.0]
trials = 40
tau_coarse = { kind = "linear", min_us = 0.1, max_us = 8.0, points = 17 }
"#,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = run_experiment(&cfg, dir.path(), OutputFormat::Csv).unwrap();
        assert!(m.files.contains(&"report.txt".to_string()));
        let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
        assert!(report.contains("pulse_scaling_p:"));
        assert!(report.contains("assumption:"));
        let eta_table = std::fs::read_to_string(dir.path().join("eta_vs_n.csv")).unwrap();
        assert_eq!(eta_table.lines().count(), 4);
        let sigma_table =
            std::fs::read_to_string(dir.path().join("sigma_b_vs_time.csv")).unwrap();
        assert_eq!(sigma_table.lines().count(), 1 + 3 * 3);
    }
}
