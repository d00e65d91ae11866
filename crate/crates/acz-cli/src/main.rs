//! `acz`: config-driven front end for the simulation and analysis chain.
//!
//! Every run is described by one TOML file; all randomness flows from its
//! seed. Flags override environment variables (`ACZ_SEED`, `ACZ_OUT`,
//! `ACZ_THREADS`, `ACZ_FORMAT`), which in turn override the config. Exit
//! codes: 0 success, 1 rejected input, 2 runtime failure. stderr carries one
//! `error: <class>: <detail>` line per problem.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use acz_core::config::{ImagingModeKind, Scenario};
use acz_core::error::Error;
use acz_core::estimate::{
    amplitude_from_shift, fit_acz_map, fit_acz_trace, fit_rabi_map, InitStrategy,
};
use acz_core::io::{
    manifest_path, read_manifest, read_pixels_csv, read_trace_csv, read_trace_json,
    write_fit_report, write_manifest, write_map_csv, write_map_json, OutputFormat,
};
use acz_core::measure::synth_field_map;
use acz_core::run::run_experiment;
use acz_core::spin::{PhysicalConstants, ShiftMode};
use acz_core::{ExperimentConfig, FitResult, FixedParams, Result, SignalTrace};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "acz",
    version,
    about = "Simulate, fit, and budget dressed-spin microwave-amplitude measurements",
    long_about = "Simulate, fit, and budget dressed-spin microwave-amplitude measurements.\n\
        Runs are described by a TOML config; all outputs are deterministic in its seed.\n\
        Environment overrides: ACZ_SEED, ACZ_OUT, ACZ_THREADS, ACZ_FORMAT\n\
        (flags beat environment, environment beats config)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured scenario and write its dataset plus manifest.
    Simulate(RunArgs),
    /// Fit every trace of a dataset; write per-trace reports and a summary table.
    Fit(FitArgs),
    /// Run a sensitivity scan and print its report.
    Sensitivity(RunArgs),
    /// Run an imaging scenario and reconstruct the field map from the pixel stack.
    FieldMap(RunArgs),
    /// Check a config file and print its scenario and hash.
    ValidateConfig(ConfigOnlyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment description file (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory. Overrides ACZ_OUT and the config's output_dir.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed override. Overrides ACZ_SEED and the config's seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Worker thread count. Overrides ACZ_THREADS; default: all cores.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Dataset encoding: csv or json. Overrides ACZ_FORMAT; default csv.
    #[arg(long, value_name = "FMT")]
    format: Option<String>,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset directory containing manifest.toml.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Directory for fit reports; default: the dataset directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker thread count. Overrides ACZ_THREADS; default: all cores.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Report encoding: csv or json. Overrides ACZ_FORMAT; default csv.
    #[arg(long, value_name = "FMT")]
    format: Option<String>,
    /// Hold the decay time fixed at this value (us) instead of floating it.
    #[arg(long, value_name = "US")]
    fix_t2: Option<f64>,
    /// Hold the contrast fixed at this value instead of floating it.
    #[arg(long, value_name = "C")]
    fix_contrast: Option<f64>,
}

#[derive(Args)]
struct ConfigOnlyArgs {
    /// Experiment description file (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            report_error(&err);
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Sensitivity(args) => cmd_sensitivity(args),
        Command::FieldMap(args) => cmd_field_map(args),
        Command::ValidateConfig(args) => cmd_validate_config(args),
    }
}

/// One stderr line per problem, `error: <class>: <detail>`, detail flattened
/// to a single line so the stream stays machine-parsable.
fn report_error(err: &Error) {
    match err {
        Error::ConfigValidation(items) => {
            for item in items {
                eprintln!("error: config-validation: {}", one_line(item));
            }
        }
        Error::Io(e) => eprintln!("error: io: {}", one_line(&e.to_string())),
        Error::Domain(m)
        | Error::NonFinite(m)
        | Error::Convergence(m)
        | Error::Grid(m)
        | Error::Dataset(m)
        | Error::ConfigParse(m)
        | Error::Format(m) => eprintln!("error: {}: {}", err.class(), one_line(m)),
    }
}

fn one_line(text: &str) -> String {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" | ")
}

fn env_nonempty(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    env_nonempty("ACZ_SEED")
        .map(|s| {
            s.parse::<u64>().map_err(|_| {
                Error::ConfigParse(format!("ACZ_SEED must be an unsigned integer, got {s:?}"))
            })
        })
        .transpose()
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    env_nonempty("ACZ_THREADS")
        .map(|s| {
            s.parse::<usize>().map_err(|_| {
                Error::ConfigParse(format!("ACZ_THREADS must be an unsigned integer, got {s:?}"))
            })
        })
        .transpose()
}

fn resolve_format(flag: Option<String>) -> Result<OutputFormat> {
    match flag.or_else(|| env_nonempty("ACZ_FORMAT")) {
        Some(s) => OutputFormat::from_str(&s),
        None => Ok(OutputFormat::Csv),
    }
}

fn resolve_out(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> Result<PathBuf> {
    if let Some(p) = flag {
        return Ok(p);
    }
    if let Some(p) = env_nonempty("ACZ_OUT") {
        return Ok(PathBuf::from(p));
    }
    match &cfg.output_dir {
        Some(p) => Ok(PathBuf::from(p)),
        None => Err(Error::ConfigValidation(vec![
            "no output directory: set output_dir in the config or pass --out / ACZ_OUT".into(),
        ])),
    }
}

/// Sizes the global worker pool. Outputs never depend on this.
fn apply_threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Domain("thread count must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    }
    Ok(())
}

/// Loads the config and applies the flag/env/config override chain.
fn prepare(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf, OutputFormat)> {
    apply_threads(resolve_threads(args.threads)?)?;
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = resolve_seed(args.seed)? {
        cfg.seed = seed;
    }
    let out = resolve_out(args.out.clone(), &cfg)?;
    let format = resolve_format(args.format.clone())?;
    Ok((cfg, out, format))
}

fn require_scenario(cfg: &ExperimentConfig, wanted: Scenario, command: &str) -> Result<()> {
    if cfg.scenario != wanted {
        return Err(Error::ConfigValidation(vec![format!(
            "{command} needs scenario = \"{}\", config says \"{}\"",
            wanted.as_str(),
            cfg.scenario.as_str()
        )]));
    }
    Ok(())
}

fn print_run_summary(cfg: &ExperimentConfig, out: &Path, format: OutputFormat, n_files: usize) {
    println!("scenario: {}", cfg.scenario.as_str());
    println!("seed: {}", cfg.seed);
    println!("format: {}", match format {
        OutputFormat::Csv => "csv",
        OutputFormat::Json => "json",
    });
    println!("out: {}", out.display());
    println!("files: {n_files}");
    println!("manifest: {}", manifest_path(out).display());
}

fn cmd_simulate(args: RunArgs) -> Result<()> {
    let (cfg, out, format) = prepare(&args)?;
    let manifest = run_experiment(&cfg, &out, format)?;
    print_run_summary(&cfg, &out, format, manifest.files.len());
    Ok(())
}

fn cmd_sensitivity(args: RunArgs) -> Result<()> {
    let (cfg, out, format) = prepare(&args)?;
    require_scenario(&cfg, Scenario::SensitivityScan, "sensitivity")?;
    let manifest = run_experiment(&cfg, &out, format)?;
    print!("{}", std::fs::read_to_string(out.join("report.txt"))?);
    print_run_summary(&cfg, &out, format, manifest.files.len());
    Ok(())
}

fn cmd_field_map(args: RunArgs) -> Result<()> {
    let (cfg, out, format) = prepare(&args)?;
    require_scenario(&cfg, Scenario::Imaging, "field-map")?;
    let mut manifest = run_experiment(&cfg, &out, format)?;

    let imaging = cfg.imaging.as_ref().expect("scenario checked");
    let pixels = read_pixels_csv(&out.join("pixels.csv"))?;
    let constants = cfg.physics.constants();
    let recovered = match imaging.kind {
        ImagingModeKind::Rabi => fit_rabi_map(&pixels, FixedParams::default(), &constants)?,
        ImagingModeKind::Acz => fit_acz_map(
            &pixels,
            cfg.physics.detuning_mhz,
            FixedParams::default(),
            &constants,
            cfg.physics.shift_mode,
        )?,
    };
    match format {
        OutputFormat::Csv => {
            write_map_csv(&out.join("recovered_map.csv"), &recovered)?;
            manifest.files.push("recovered_map.csv".into());
            manifest.files.push("recovered_map.meta.toml".into());
        }
        OutputFormat::Json => {
            write_map_json(&out.join("recovered_map.json"), &recovered)?;
            manifest.files.push("recovered_map.json".into());
        }
    }
    write_manifest(&out, &manifest)?;

    // Truth is regenerated, not re-read, so the comparison works for both
    // output formats.
    let truth = synth_field_map(&imaging.antenna, &imaging.grid)?;
    let mut sum_sq = 0.0;
    let mut n = 0usize;
    for i in 0..truth.values.len() {
        if truth.mask[i] && recovered.mask[i] && truth.values[i] != 0.0 {
            let rel = (recovered.values[i] - truth.values[i]) / truth.values[i];
            sum_sq += rel * rel;
            n += 1;
        }
    }
    let masked = recovered.mask.iter().filter(|m| !**m).count();
    println!("map: {}x{} pixels, {} failed fits masked", recovered.width, recovered.height, masked);
    if n > 0 {
        println!("rms_relative_gap_vs_truth: {:.6}", (sum_sq / n as f64).sqrt());
    }
    print_run_summary(&cfg, &out, format, manifest.files.len());
    Ok(())
}

fn cmd_validate_config(args: ConfigOnlyArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    cfg.validate()?;
    println!("ok: {}", cfg.scenario.as_str());
    println!("config_sha256: {}", cfg.sha256_hex()?);
    Ok(())
}

/// One summary row per trace; failures carry their message instead of
/// aborting the batch.
#[derive(serde::Serialize)]
struct FitRow {
    file: String,
    f_acz_mhz: f64,
    f_acz_err_mhz: f64,
    b_mw_mt: f64,
    b_mw_err_mt: f64,
    status: String,
}

fn read_trace_any(path: &Path) -> Result<SignalTrace> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_trace_csv(path),
        Some("json") => read_trace_json(path),
        _ => Err(Error::Format(format!("unrecognized trace extension: {}", path.display()))),
    }
}

fn fit_one(
    path: &Path,
    cfg: &ExperimentConfig,
    fixed: FixedParams,
) -> Result<(FitResult, f64)> {
    let trace = read_trace_any(path)?;
    // Frequency sweeps vary the detuning per trace and record it; everything
    // else runs at the config detuning.
    let delta = match trace.meta.get("delta_mhz") {
        Some(s) => s
            .parse::<f64>()
            .map_err(|_| Error::Format(format!("delta_mhz meta is not a number: {s:?}")))?,
        None => cfg.physics.detuning_mhz,
    };
    let fit = fit_acz_trace(&trace, fixed, InitStrategy::SpectralPeak)?;
    if !fit.converged {
        return Err(Error::Convergence("fit did not converge".into()));
    }
    Ok((fit, delta))
}

/// Field amplitude and its propagated error from a fitted shift.
fn field_with_error(
    f: f64,
    f_err: f64,
    delta: f64,
    constants: &PhysicalConstants,
    mode: ShiftMode,
) -> (f64, f64) {
    let b = match amplitude_from_shift(f, delta, constants, mode) {
        Ok(b) => b,
        Err(_) => return (f64::NAN, f64::NAN),
    };
    let h = (1e-6 * f.abs()).max(1e-9);
    let lo = (f - h).max(0.0);
    let up = amplitude_from_shift(f + h, delta, constants, mode);
    let dn = amplitude_from_shift(lo, delta, constants, mode);
    match (up, dn) {
        (Ok(u), Ok(d)) => (b, ((u - d) / (f + h - lo)).abs() * f_err),
        _ => (b, f64::NAN),
    }
}

fn report_file_name(trace_name: &str, format: OutputFormat) -> String {
    let stem = Path::new(trace_name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| trace_name.to_string());
    let suffix = stem.strip_prefix("trace_").unwrap_or(&stem);
    match format {
        OutputFormat::Csv => format!("fit_{suffix}.txt"),
        OutputFormat::Json => format!("fit_{suffix}.json"),
    }
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "nan".into()
    }
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    apply_threads(resolve_threads(args.threads)?)?;
    let format = resolve_format(args.format.clone())?;
    let manifest = read_manifest(&args.data)?;
    let cfg = &manifest.config;
    let out = args.out.clone().unwrap_or_else(|| args.data.clone());
    std::fs::create_dir_all(&out)?;
    let constants = cfg.physics.constants();
    let mode = cfg.physics.shift_mode;
    let fixed = FixedParams { t2: args.fix_t2, contrast: args.fix_contrast };

    let trace_names: Vec<&String> =
        manifest.files.iter().filter(|f| f.starts_with("trace_")).collect();
    if trace_names.is_empty() {
        return Err(Error::Dataset(format!(
            "no trace files in {}; fit applies to sweep datasets",
            args.data.display()
        )));
    }

    let mut rows = Vec::new();
    let mut n_ok = 0usize;
    for name in trace_names {
        match fit_one(&args.data.join(name), cfg, fixed) {
            Ok((fit, delta)) => {
                write_fit_report(&out.join(report_file_name(name, format)), &fit, format)?;
                let f = fit.frequency();
                let f_err = fit.frequency_err();
                let (b, b_err) = field_with_error(f, f_err, delta, &constants, mode);
                n_ok += 1;
                rows.push(FitRow {
                    file: name.clone(),
                    f_acz_mhz: f,
                    f_acz_err_mhz: f_err,
                    b_mw_mt: b,
                    b_mw_err_mt: b_err,
                    status: "ok".into(),
                });
            }
            Err(e) => rows.push(FitRow {
                file: name.clone(),
                f_acz_mhz: f64::NAN,
                f_acz_err_mhz: f64::NAN,
                b_mw_mt: f64::NAN,
                b_mw_err_mt: f64::NAN,
                status: format!("{}: {}", e.class(), one_line(&e.to_string()).replace(',', ";")),
            }),
        }
    }

    match format {
        OutputFormat::Csv => {
            let mut text = String::from("# schema: fit-summary v1\n");
            text.push_str("file,f_acz_mhz,f_acz_err_mhz,b_mw_mt,b_mw_err_mt,status\n");
            for r in &rows {
                text.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.file,
                    cell(r.f_acz_mhz),
                    cell(r.f_acz_err_mhz),
                    cell(r.b_mw_mt),
                    cell(r.b_mw_err_mt),
                    r.status
                ));
            }
            std::fs::write(out.join("fit_summary.csv"), text)?;
        }
        OutputFormat::Json => {
            let text = serde_json::to_string_pretty(&rows)
                .map_err(|e| Error::Format(format!("summary serialization: {e}")))?;
            std::fs::write(out.join("fit_summary.json"), text + "\n")?;
        }
    }

    println!(
        "{:<18} {:>12} {:>12} {:>12} {:>12}  {}",
        "file", "f_acz_MHz", "+/-", "B_mw_mT", "+/-", "status"
    );
    for r in &rows {
        println!(
            "{:<18} {:>12} {:>12} {:>12} {:>12}  {}",
            r.file,
            cell(r.f_acz_mhz),
            cell(r.f_acz_err_mhz),
            cell(r.b_mw_mt),
            cell(r.b_mw_err_mt),
            r.status
        );
    }
    println!("fitted: {n_ok}/{} traces", rows.len());

    if n_ok == 0 {
        return Err(Error::Dataset(format!("all {} traces failed to fit", rows.len())));
    }
    Ok(())
}
