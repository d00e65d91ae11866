//! On-disk artifacts: trace CSV with provenance headers, dataset manifests
//! carrying a config echo verified by hash, field-map CSV with a sidecar,
//! pixel stacks, and fit reports.
//!
//! Writers are byte-deterministic: keys are sorted, floats use the shortest
//! round-trip rendering, and nothing depends on wall clock or thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::Error;
use crate::estimate::FitResult;
use crate::measure::{FieldMap, PixelTraceSet};
use crate::signal::SignalTrace;
use crate::Result;

pub const TRACE_SCHEMA: &str = "trace-csv v1";
pub const MAP_SCHEMA: &str = "map-csv v1";
pub const PIXELS_SCHEMA: &str = "pixels-csv v1";
pub const FIT_REPORT_SCHEMA: &str = "fit-report v1";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Output encoding for datasets and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Domain(format!("unknown format {other}; use csv or json"))),
        }
    }
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    if s == "nan" {
        return Ok(f64::NAN);
    }
    s.parse::<f64>()
        .map_err(|_| Error::Format(format!("not a number: {s:?}")))
}

/// Renders a trace as CSV with `# key: value` provenance headers.
pub fn trace_to_csv(trace: &SignalTrace) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# schema: {TRACE_SCHEMA}");
    let _ = writeln!(out, "# integration_time_s: {}", fmt_f64(trace.integration_time));
    for (k, v) in &trace.meta {
        let _ = writeln!(out, "# {k}: {v}");
    }
    out.push_str("tau_us,contrast,sigma\n");
    for i in 0..trace.len() {
        let _ = writeln!(
            out,
            "{},{},{}",
            fmt_f64(trace.tau_grid[i]),
            fmt_f64(trace.contrast[i]),
            fmt_f64(trace.noise_sigma[i])
        );
    }
    out
}

pub fn write_trace_csv(path: &Path, trace: &SignalTrace) -> Result<()> {
    std::fs::write(path, trace_to_csv(trace))?;
    Ok(())
}

pub fn read_trace_json(path: &Path) -> Result<SignalTrace> {
    let text = std::fs::read_to_string(path)?;
    let trace: SignalTrace =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("trace json: {e}")))?;
    // Re-run the structural checks; serde only guarantees the shape.
    SignalTrace::new(
        trace.tau_grid,
        trace.contrast,
        trace.noise_sigma,
        trace.integration_time,
        trace.meta,
    )
}

pub fn write_trace_json(path: &Path, trace: &SignalTrace) -> Result<()> {
    let text = serde_json::to_string_pretty(trace)
        .map_err(|e| Error::Format(format!("trace serialization: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Parses a trace written by [`write_trace_csv`].
pub fn read_trace_csv(path: &Path) -> Result<SignalTrace> {
    let text = std::fs::read_to_string(path)?;
    let mut meta = BTreeMap::new();
    let mut integration_time = 0.0;
    let mut saw_schema = false;
    let mut saw_header = false;
    let mut tau = Vec::new();
    let mut contrast = Vec::new();
    let mut sigma = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# ") {
            let (key, value) = rest
                .split_once(": ")
                .ok_or_else(|| Error::Format(format!("line {}: bad header {line:?}", lineno + 1)))?;
            match key {
                "schema" => {
                    if value != TRACE_SCHEMA {
                        return Err(Error::Format(format!("unsupported schema {value:?}")));
                    }
                    saw_schema = true;
                }
                "integration_time_s" => integration_time = parse_f64(value)?,
                _ => {
                    meta.insert(key.to_string(), value.to_string());
                }
            }
            continue;
        }
        if !saw_header {
            if line != "tau_us,contrast,sigma" {
                return Err(Error::Format(format!(
                    "line {}: expected column header, got {line:?}",
                    lineno + 1
                )));
            }
            saw_header = true;
            continue;
        }
        let mut fields = line.split(',');
        let (a, b, c) = (fields.next(), fields.next(), fields.next());
        if fields.next().is_some() {
            return Err(Error::Format(format!("line {}: too many fields", lineno + 1)));
        }
        match (a, b, c) {
            (Some(a), Some(b), Some(c)) => {
                tau.push(parse_f64(a)?);
                contrast.push(parse_f64(b)?);
                sigma.push(parse_f64(c)?);
            }
            _ => return Err(Error::Format(format!("line {}: too few fields", lineno + 1))),
        }
    }
    if !saw_schema {
        return Err(Error::Format("missing schema header".into()));
    }
    SignalTrace::new(tau, contrast, sigma, integration_time, meta)
}

/// Dataset manifest: provenance, file list, and the full config echo whose
/// hash must match `config_sha256`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub config_sha256: String,
    pub files: Vec<String>,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn for_config(cfg: &ExperimentConfig, files: Vec<String>) -> Result<Self> {
        Ok(Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            scenario: cfg.scenario.as_str().to_string(),
            seed: cfg.seed,
            config_sha256: cfg.sha256_hex()?,
            files,
            config: cfg.clone(),
        })
    }
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.toml")
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let text = toml::to_string(manifest)
        .map_err(|e| Error::Format(format!("manifest serialization: {e}")))?;
    std::fs::write(manifest_path(dir), text)?;
    Ok(())
}

/// Reads and verifies a manifest: schema version and config hash must both
/// check out.
pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(manifest_path(dir))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::Format(format!("manifest parse: {e}")))?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "manifest schema_version {} unsupported; this build reads {MANIFEST_SCHEMA_VERSION}",
            manifest.schema_version
        )));
    }
    let recomputed = manifest.config.sha256_hex()?;
    if recomputed != manifest.config_sha256 {
        return Err(Error::Format(format!(
            "config hash mismatch: manifest says {}, echo hashes to {recomputed}",
            manifest.config_sha256
        )));
    }
    Ok(manifest)
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.toml")
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct MapSidecar {
    schema: String,
    width: usize,
    height: usize,
    pixel_size_um: f64,
    units: String,
    valid_count: usize,
}

/// Writes a field map as a value matrix (rows top to bottom, `nan` for
/// masked pixels) plus a `.meta.toml` sidecar with the geometry.
pub fn write_map_csv(path: &Path, map: &FieldMap) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# schema: {MAP_SCHEMA}");
    for y in 0..map.height {
        let row: Vec<String> = (0..map.width)
            .map(|x| {
                let i = y * map.width + x;
                if map.mask[i] {
                    fmt_f64(map.values[i])
                } else {
                    "nan".into()
                }
            })
            .collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    std::fs::write(path, out)?;
    let sidecar = MapSidecar {
        schema: MAP_SCHEMA.to_string(),
        width: map.width,
        height: map.height,
        pixel_size_um: map.pixel_size_um,
        units: "mT".to_string(),
        valid_count: map.valid_count(),
    };
    let text = toml::to_string(&sidecar)
        .map_err(|e| Error::Format(format!("sidecar serialization: {e}")))?;
    std::fs::write(sidecar_path(path), text)?;
    Ok(())
}

pub fn write_map_json(path: &Path, map: &FieldMap) -> Result<()> {
    let text = serde_json::to_string_pretty(map)
        .map_err(|e| Error::Format(format!("map serialization: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Reads a map written by [`write_map_csv`]; `nan` cells come back masked.
pub fn read_map_csv(path: &Path) -> Result<FieldMap> {
    let sidecar_text = std::fs::read_to_string(sidecar_path(path))?;
    let sidecar: MapSidecar = toml::from_str(&sidecar_text)
        .map_err(|e| Error::Format(format!("sidecar parse: {e}")))?;
    if sidecar.schema != MAP_SCHEMA {
        return Err(Error::Format(format!("unsupported map schema {:?}", sidecar.schema)));
    }
    let text = std::fs::read_to_string(path)?;
    let mut values = Vec::with_capacity(sidecar.width * sidecar.height);
    let mut mask = Vec::with_capacity(sidecar.width * sidecar.height);
    for line in text.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        for field in line.split(',') {
            let v = parse_f64(field)?;
            mask.push(!v.is_nan());
            values.push(if v.is_nan() { 0.0 } else { v });
        }
    }
    if values.len() != sidecar.width * sidecar.height {
        return Err(Error::Format(format!(
            "map has {} cells, sidecar says {}x{}",
            values.len(),
            sidecar.width,
            sidecar.height
        )));
    }
    FieldMap::new(sidecar.width, sidecar.height, sidecar.pixel_size_um, values, mask)
}

/// Writes a pixel stack as one wide CSV: tau and shared sigma, then one
/// column per pixel in row-major order.
pub fn write_pixels_csv(path: &Path, set: &PixelTraceSet) -> Result<()> {
    set.validate()?;
    let mut out = String::new();
    let _ = writeln!(out, "# schema: {PIXELS_SCHEMA}");
    let _ = writeln!(out, "# width: {}", set.width);
    let _ = writeln!(out, "# height: {}", set.height);
    let _ = writeln!(out, "# pixel_size_um: {}", fmt_f64(set.pixel_size_um));
    for (k, v) in &set.meta {
        let _ = writeln!(out, "# {k}: {v}");
    }
    let mut header = String::from("tau_us,sigma");
    for i in 0..set.contrast.len() {
        let _ = write!(header, ",px{i}");
    }
    out.push_str(&header);
    out.push('\n');
    for row in 0..set.tau_grid.len() {
        let _ = write!(out, "{},{}", fmt_f64(set.tau_grid[row]), fmt_f64(set.noise_sigma[row]));
        for series in &set.contrast {
            let _ = write!(out, ",{}", fmt_f64(series[row]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_pixels_csv(path: &Path) -> Result<PixelTraceSet> {
    let text = std::fs::read_to_string(path)?;
    let mut meta = BTreeMap::new();
    let (mut width, mut height, mut pixel_size) = (0usize, 0usize, 0.0f64);
    let mut saw_schema = false;
    let mut n_pixels = 0usize;
    let mut tau = Vec::new();
    let mut sigma = Vec::new();
    let mut contrast: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# ") {
            let (key, value) = rest
                .split_once(": ")
                .ok_or_else(|| Error::Format(format!("line {}: bad header {line:?}", lineno + 1)))?;
            match key {
                "schema" => {
                    if value != PIXELS_SCHEMA {
                        return Err(Error::Format(format!("unsupported schema {value:?}")));
                    }
                    saw_schema = true;
                }
                "width" => {
                    width = value
                        .parse()
                        .map_err(|_| Error::Format(format!("bad width {value:?}")))?
                }
                "height" => {
                    height = value
                        .parse()
                        .map_err(|_| Error::Format(format!("bad height {value:?}")))?
                }
                "pixel_size_um" => pixel_size = parse_f64(value)?,
                _ => {
                    meta.insert(key.to_string(), value.to_string());
                }
            }
            continue;
        }
        if n_pixels == 0 && line.starts_with("tau_us,sigma") {
            n_pixels = line.split(',').count() - 2;
            contrast = vec![Vec::new(); n_pixels];
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_pixels + 2 {
            return Err(Error::Format(format!(
                "line {}: expected {} fields, got {}",
                lineno + 1,
                n_pixels + 2,
                fields.len()
            )));
        }
        tau.push(parse_f64(fields[0])?);
        sigma.push(parse_f64(fields[1])?);
        for (i, f) in fields[2..].iter().enumerate() {
            contrast[i].push(parse_f64(f)?);
        }
    }
    if !saw_schema {
        return Err(Error::Format("missing schema header".into()));
    }
    let set = PixelTraceSet {
        width,
        height,
        pixel_size_um: pixel_size,
        tau_grid: tau,
        contrast,
        noise_sigma: sigma,
        meta,
    };
    set.validate()?;
    Ok(set)
}

/// Key-value text rendering of a fit result.
pub fn fit_report_text(fit: &FitResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# schema: {FIT_REPORT_SCHEMA}");
    let _ = writeln!(out, "converged: {}", fit.converged);
    let _ = writeln!(out, "iterations: {}", fit.iterations);
    let _ = writeln!(out, "residual_variance: {}", fmt_f64(fit.residual_variance));
    for (i, name) in fit.param_names.iter().enumerate() {
        let _ = writeln!(
            out,
            "param: {name} {} {}",
            fmt_f64(fit.params[i]),
            fmt_f64(fit.std_error(name).unwrap_or(f64::NAN))
        );
    }
    for (name, value) in &fit.fixed {
        let _ = writeln!(out, "fixed: {name} {}", fmt_f64(*value));
    }
    out
}

pub fn write_fit_report(path: &Path, fit: &FitResult, format: OutputFormat) -> Result<()> {
    match format {
        OutputFormat::Csv => std::fs::write(path, fit_report_text(fit))?,
        OutputFormat::Json => {
            let text = serde_json::to_string_pretty(fit)
                .map_err(|e| Error::Format(format!("fit serialization: {e}")))?;
            std::fs::write(path, text + "\n")?;
        }
    }
    Ok(())
}
