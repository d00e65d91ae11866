//! Experiment configuration: one TOML file drives every scenario.
//!
//! Field keys are snake_case, enum values kebab-case. Unknown keys are
//! rejected, the RNG seed is mandatory (no entropy default anywhere), and
//! `validate` reports every violation at once instead of stopping at the
//! first.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::measure::{CameraModel, MapGrid, OmegaAntenna, ResonatorResponse, RippleSpec};
use crate::signal::{SignalModelParams, DEFAULT_PHASE_GRID_STEP};
use crate::spin::{PhysicalConstants, ShiftMode};
use crate::Result;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    AmplitudeSweep,
    FrequencySweep,
    Imaging,
    SensitivityScan,
    CombStudy,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::AmplitudeSweep => "amplitude-sweep",
            Scenario::FrequencySweep => "frequency-sweep",
            Scenario::Imaging => "imaging",
            Scenario::SensitivityScan => "sensitivity-scan",
            Scenario::CombStudy => "comb-study",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpinKind {
    /// Spin-1 ground-state manifold (drive factor 1/sqrt(2)).
    Nv,
    /// Plain two-level system (drive factor 1/2).
    TwoLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsSection {
    /// Signal Rabi frequency at the reference amplitude, MHz.
    pub omega_mhz: f64,
    pub detuning_mhz: f64,
    pub t2_us: f64,
    pub contrast: f64,
    pub f_nv_mhz: f64,
    pub shift_mode: ShiftMode,
    pub spin: SpinKind,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        let p = SignalModelParams::default();
        PhysicsSection {
            omega_mhz: p.omega,
            detuning_mhz: p.detuning,
            t2_us: p.t2,
            contrast: p.contrast,
            f_nv_mhz: p.f_nv,
            shift_mode: p.shift_mode,
            spin: SpinKind::Nv,
        }
    }
}

impl PhysicsSection {
    pub fn model(&self) -> SignalModelParams {
        SignalModelParams {
            omega: self.omega_mhz,
            detuning: self.detuning_mhz,
            t2: self.t2_us,
            contrast: self.contrast,
            f_nv: self.f_nv_mhz,
            shift_mode: self.shift_mode,
        }
    }

    pub fn constants(&self) -> PhysicalConstants {
        match self.spin {
            SpinKind::Nv => PhysicalConstants::nv(),
            SpinKind::TwoLevel => PhysicalConstants::two_level(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    Cp2,
    Xy8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Log,
    Linear,
}

/// A tau grid, either listed explicitly or generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauGridSpec {
    Explicit(Vec<f64>),
    Generated {
        kind: GridKind,
        min_us: f64,
        max_us: f64,
        points: usize,
    },
}

impl TauGridSpec {
    pub fn resolve(&self) -> Result<Vec<f64>> {
        let grid = match self {
            TauGridSpec::Explicit(v) => v.clone(),
            TauGridSpec::Generated { kind, min_us, max_us, points } => {
                if !(min_us.is_finite() && max_us.is_finite() && *min_us > 0.0 && max_us > min_us)
                {
                    return Err(Error::Grid(format!(
                        "generated grid needs 0 < min < max, got ({min_us}, {max_us})"
                    )));
                }
                if *points < 2 {
                    return Err(Error::Grid(format!(
                        "generated grid needs at least 2 points, got {points}"
                    )));
                }
                (0..*points)
                    .map(|i| {
                        let f = i as f64 / (points - 1) as f64;
                        match kind {
                            GridKind::Log => min_us * (max_us / min_us).powf(f),
                            GridKind::Linear => min_us + (max_us - min_us) * f,
                        }
                    })
                    .collect()
            }
        };
        if grid.is_empty() {
            return Err(Error::Grid("tau grid is empty".into()));
        }
        for w in grid.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Grid(format!(
                    "tau grid not strictly increasing at {}",
                    w[0]
                )));
            }
        }
        if !(grid[0] > 0.0) || grid.iter().any(|t| !t.is_finite()) {
            return Err(Error::Grid("tau values must be finite and positive".into()));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    pub kind: ProtocolKind,
    /// Block count for the eightfold sequence; ignored by the two-pulse one.
    pub n: usize,
    pub control_rabi_mhz: f64,
    /// Zero-duration pulses instead of finite ones.
    pub ideal_pulses: bool,
    /// Defaults to 40 log points over [0.05, 4 T2].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<TauGridSpec>,
    pub phase_grid_step: f64,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            kind: ProtocolKind::Cp2,
            n: 1,
            control_rabi_mhz: 10.0,
            ideal_pulses: false,
            tau: None,
            phase_grid_step: DEFAULT_PHASE_GRID_STEP,
        }
    }
}

impl ProtocolSection {
    /// Pi-pulse count of the configured sequence.
    pub fn n_pi(&self) -> usize {
        match self.kind {
            ProtocolKind::Cp2 => 2,
            ProtocolKind::Xy8 => 8 * self.n,
        }
    }

    pub fn resolve_tau(&self, t2_us: f64) -> Result<Vec<f64>> {
        match &self.tau {
            Some(spec) => spec.resolve(),
            None => {
                let hi = if t2_us.is_finite() { 4.0 * t2_us } else { 12.8 };
                TauGridSpec::Generated {
                    kind: GridKind::Log,
                    min_us: 0.05,
                    max_us: hi,
                    points: 40,
                }
                .resolve()
            }
        }
    }
}

/// Measurement budget: exactly one of the two ways to state it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_time_s: Option<f64>,
    /// Repetitions of the full sweep; converted to time via the sweep
    /// duration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<u64>,
}

impl BudgetSpec {
    fn collect_violations(&self, where_: &str, errors: &mut Vec<String>) {
        match (self.total_time_s, self.repetitions) {
            (Some(_), Some(_)) => errors.push(format!(
                "{where_}: state the budget as total_time_s or repetitions, not both"
            )),
            (None, None) => errors.push(format!(
                "{where_}: a budget (total_time_s or repetitions) is required"
            )),
            (Some(t), None) if !(t > 0.0 && t.is_finite()) => {
                errors.push(format!("{where_}: total_time_s must be finite and > 0, got {t}"))
            }
            (None, Some(0)) => errors.push(format!("{where_}: repetitions must be >= 1")),
            _ => {}
        }
    }

    /// Wall-clock budget in seconds for a sweep of the given duration.
    pub fn total_time_for(&self, sweep_us: f64) -> f64 {
        match (self.total_time_s, self.repetitions) {
            (Some(t), _) => t,
            (None, Some(r)) => r as f64 * sweep_us * 1e-6,
            (None, None) => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeSweepSection {
    /// Microwave amplitudes to sweep, mT.
    pub amplitudes_mt: Vec<f64>,
    pub budget: BudgetSpec,
}

/// A frequency list, explicit or linearly generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FreqSpec {
    Explicit(Vec<f64>),
    Linear { min_mhz: f64, max_mhz: f64, points: usize },
}

impl FreqSpec {
    pub fn resolve(&self) -> Result<Vec<f64>> {
        let grid = match self {
            FreqSpec::Explicit(v) => v.clone(),
            FreqSpec::Linear { min_mhz, max_mhz, points } => {
                if !(min_mhz.is_finite() && max_mhz.is_finite() && max_mhz > min_mhz) {
                    return Err(Error::Grid(format!(
                        "frequency grid needs min < max, got ({min_mhz}, {max_mhz})"
                    )));
                }
                if *points < 2 {
                    return Err(Error::Grid(format!(
                        "frequency grid needs at least 2 points, got {points}"
                    )));
                }
                (0..*points)
                    .map(|i| min_mhz + (max_mhz - min_mhz) * i as f64 / (points - 1) as f64)
                    .collect()
            }
        };
        if grid.is_empty() {
            return Err(Error::Grid("frequency grid is empty".into()));
        }
        if grid.iter().any(|f| !f.is_finite() || *f <= 0.0) {
            return Err(Error::Grid("frequencies must be finite and positive".into()));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencySweepSection {
    pub f_mw: FreqSpec,
    #[serde(default)]
    pub resonator: ResonatorResponse,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ripple: Option<RippleSpec>,
    pub budget: BudgetSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImagingModeKind {
    Rabi,
    Acz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagingSection {
    pub kind: ImagingModeKind,
    #[serde(default)]
    pub antenna: OmegaAntenna,
    #[serde(default)]
    pub grid: MapGrid,
    pub budget: BudgetSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EtaBestSpec {
    pub min_us: f64,
    pub max_us: f64,
    pub points: usize,
}

impl Default for EtaBestSpec {
    fn default() -> Self {
        EtaBestSpec { min_us: 0.1, max_us: 10.0, points: 300 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetuningScanSpec {
    pub min_mhz: f64,
    pub max_mhz: f64,
    pub points: usize,
    /// Field amplitude the scan is evaluated at, mT.
    pub b_mt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityScanSection {
    /// Pi-pulse counts for the scaling study: 2 or a multiple of 8.
    pub n_pi: Vec<u64>,
    /// Integration times for the Monte Carlo scatter, seconds.
    pub total_times_s: Vec<f64>,
    pub trials: usize,
    /// Per-readout noise multiplier emulating a small evaluation region of
    /// the camera frame.
    pub roi_noise_factor: f64,
    /// Decay-time pulse-count exponent for the forward model.
    pub s_exponent: f64,
    pub t2_ref_us: f64,
    pub n_ref: f64,
    /// Coarse tau sampling for the scaling study; defaults to linear
    /// [0.1, 10] in steps of 0.3.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_coarse: Option<TauGridSpec>,
    pub eta_best_tau: EtaBestSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detuning_scan: Option<DetuningScanSpec>,
}

impl Default for SensitivityScanSection {
    fn default() -> Self {
        SensitivityScanSection {
            n_pi: vec![2, 8, 16, 32, 64],
            total_times_s: vec![10.0, 18.0, 32.0, 56.0, 100.0, 178.0, 316.0],
            trials: 200,
            roi_noise_factor: 1.0,
            s_exponent: crate::sensitivity::T2_SCALING_DEFAULT,
            t2_ref_us: crate::sensitivity::T2_REF_US,
            n_ref: crate::sensitivity::N_PI_REF,
            tau_coarse: None,
            eta_best_tau: EtaBestSpec::default(),
            detuning_scan: None,
        }
    }
}

impl SensitivityScanSection {
    pub fn resolve_tau_coarse(&self) -> Result<Vec<f64>> {
        match &self.tau_coarse {
            Some(spec) => spec.resolve(),
            None => Ok((0..34).map(|k| 0.1 + 0.3 * k as f64).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CombStudySection {
    pub tau_min_us: f64,
    pub tau_max_us: f64,
    /// Grid step; defaults to a tenth of the dressed period.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_us: Option<f64>,
    pub cutoff_mhz: f64,
}

impl Default for CombStudySection {
    fn default() -> Self {
        CombStudySection { tau_min_us: 0.2, tau_max_us: 4.0, step_us: None, cutoff_mhz: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub scenario: Scenario,
    /// The only randomness source in a run.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub physics: PhysicsSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub camera: CameraModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude_sweep: Option<AmplitudeSweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_sweep: Option<FrequencySweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imaging: Option<ImagingSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity_scan: Option<SensitivityScanSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comb_study: Option<CombStudySection>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Canonical serialized form; the manifest stores and hashes this, so
    /// equality of configs is equality of these bytes.
    pub fn canonical_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn sha256_hex(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_toml()?.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }

    /// Camera with the run seed substituted in; the top-level seed is the
    /// only one that counts.
    pub fn effective_camera(&self) -> CameraModel {
        CameraModel { seed: self.seed, ..self.camera }
    }

    /// Checks the whole config and reports every violation at once.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            errors.push(format!(
                "schema_version {} unsupported; this build reads {CONFIG_SCHEMA_VERSION}",
                self.schema_version
            ));
        }
        if let Err(e) = self.physics.model().validate() {
            errors.push(format!("physics: {e}"));
        }
        if let Err(e) = self.camera.validate() {
            errors.push(format!("camera: {e}"));
        }
        if !self.protocol.ideal_pulses && !(self.protocol.control_rabi_mhz > 0.0) {
            errors.push(format!(
                "protocol: control_rabi_mhz must be > 0 for finite pulses, got {}",
                self.protocol.control_rabi_mhz
            ));
        }
        if self.protocol.kind == ProtocolKind::Xy8 && self.protocol.n < 1 {
            errors.push("protocol: xy8 needs n >= 1".into());
        }
        if !(self.protocol.phase_grid_step > 0.0 && self.protocol.phase_grid_step <= 0.1) {
            errors.push(format!(
                "protocol: phase_grid_step must be in (0, 0.1], got {}",
                self.protocol.phase_grid_step
            ));
        }
        if let Err(e) = self.protocol.resolve_tau(self.physics.t2_us) {
            errors.push(format!("protocol.tau: {e}"));
        }
        match self.scenario {
            Scenario::AmplitudeSweep => match &self.amplitude_sweep {
                None => errors.push("scenario amplitude-sweep needs an [amplitude_sweep] section".into()),
                Some(s) => {
                    if s.amplitudes_mt.is_empty() {
                        errors.push("amplitude_sweep: amplitudes_mt is empty".into());
                    }
                    if s.amplitudes_mt.iter().any(|b| !b.is_finite() || *b <= 0.0) {
                        errors.push("amplitude_sweep: amplitudes must be finite and > 0".into());
                    }
                    s.budget.collect_violations("amplitude_sweep.budget", &mut errors);
                    if !(self.physics.detuning_mhz > 0.0) {
                        errors.push(format!(
                            "amplitude_sweep: physics.detuning_mhz must be > 0, got {}",
                            self.physics.detuning_mhz
                        ));
                    }
                }
            },
            Scenario::FrequencySweep => match &self.frequency_sweep {
                None => errors.push("scenario frequency-sweep needs a [frequency_sweep] section".into()),
                Some(s) => {
                    match s.f_mw.resolve() {
                        Err(e) => errors.push(format!("frequency_sweep.f_mw: {e}")),
                        Ok(grid) => {
                            if grid.iter().any(|f| (self.physics.f_nv_mhz - f).abs() < 1e-9) {
                                errors.push(
                                    "frequency_sweep: a drive frequency sits exactly on the probed transition".into(),
                                );
                            }
                        }
                    }
                    if let Err(e) = s.resonator.validate() {
                        errors.push(format!("frequency_sweep.resonator: {e}"));
                    }
                    if let Some(r) = &s.ripple {
                        if !(r.period_mhz > 0.0) || !(r.depth.abs() < 1.0) {
                            errors.push(
                                "frequency_sweep.ripple: period must be > 0 and |depth| < 1".into(),
                            );
                        }
                    }
                    s.budget.collect_violations("frequency_sweep.budget", &mut errors);
                }
            },
            Scenario::Imaging => match &self.imaging {
                None => errors.push("scenario imaging needs an [imaging] section".into()),
                Some(s) => {
                    if let Err(e) = s.antenna.validate() {
                        errors.push(format!("imaging.antenna: {e}"));
                    }
                    if let Err(e) = s.grid.validate() {
                        errors.push(format!("imaging.grid: {e}"));
                    }
                    if s.kind == ImagingModeKind::Acz && self.physics.detuning_mhz == 0.0 {
                        errors.push("imaging: acz mode needs a nonzero physics.detuning_mhz".into());
                    }
                    s.budget.collect_violations("imaging.budget", &mut errors);
                }
            },
            Scenario::SensitivityScan => match &self.sensitivity_scan {
                None => errors.push("scenario sensitivity-scan needs a [sensitivity_scan] section".into()),
                Some(s) => {
                    if s.n_pi.is_empty() {
                        errors.push("sensitivity_scan: n_pi is empty".into());
                    }
                    for &n in &s.n_pi {
                        if n != 2 && n % 8 != 0 {
                            errors.push(format!(
                                "sensitivity_scan: n_pi value {n} is neither 2 nor a multiple of 8"
                            ));
                        }
                    }
                    if s.trials < 2 {
                        errors.push(format!("sensitivity_scan: trials must be >= 2, got {}", s.trials));
                    }
                    if !(s.roi_noise_factor > 0.0) {
                        errors.push(format!(
                            "sensitivity_scan: roi_noise_factor must be > 0, got {}",
                            s.roi_noise_factor
                        ));
                    }
                    if s.total_times_s.len() < 3 {
                        errors.push("sensitivity_scan: need at least 3 total_times_s".into());
                    } else {
                        let lo = s.total_times_s.iter().cloned().fold(f64::INFINITY, f64::min);
                        let hi = s.total_times_s.iter().cloned().fold(0.0f64, f64::max);
                        if !(lo > 0.0) {
                            errors.push("sensitivity_scan: total_times_s must be positive".into());
                        } else if hi / lo < 10.0 {
                            errors.push(format!(
                                "sensitivity_scan: total_times_s span {:.2}x; at least a decade is required",
                                hi / lo
                            ));
                        }
                    }
                    if !(s.t2_ref_us > 0.0 && s.n_ref > 0.0) {
                        errors.push("sensitivity_scan: t2_ref_us and n_ref must be > 0".into());
                    }
                    if let Err(e) = s.resolve_tau_coarse() {
                        errors.push(format!("sensitivity_scan.tau_coarse: {e}"));
                    }
                    let eb = &s.eta_best_tau;
                    if !(eb.min_us > 0.0 && eb.max_us > eb.min_us) {
                        errors.push(format!(
                            "sensitivity_scan.eta_best_tau: invalid range ({}, {})",
                            eb.min_us, eb.max_us
                        ));
                    }
                    if eb.points < 100 {
                        errors.push(format!(
                            "sensitivity_scan.eta_best_tau: needs at least 100 points, got {}",
                            eb.points
                        ));
                    }
                    if let Some(d) = &s.detuning_scan {
                        if !(d.min_mhz > 0.0 && d.max_mhz > d.min_mhz) {
                            errors.push(format!(
                                "sensitivity_scan.detuning_scan: invalid range ({}, {})",
                                d.min_mhz, d.max_mhz
                            ));
                        }
                        if d.points < 2 {
                            errors.push("sensitivity_scan.detuning_scan: needs at least 2 points".into());
                        }
                        if !(d.b_mt > 0.0) {
                            errors.push(format!(
                                "sensitivity_scan.detuning_scan: b_mt must be > 0, got {}",
                                d.b_mt
                            ));
                        }
                    }
                    if !(self.physics.detuning_mhz > 0.0) {
                        errors.push(format!(
                            "sensitivity_scan: physics.detuning_mhz must be > 0, got {}",
                            self.physics.detuning_mhz
                        ));
                    }
                }
            },
            Scenario::CombStudy => match &self.comb_study {
                None => errors.push("scenario comb-study needs a [comb_study] section".into()),
                Some(s) => {
                    if !(s.tau_min_us > 0.0 && s.tau_max_us > s.tau_min_us) {
                        errors.push(format!(
                            "comb_study: invalid tau range ({}, {})",
                            s.tau_min_us, s.tau_max_us
                        ));
                    }
                    if let Some(step) = s.step_us {
                        if !(step > 0.0) {
                            errors.push(format!("comb_study: step_us must be > 0, got {step}"));
                        }
                    }
                    if !(s.cutoff_mhz > 0.0) {
                        errors.push(format!(
                            "comb_study: cutoff_mhz must be > 0, got {}",
                            s.cutoff_mhz
                        ));
                    }
                    if self.protocol.kind != ProtocolKind::Xy8 {
                        errors.push("comb_study: protocol.kind must be xy8".into());
                    }
                }
            },
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigValidation(errors))
        }
    }
}
