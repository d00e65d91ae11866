//! Measurement realism: camera-frame noise and integration-time accounting,
//! plus the synthetic spatial and spectral targets (omega-antenna field map,
//! resonator frequency response) that the imaging and frequency-sweep
//! studies probe.
//!
//! Randomness is counter-based: one ChaCha stream per sweep point, keyed by
//! (seed, point index), so serial and parallel generation produce identical
//! bytes.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::distributions::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_finite, Error};
use crate::signal::{SignalModelParams, SignalTrace};
use crate::spin::PhysicalConstants;
use crate::Result;

/// How per-point noise is synthesized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    /// Gaussian on normalized contrast, standard deviation
    /// `sigma_s / sqrt(repetitions)`; matches how the analysis treats noise.
    Gaussian,
    /// Poisson on raw photon counts with `counts_bright` mean counts per
    /// readout, renormalized back to contrast.
    Poisson,
}

/// Optical readout model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraModel {
    /// Laser readout time per repetition, us.
    pub tau_read: f64,
    /// Mean photon counts per readout of the bright state.
    pub counts_bright: f64,
    /// Contrast noise per single readout.
    pub sigma_s: f64,
    pub noise: NoiseKind,
    pub seed: u64,
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        ensure_finite(&[
            ("tau_read", self.tau_read),
            ("counts_bright", self.counts_bright),
            ("sigma_s", self.sigma_s),
        ])?;
        if self.tau_read <= 0.0 {
            return Err(Error::Domain(format!("tau_read must be > 0, got {}", self.tau_read)));
        }
        if self.sigma_s < 0.0 {
            return Err(Error::Domain(format!("sigma_s must be >= 0, got {}", self.sigma_s)));
        }
        if self.counts_bright <= 0.0 {
            return Err(Error::Domain(format!(
                "counts_bright must be > 0, got {}",
                self.counts_bright
            )));
        }
        Ok(())
    }
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            tau_read: 64.0,
            counts_bright: 1000.0,
            sigma_s: 0.01,
            noise: NoiseKind::Gaussian,
            seed: 1,
        }
    }
}

/// One sequence repetition at sweep value tau spends `2 tau + tau_read`.
pub fn repetition_time_us(tau: f64, tau_read: f64) -> f64 {
    2.0 * tau + tau_read
}

fn point_rng(seed: u64, point: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(point);
    rng
}

fn noisy_point(clean: f64, reps: f64, cam: &CameraModel, rng: &mut ChaCha8Rng) -> (f64, f64) {
    match cam.noise {
        NoiseKind::Gaussian => {
            let sigma = cam.sigma_s / reps.sqrt();
            if sigma == 0.0 {
                return (clean, 0.0);
            }
            let n = rand_distr::Normal::new(0.0, sigma).expect("finite sigma");
            (clean + n.sample(rng), sigma)
        }
        NoiseKind::Poisson => {
            // Bright state emits counts_bright per readout on average; the
            // point's mean is proportional to its contrast value.
            let lambda = (cam.counts_bright * reps * clean).max(0.0);
            let sigma = lambda.sqrt() / (cam.counts_bright * reps);
            if lambda == 0.0 {
                return (0.0, 0.0);
            }
            let d = rand_distr::Poisson::new(lambda).expect("positive lambda");
            (d.sample(rng) / (cam.counts_bright * reps), sigma)
        }
    }
}

/// Adds measurement noise to a clean trace for a total wall-clock budget.
///
/// The budget is split uniformly: every tau point gets the same number of
/// repetitions, `floor(total_time / sum_tau(2 tau + tau_read))`. Per-point
/// noise shrinks as the square root of that count. Deterministic in
/// `cam.seed`, with one RNG stream per point.
pub fn synth_noisy_trace(
    clean: &SignalTrace,
    cam: &CameraModel,
    total_time_s: f64,
) -> Result<SignalTrace> {
    cam.validate()?;
    ensure_finite(&[("total_time_s", total_time_s)])?;
    if total_time_s <= 0.0 {
        return Err(Error::Domain(format!("total_time must be > 0, got {total_time_s}")));
    }
    if clean.is_empty() {
        return Err(Error::Dataset("cannot add noise to an empty trace".into()));
    }
    let sweep_us: f64 =
        clean.tau_grid.iter().map(|&t| repetition_time_us(t, cam.tau_read)).sum();
    // The epsilon absorbs rounding in budgets built as multiples of the
    // sweep time; it cannot add a repetition a real budget lacks.
    let reps = (total_time_s * 1e6 / sweep_us + 1e-9).floor();
    if reps < 1.0 {
        return Err(Error::Domain(format!(
            "budget {total_time_s} s allows zero repetitions of a {sweep_us} us sweep"
        )));
    }
    let mut contrast = Vec::with_capacity(clean.len());
    let mut noise_sigma = Vec::with_capacity(clean.len());
    for (i, &c) in clean.contrast.iter().enumerate() {
        let mut rng = point_rng(cam.seed, i as u64);
        let (y, s) = noisy_point(c, reps, cam, &mut rng);
        contrast.push(y);
        noise_sigma.push(s);
    }
    let mut meta = clean.meta.clone();
    meta.insert("repetitions".into(), format!("{reps}"));
    meta.insert("noise".into(), format!("{:?}", cam.noise).to_lowercase());
    meta.insert("sigma_s".into(), format!("{}", cam.sigma_s));
    meta.insert("seed".into(), format!("{}", cam.seed));
    SignalTrace::new(
        clean.tau_grid.clone(),
        contrast,
        noise_sigma,
        reps * sweep_us * 1e-6,
        meta,
    )
}

/// Spatial map of microwave field amplitude, row-major from the top-left
/// pixel, mT.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FieldMap {
    pub width: usize,
    pub height: usize,
    pub pixel_size_um: f64,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl FieldMap {
    pub fn new(width: usize, height: usize, pixel_size_um: f64, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != width * height || mask.len() != width * height {
            return Err(Error::Dataset(format!(
                "map size mismatch: {}x{} vs {} values, {} mask",
                width,
                height,
                values.len(),
                mask.len()
            )));
        }
        if pixel_size_um <= 0.0 || !pixel_size_um.is_finite() {
            return Err(Error::Domain(format!("pixel_size must be > 0, got {pixel_size_um}")));
        }
        for (i, (&v, &ok)) in values.iter().zip(&mask).enumerate() {
            if ok && !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("pixel {i} valid but value {v}")));
            }
        }
        Ok(Self { width, height, pixel_size_um, values, mask })
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        if x < self.width && y < self.height && self.mask[i] {
            Some(self.values[i])
        } else {
            None
        }
    }

    /// (min, max) over valid pixels.
    pub fn range(&self) -> Option<(f64, f64)> {
        let mut r: Option<(f64, f64)> = None;
        for (&v, &ok) in self.values.iter().zip(&self.mask) {
            if ok {
                r = Some(match r {
                    None => (v, v),
                    Some((lo, hi)) => (lo.min(v), hi.max(v)),
                });
            }
        }
        r
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

/// Omega-shaped antenna: a filamentary arc with a bottom gap feeding two
/// straight leads, carrying `current_a`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OmegaAntenna {
    pub outer_diameter_um: f64,
    pub inner_diameter_um: f64,
    pub current_a: f64,
    /// Straight feed length below the gap, um.
    pub lead_length_um: f64,
    /// Separation between the two leads at the gap, um.
    pub lead_gap_um: f64,
    /// Set false to model the closed circular loop (used by the on-axis
    /// oracle check).
    pub include_leads: bool,
}

impl OmegaAntenna {
    /// Filament radius: the conductor midline between inner and outer edges.
    pub fn filament_radius_um(&self) -> f64 {
        0.25 * (self.outer_diameter_um + self.inner_diameter_um)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(&[
            ("outer_diameter_um", self.outer_diameter_um),
            ("inner_diameter_um", self.inner_diameter_um),
            ("current_a", self.current_a),
            ("lead_length_um", self.lead_length_um),
            ("lead_gap_um", self.lead_gap_um),
        ])?;
        if !(self.outer_diameter_um > self.inner_diameter_um && self.inner_diameter_um > 0.0) {
            return Err(Error::Domain(format!(
                "need outer > inner > 0, got {} and {}",
                self.outer_diameter_um, self.inner_diameter_um
            )));
        }
        if self.include_leads && !(self.lead_gap_um > 0.0 && self.lead_gap_um < self.filament_radius_um()) {
            return Err(Error::Domain(format!(
                "lead gap {} incompatible with radius {}",
                self.lead_gap_um,
                self.filament_radius_um()
            )));
        }
        Ok(())
    }
}

impl Default for OmegaAntenna {
    fn default() -> Self {
        Self {
            outer_diameter_um: 250.0,
            inner_diameter_um: 100.0,
            current_a: 0.05,
            lead_length_um: 500.0,
            lead_gap_um: 20.0,
            include_leads: true,
        }
    }
}

/// Sampling grid for [`synth_field_map`]: pixel centers at
/// `center +/- ...`, NV plane `standoff_um` below the antenna plane.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapGrid {
    pub width: usize,
    pub height: usize,
    pub pixel_size_um: f64,
    pub center_x_um: f64,
    pub center_y_um: f64,
    pub standoff_um: f64,
}

impl MapGrid {
    pub fn validate(&self) -> Result<()> {
        ensure_finite(&[
            ("pixel_size_um", self.pixel_size_um),
            ("center_x_um", self.center_x_um),
            ("center_y_um", self.center_y_um),
            ("standoff_um", self.standoff_um),
        ])?;
        if self.width == 0 || self.height == 0 {
            return Err(Error::Domain("grid must have at least one pixel".into()));
        }
        if self.pixel_size_um <= 0.0 {
            return Err(Error::Domain(format!(
                "pixel_size must be > 0, got {}",
                self.pixel_size_um
            )));
        }
        Ok(())
    }

    /// Pixel-center coordinate in the antenna plane, um.
    pub fn pixel_center(&self, x: usize, y: usize) -> (f64, f64) {
        let px = (x as f64 - 0.5 * (self.width as f64 - 1.0)) * self.pixel_size_um;
        let py = (0.5 * (self.height as f64 - 1.0) - y as f64) * self.pixel_size_um;
        (self.center_x_um + px, self.center_y_um + py)
    }
}

impl Default for MapGrid {
    fn default() -> Self {
        // 120 um field of view: the corner pixels approach the filament at
        // 87.5 um and sit near three times the central amplitude.
        Self {
            width: 10,
            height: 10,
            pixel_size_um: 12.0,
            center_x_um: 0.0,
            center_y_um: 0.0,
            standoff_um: 1.0,
        }
    }
}

/// mu_0 / 4 pi in mT * um / A.
const BIOT_SAVART_MT_UM_PER_A: f64 = 100.0;

fn accumulate_segment(b: &mut [f64; 3], p: [f64; 3], a: [f64; 3], bseg: [f64; 3], current: f64) {
    // Biot-Savart for one straight filament segment from a to bseg.
    let dl = [bseg[0] - a[0], bseg[1] - a[1], bseg[2] - a[2]];
    let mid = [0.5 * (a[0] + bseg[0]), 0.5 * (a[1] + bseg[1]), 0.5 * (a[2] + bseg[2])];
    let r = [p[0] - mid[0], p[1] - mid[1], p[2] - mid[2]];
    let r2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
    let rn = r2.sqrt();
    if rn < 1e-9 {
        return;
    }
    let cross = [
        dl[1] * r[2] - dl[2] * r[1],
        dl[2] * r[0] - dl[0] * r[2],
        dl[0] * r[1] - dl[1] * r[0],
    ];
    let scale = BIOT_SAVART_MT_UM_PER_A * current / (r2 * rn);
    b[0] += scale * cross[0];
    b[1] += scale * cross[1];
    b[2] += scale * cross[2];
}

/// Field magnitude at one point, mT.
fn antenna_field_at(geom: &OmegaAntenna, p: [f64; 3]) -> f64 {
    let radius = geom.filament_radius_um();
    let mut b = [0.0; 3];
    let n_arc = 1440usize;
    let (theta_start, theta_end) = if geom.include_leads {
        // Gap centered on the -y axis.
        let half_gap = (0.5 * geom.lead_gap_um / radius).asin();
        (-0.5 * std::f64::consts::PI + half_gap, 1.5 * std::f64::consts::PI - half_gap)
    } else {
        (0.0, std::f64::consts::TAU)
    };
    let span = theta_end - theta_start;
    let mut prev = [radius * theta_start.cos(), radius * theta_start.sin(), 0.0];
    for k in 1..=n_arc {
        let th = theta_start + span * k as f64 / n_arc as f64;
        let next = [radius * th.cos(), radius * th.sin(), 0.0];
        accumulate_segment(&mut b, p, prev, next, geom.current_a);
        prev = next;
    }
    if geom.include_leads {
        let n_lead = 400usize;
        let y0 = radius * theta_start.sin();
        // Current enters along the right lead (upward, toward the arc start)
        // and leaves along the left lead (downward).
        let xr = radius * theta_start.cos();
        let xl = -xr;
        for k in 0..n_lead {
            let ya = y0 - geom.lead_length_um * k as f64 / n_lead as f64;
            let yb = y0 - geom.lead_length_um * (k + 1) as f64 / n_lead as f64;
            accumulate_segment(&mut b, p, [xr, yb, 0.0], [xr, ya, 0.0], geom.current_a);
            accumulate_segment(&mut b, p, [xl, ya, 0.0], [xl, yb, 0.0], geom.current_a);
        }
    }
    (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt()
}

/// Microwave amplitude map over the NV plane from the filament model.
pub fn synth_field_map(geom: &OmegaAntenna, grid: &MapGrid) -> Result<FieldMap> {
    geom.validate()?;
    grid.validate()?;
    let mut values = Vec::with_capacity(grid.width * grid.height);
    for y in 0..grid.height {
        for x in 0..grid.width {
            let (px, py) = grid.pixel_center(x, y);
            values.push(antenna_field_at(geom, [px, py, -grid.standoff_um]));
        }
    }
    let mask = vec![true; values.len()];
    FieldMap::new(grid.width, grid.height, grid.pixel_size_um, values, mask)
}

/// Closed-form on-axis field of a circular loop, mT: the oracle for the
/// loop-only configuration.
pub fn loop_on_axis_field(radius_um: f64, z_um: f64, current_a: f64) -> f64 {
    let r2 = radius_um * radius_um;
    2.0 * std::f64::consts::PI * BIOT_SAVART_MT_UM_PER_A * current_a * r2
        / (r2 + z_um * z_um).powf(1.5)
}

/// Synthetic microwave resonator feeding the antenna.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResonatorResponse {
    /// Resonance frequency, MHz.
    pub f0: f64,
    pub q_factor: f64,
    /// Drive efficiency scale.
    pub coupling: f64,
    /// Field amplitude delivered at resonance, mT.
    pub drive_amp: f64,
}

impl ResonatorResponse {
    pub fn validate(&self) -> Result<()> {
        ensure_finite(&[
            ("f0", self.f0),
            ("q_factor", self.q_factor),
            ("coupling", self.coupling),
            ("drive_amp", self.drive_amp),
        ])?;
        if self.f0 <= 0.0 || self.q_factor <= 0.0 {
            return Err(Error::Domain(format!(
                "need f0 > 0 and q > 0, got {} and {}",
                self.f0, self.q_factor
            )));
        }
        if self.coupling <= 0.0 || self.drive_amp < 0.0 {
            return Err(Error::Domain(format!(
                "need coupling > 0 and drive_amp >= 0, got {} and {}",
                self.coupling, self.drive_amp
            )));
        }
        Ok(())
    }

    /// Amplitude at one frequency, mT.
    pub fn amplitude(&self, f_mhz: f64) -> f64 {
        let x = 2.0 * self.q_factor * (f_mhz - self.f0) / self.f0;
        self.coupling * self.drive_amp / (1.0 + x * x).sqrt()
    }
}

impl Default for ResonatorResponse {
    fn default() -> Self {
        Self { f0: 2370.0, q_factor: 16.0, coupling: 1.0, drive_amp: 0.8 }
    }
}

/// Optional standing-wave ripple on top of the resonator envelope.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RippleSpec {
    pub period_mhz: f64,
    /// Fractional depth.
    pub depth: f64,
    pub phase_rad: f64,
}

/// Delivered amplitude across a frequency grid, mT.
pub fn synth_resonator_amplitude(
    r: &ResonatorResponse,
    f_grid: &[f64],
    ripple: Option<RippleSpec>,
) -> Result<Vec<f64>> {
    r.validate()?;
    if let Some(rip) = ripple {
        ensure_finite(&[
            ("period_mhz", rip.period_mhz),
            ("depth", rip.depth),
            ("phase_rad", rip.phase_rad),
        ])?;
        if rip.period_mhz <= 0.0 || rip.depth.abs() >= 1.0 {
            return Err(Error::Domain(format!(
                "ripple needs period > 0 and |depth| < 1, got {} and {}",
                rip.period_mhz, rip.depth
            )));
        }
    }
    let mut out = Vec::with_capacity(f_grid.len());
    for &f in f_grid {
        ensure_finite(&[("f_mw", f)])?;
        if f <= 0.0 {
            return Err(Error::Domain(format!("frequency grid must be positive, got {f}")));
        }
        let mut a = r.amplitude(f);
        if let Some(rip) = ripple {
            a *= 1.0 + rip.depth * (std::f64::consts::TAU * f / rip.period_mhz + rip.phase_rad).cos();
        }
        out.push(a);
    }
    Ok(out)
}

/// Per-pixel traces that share one tau grid (an imaging stack).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PixelTraceSet {
    pub width: usize,
    pub height: usize,
    pub pixel_size_um: f64,
    /// us, shared by all pixels.
    pub tau_grid: Vec<f64>,
    /// Row-major pixels, each a contrast series over `tau_grid`.
    pub contrast: Vec<Vec<f64>>,
    /// Per-point noise level, shared by all pixels.
    pub noise_sigma: Vec<f64>,
    pub meta: BTreeMap<String, String>,
}

impl PixelTraceSet {
    pub fn validate(&self) -> Result<()> {
        if self.contrast.len() != self.width * self.height {
            return Err(Error::Dataset(format!(
                "pixel count {} does not match {}x{}",
                self.contrast.len(),
                self.width,
                self.height
            )));
        }
        let n = self.tau_grid.len();
        if self.noise_sigma.len() != n || self.contrast.iter().any(|t| t.len() != n) {
            return Err(Error::Dataset("pixel trace lengths differ from the tau grid".into()));
        }
        for w in self.tau_grid.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Grid(format!("tau grid not strictly increasing at {}", w[0])));
            }
        }
        Ok(())
    }

    /// One pixel's series as a standalone trace.
    pub fn pixel_trace(&self, x: usize, y: usize) -> Result<SignalTrace> {
        if x >= self.width || y >= self.height {
            return Err(Error::Dataset(format!("pixel ({x}, {y}) out of bounds")));
        }
        SignalTrace::new(
            self.tau_grid.clone(),
            self.contrast[y * self.width + x].clone(),
            self.noise_sigma.clone(),
            0.0,
            self.meta.clone(),
        )
    }
}

/// Which frequency an imaging stack encodes per pixel.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImagingKind {
    /// Oscillation at the local Rabi frequency.
    Rabi,
    /// Oscillation at the local amplitude-dependent shift for this detuning
    /// (MHz).
    Acz { detuning: f64 },
}

/// Synthesizes a widefield imaging stack over a field map.
///
/// Every pixel oscillates at the frequency set by its local amplitude
/// (Rabi frequency or shift, per `kind`), with the decay and contrast from
/// `params`. The camera exposes all pixels simultaneously, so one
/// repetition budget covers the whole frame; noise draws use one RNG
/// stream per (pixel, point). Masked input pixels produce flat traces.
pub fn synth_pixel_traces(
    map: &FieldMap,
    kind: ImagingKind,
    tau_grid: &[f64],
    params: &SignalModelParams,
    constants: &PhysicalConstants,
    cam: &CameraModel,
    total_time_s: f64,
) -> Result<PixelTraceSet> {
    params.validate()?;
    constants.validate()?;
    cam.validate()?;
    ensure_finite(&[("total_time_s", total_time_s)])?;
    if total_time_s <= 0.0 {
        return Err(Error::Domain(format!("total_time must be > 0, got {total_time_s}")));
    }
    if tau_grid.is_empty() {
        return Err(Error::Grid("tau grid is empty".into()));
    }
    for w in tau_grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Grid(format!("tau grid not strictly increasing at {}", w[0])));
        }
    }
    if let ImagingKind::Acz { detuning } = kind {
        ensure_finite(&[("detuning", detuning)])?;
        if detuning == 0.0 {
            return Err(Error::Domain("imaging detuning must be nonzero".into()));
        }
    }
    let n = tau_grid.len();
    let sweep_us: f64 = tau_grid.iter().map(|&t| repetition_time_us(t, cam.tau_read)).sum();
    let reps = (total_time_s * 1e6 / sweep_us + 1e-9).floor();
    if reps < 1.0 {
        return Err(Error::Domain(format!(
            "budget {total_time_s} s allows zero repetitions of a {sweep_us} us sweep"
        )));
    }
    let contrast: Vec<Vec<f64>> = (0..map.values.len())
        .map(|idx| -> Result<Vec<f64>> {
            if !map.mask[idx] {
                return Ok(vec![1.0; n]);
            }
            let omega = crate::spin::rabi_from_field(map.values[idx], constants)?;
            let f = match kind {
                ImagingKind::Rabi => omega,
                ImagingKind::Acz { detuning } => {
                    crate::spin::ac_zeeman_shift(detuning, omega, params.shift_mode)?.mhz
                }
            };
            let series = tau_grid
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    let env =
                        if params.t2.is_finite() { (-2.0 * t / params.t2).exp() } else { 1.0 };
                    let clean = 1.0
                        - 0.5
                            * params.contrast
                            * (1.0 - (2.0 * PI * f * t).cos() * env);
                    let mut rng = point_rng(cam.seed, (idx * n + i) as u64);
                    noisy_point(clean, reps, cam, &mut rng).0
                })
                .collect();
            Ok(series)
        })
        .collect::<Result<_>>()?;
    // The stored sigma is the per-point level a fit should weight by. For
    // photon noise it is evaluated at unit contrast, which every pixel is
    // within a few percent of.
    let sigma = match cam.noise {
        NoiseKind::Gaussian => cam.sigma_s / reps.sqrt(),
        NoiseKind::Poisson => 1.0 / (cam.counts_bright * reps).sqrt(),
    };
    let mut meta = BTreeMap::new();
    meta.insert("kind".into(), format!("{kind:?}").to_lowercase());
    meta.insert("repetitions".into(), format!("{reps}"));
    meta.insert("seed".into(), format!("{}", cam.seed));
    Ok(PixelTraceSet {
        width: map.width,
        height: map.height,
        pixel_size_um: map.pixel_size_um,
        tau_grid: tau_grid.to_vec(),
        contrast,
        noise_sigma: vec![sigma; n],
        meta,
    })
}
