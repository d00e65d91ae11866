//! From traces back to physics: fitting the contrast model, converting
//! oscillation frequencies to microwave amplitudes, and assembling
//! frequency-response tables and spatial amplitude maps.

use rayon::prelude::*;

use crate::error::{ensure_finite, Error};
use crate::fit::{least_squares, LsqOptions};
use crate::measure::{FieldMap, PixelTraceSet};
use crate::signal::SignalTrace;
use crate::spin::{field_from_rabi, PhysicalConstants, ShiftMode};
use crate::Result;

const TAU_RAD: f64 = std::f64::consts::TAU;

/// Parameters a fit may hold fixed instead of floating.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FixedParams {
    /// us.
    pub t2: Option<f64>,
    pub contrast: Option<f64>,
}

/// How the oscillation frequency is seeded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitStrategy {
    /// Peak of a correlation periodogram of the mean-removed series; works
    /// on non-uniform grids and avoids half/double-frequency local minima.
    SpectralPeak,
    /// Caller-supplied starting frequency, MHz.
    Manual(f64),
}

/// Outcome of one model fit. `params` holds the floated parameters in
/// `param_names` order; parameters held fixed are listed separately.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FitResult {
    pub param_names: Vec<String>,
    pub params: Vec<f64>,
    /// Covariance of the floated parameters, same order.
    pub covariance: Vec<Vec<f64>>,
    pub fixed: Vec<(String, f64)>,
    pub residual_variance: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    /// Value of a parameter whether floated or fixed.
    pub fn param(&self, name: &str) -> Option<f64> {
        if let Some(i) = self.param_names.iter().position(|n| n == name) {
            return Some(self.params[i]);
        }
        self.fixed.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    /// Covariance-based standard error; zero for fixed parameters.
    pub fn std_error(&self, name: &str) -> Option<f64> {
        if let Some(i) = self.param_names.iter().position(|n| n == name) {
            return Some(self.covariance[i][i].max(0.0).sqrt());
        }
        self.fixed.iter().find(|(n, _)| n == name).map(|_| 0.0)
    }

    /// Fitted oscillation frequency, MHz.
    pub fn frequency(&self) -> f64 {
        self.param("frequency").unwrap_or(f64::NAN)
    }

    pub fn frequency_err(&self) -> f64 {
        self.std_error("frequency").unwrap_or(f64::NAN)
    }
}

/// Correlation-periodogram frequency estimate of the mean-removed series.
/// Handles non-uniform grids; scans up to the median Nyquist rate.
pub fn spectral_peak_frequency(tau: &[f64], y: &[f64]) -> Result<f64> {
    let n = tau.len();
    if n < 5 {
        return Err(Error::Grid(format!("need at least 5 points, got {n}")));
    }
    let span = tau[n - 1] - tau[0];
    if !(span > 0.0) {
        return Err(Error::Grid("tau grid has no extent".into()));
    }
    let mut steps: Vec<f64> = tau.windows(2).map(|w| w[1] - w[0]).collect();
    steps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_step = steps[steps.len() / 2];
    let f_max = 0.5 / median_step;
    let f_min = 0.5 / span;
    let mean = y.iter().sum::<f64>() / n as f64;
    let energy: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if energy == 0.0 {
        return Err(Error::Domain("series is constant; no spectral peak exists".into()));
    }
    let mut best = (f_min, 0.0f64);
    let n_scan = 2048;
    for k in 0..n_scan {
        let f = f_min + (f_max - f_min) * k as f64 / (n_scan - 1) as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (&t, &v) in tau.iter().zip(y) {
            let (s, c) = (TAU_RAD * f * t).sin_cos();
            re += (v - mean) * c;
            im += (v - mean) * s;
        }
        let power = re * re + im * im;
        if power > best.1 {
            best = (f, power);
        }
    }
    Ok(best.0)
}

struct ModelSetup {
    tau: Vec<f64>,
    y: Vec<f64>,
    weights: Vec<f64>,
    names: Vec<String>,
    x0: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    fixed: Vec<(String, f64)>,
    t2_fixed: Option<f64>,
    c_fixed: Option<f64>,
}

/// Contrast model `S = offset - C/2 (1 - cos(2 pi f t) exp(-2 t / T2))`.
fn model_value(t: f64, f: f64, t2: f64, c: f64, offset: f64) -> f64 {
    let env = if t2.is_finite() { (-2.0 * t / t2).exp() } else { 1.0 };
    offset - 0.5 * c * (1.0 - (TAU_RAD * f * t).cos() * env)
}

fn prepare(trace: &SignalTrace, fixed: FixedParams, init: &InitStrategy) -> Result<ModelSetup> {
    let n = trace.len();
    if n < 5 {
        return Err(Error::Domain(format!("need at least 5 points to fit, got {n}")));
    }
    let tau = trace.tau_grid.clone();
    let y = trace.contrast.clone();
    let span = tau[n - 1] - tau[0];

    let f0 = match *init {
        InitStrategy::Manual(f) => {
            ensure_finite(&[("init frequency", f)])?;
            if f <= 0.0 {
                return Err(Error::Domain(format!("init frequency must be > 0, got {f}")));
            }
            f
        }
        InitStrategy::SpectralPeak => spectral_peak_frequency(&tau, &y)?,
    };
    // The grid must resolve at least half a period of the seeded frequency,
    // or half a decay time when one is imposed.
    let resolves_oscillation = f0 * span >= 0.5;
    let resolves_decay = fixed.t2.map(|t2| span >= 0.5 * t2).unwrap_or(false);
    if !resolves_oscillation && !resolves_decay {
        return Err(Error::Grid(format!(
            "tau span {span} us resolves neither half a period at {f0} MHz nor half a decay"
        )));
    }

    let y_max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let y_min = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let offset0 = y_max;
    let c0 = ((y_max - y_min).max(1e-4)).min(1.0);
    // Envelope guess from the oscillation amplitude in the two halves.
    let mean = y.iter().sum::<f64>() / n as f64;
    let half = n / 2;
    let amp_first: f64 =
        y[..half].iter().map(|v| (v - mean).abs()).sum::<f64>() / half as f64;
    let amp_second: f64 =
        y[half..].iter().map(|v| (v - mean).abs()).sum::<f64>() / (n - half) as f64;
    let t2_0 = if amp_second > 0.0 && amp_first > amp_second {
        let t_mid_gap = tau[half + (n - half) / 2] - tau[half / 2];
        (2.0 * t_mid_gap / (amp_first / amp_second).ln()).clamp(0.05 * span, 50.0 * span)
    } else {
        10.0 * span
    };

    let mut names = vec!["frequency".to_string()];
    let mut x0 = vec![f0];
    let mut lower = vec![0.0];
    let mut upper = vec![f64::INFINITY];
    let mut fixed_list = Vec::new();
    match fixed.t2 {
        Some(t2) => {
            if !(t2 > 0.0) {
                return Err(Error::Domain(format!("fixed t2 must be > 0, got {t2}")));
            }
            fixed_list.push(("t2".to_string(), t2));
        }
        None => {
            names.push("t2".to_string());
            x0.push(t2_0);
            lower.push(1e-3 * span);
            upper.push(1e4 * span);
        }
    }
    match fixed.contrast {
        Some(c) => {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::Domain(format!("fixed contrast must be in (0, 1], got {c}")));
            }
            fixed_list.push(("contrast".to_string(), c));
        }
        None => {
            names.push("contrast".to_string());
            x0.push(c0);
            lower.push(1e-6);
            upper.push(1.0);
        }
    }
    names.push("offset".to_string());
    x0.push(offset0);
    lower.push(y_min - (y_max - y_min).max(0.1));
    upper.push(y_max + (y_max - y_min).max(0.1));

    let all_weighted = trace.noise_sigma.iter().all(|&s| s > 0.0);
    let weights: Vec<f64> = if all_weighted {
        trace.noise_sigma.iter().map(|&s| 1.0 / s).collect()
    } else {
        vec![1.0; n]
    };
    Ok(ModelSetup {
        tau,
        y,
        weights,
        names,
        x0,
        lower,
        upper,
        fixed: fixed_list,
        t2_fixed: fixed.t2,
        c_fixed: fixed.contrast,
    })
}

/// Weighted least squares of the contrast model against a trace.
///
/// Frequency is seeded from a spectral peak (or the caller's value), T2 and
/// C float unless pinned by `fixed`, and the reported standard errors come
/// from the covariance diagonal. Non-convergence is reported in the result,
/// not as an error.
pub fn fit_oscillation(
    trace: &SignalTrace,
    fixed: FixedParams,
    init: InitStrategy,
) -> Result<FitResult> {
    let setup = prepare(trace, fixed, &init)?;
    let unpack = |p: &[f64]| -> (f64, f64, f64, f64) {
        let mut i = 0;
        let f = p[i];
        i += 1;
        let t2 = setup.t2_fixed.unwrap_or_else(|| {
            i += 1;
            p[i - 1]
        });
        let c = setup.c_fixed.unwrap_or_else(|| {
            i += 1;
            p[i - 1]
        });
        (f, t2, c, p[i])
    };
    let residuals = |p: &[f64]| -> Result<Vec<f64>> {
        let (f, t2, c, offset) = unpack(p);
        Ok(setup
            .tau
            .iter()
            .zip(&setup.y)
            .zip(&setup.weights)
            .map(|((&t, &yi), &w)| w * (model_value(t, f, t2, c, offset) - yi))
            .collect())
    };
    let jacobian = |p: &[f64]| -> Result<Vec<Vec<f64>>> {
        let (f, t2, c, _) = unpack(p);
        Ok(setup
            .tau
            .iter()
            .zip(&setup.weights)
            .map(|(&t, &w)| {
                let env = if t2.is_finite() { (-2.0 * t / t2).exp() } else { 1.0 };
                let arg = TAU_RAD * f * t;
                let (s, cs) = arg.sin_cos();
                let mut row = Vec::with_capacity(p.len());
                row.push(w * (-0.5 * c * env * s * TAU_RAD * t));
                if setup.t2_fixed.is_none() {
                    row.push(w * (0.5 * c * cs * env * 2.0 * t / (t2 * t2)));
                }
                if setup.c_fixed.is_none() {
                    row.push(w * (-0.5 * (1.0 - cs * env)));
                }
                row.push(w);
                row
            })
            .collect())
    };
    let out = least_squares(
        &residuals,
        Some(&jacobian),
        &setup.x0,
        &setup.lower,
        &setup.upper,
        &LsqOptions::default(),
    )?;
    Ok(FitResult {
        param_names: setup.names,
        params: out.params,
        covariance: out.covariance,
        fixed: setup.fixed,
        residual_variance: out.residual_variance,
        converged: out.converged,
        iterations: out.iterations,
    })
}

/// Fits the signal model to an off-resonant sweep; `frequency` is the
/// amplitude-dependent transition shift.
pub fn fit_acz_trace(
    trace: &SignalTrace,
    fixed: FixedParams,
    init: InitStrategy,
) -> Result<FitResult> {
    fit_oscillation(trace, fixed, init)
}

/// Microwave field amplitude in mT from a fitted shift.
///
/// `Approx` inverts `f = Omega^2 / (2 Delta)`; `Exact` inverts
/// `f = sqrt(Delta^2 + Omega^2) - |Delta|`. Negative detunings use the
/// magnitude; the shift is odd in the detuning, the amplitude is not.
pub fn amplitude_from_shift(
    f_acz: f64,
    delta: f64,
    constants: &PhysicalConstants,
    mode: ShiftMode,
) -> Result<f64> {
    ensure_finite(&[("f_acz", f_acz), ("delta", delta)])?;
    if f_acz < 0.0 {
        return Err(Error::Domain(format!("shift must be >= 0, got {f_acz}")));
    }
    if delta == 0.0 {
        return Err(Error::Domain("amplitude inversion requires a nonzero detuning".into()));
    }
    let d = delta.abs();
    let omega = match mode {
        ShiftMode::Approx => (2.0 * d * f_acz).sqrt(),
        ShiftMode::Exact => (f_acz * (f_acz + 2.0 * d)).sqrt(),
    };
    field_from_rabi(omega, constants)
}

/// One row of a frequency-response reconstruction.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ResponsePoint {
    /// Drive frequency, MHz.
    pub f_mw: f64,
    /// MHz.
    pub delta: f64,
    /// Fitted shift magnitude, MHz; NaN when the fit failed.
    pub f_acz: f64,
    pub f_acz_err: f64,
    /// Recovered amplitude, mT; NaN when the fit failed.
    pub b_mw: f64,
    pub b_mw_err: f64,
    pub ok: bool,
}

/// Fits every trace of a drive-frequency sweep and converts each shift to a
/// field amplitude with `Delta = f_nv - f_mw`. Per-point failures are
/// recorded in the row, never fatal.
pub fn frequency_response(
    traces: &[(f64, SignalTrace)],
    f_nv: f64,
    fixed: FixedParams,
    constants: &PhysicalConstants,
    mode: ShiftMode,
) -> Result<Vec<ResponsePoint>> {
    ensure_finite(&[("f_nv", f_nv)])?;
    constants.validate()?;
    traces
        .par_iter()
        .map(|(f_mw, trace)| {
            ensure_finite(&[("f_mw", *f_mw)])?;
            let delta = f_nv - f_mw;
            let mut point = ResponsePoint {
                f_mw: *f_mw,
                delta,
                f_acz: f64::NAN,
                f_acz_err: f64::NAN,
                b_mw: f64::NAN,
                b_mw_err: f64::NAN,
                ok: false,
            };
            if delta == 0.0 {
                return Ok(point);
            }
            let fit = match fit_acz_trace(trace, fixed, InitStrategy::SpectralPeak) {
                Ok(f) if f.converged => f,
                _ => return Ok(point),
            };
            let f_acz = fit.frequency();
            let f_err = fit.frequency_err();
            let b = match amplitude_from_shift(f_acz, delta, constants, mode) {
                Ok(b) => b,
                Err(_) => return Ok(point),
            };
            // First-order propagation: the approximate inversion has
            // B proportional to sqrt(f), so dB = B df / (2 f); the exact
            // inversion differentiates Omega = sqrt(f (f + 2|Delta|)).
            let b_err = if f_acz > 0.0 {
                match mode {
                    ShiftMode::Approx => b * f_err / (2.0 * f_acz),
                    ShiftMode::Exact => {
                        let omega = (f_acz * (f_acz + 2.0 * delta.abs())).sqrt();
                        let domega = (f_acz + delta.abs()) / omega;
                        field_from_rabi(domega * f_err, constants)?
                    }
                }
            } else {
                f64::NAN
            };
            point.f_acz = f_acz;
            point.f_acz_err = f_err;
            point.b_mw = b;
            point.b_mw_err = b_err;
            point.ok = b.is_finite();
            Ok(point)
        })
        .collect()
}

fn map_from_pixel_fits(
    pixels: &PixelTraceSet,
    fit_pixel: impl Fn(&SignalTrace) -> Option<f64> + Sync,
) -> Result<FieldMap> {
    pixels.validate()?;
    let results: Vec<Option<f64>> = pixels
        .contrast
        .par_iter()
        .map(|series| {
            let trace = SignalTrace::new(
                pixels.tau_grid.clone(),
                series.clone(),
                pixels.noise_sigma.clone(),
                0.0,
                Default::default(),
            )
            .ok()?;
            fit_pixel(&trace)
        })
        .collect();
    let mask: Vec<bool> = results.iter().map(|r| r.is_some()).collect();
    if mask.iter().all(|&b| !b) {
        return Err(Error::Dataset("every pixel fit failed".into()));
    }
    let values: Vec<f64> = results.into_iter().map(|r| r.unwrap_or(0.0)).collect();
    FieldMap::new(pixels.width, pixels.height, pixels.pixel_size_um, values, mask)
}

/// Per-pixel Rabi-frequency fits converted to a field-amplitude map.
/// Pixels whose fit fails are masked out.
pub fn fit_rabi_map(
    pixels: &PixelTraceSet,
    fixed: FixedParams,
    constants: &PhysicalConstants,
) -> Result<FieldMap> {
    constants.validate()?;
    map_from_pixel_fits(pixels, |trace| {
        let fit = fit_oscillation(trace, fixed, InitStrategy::SpectralPeak).ok()?;
        if !fit.converged {
            return None;
        }
        field_from_rabi(fit.frequency(), constants).ok()
    })
}

/// Per-pixel shift fits converted to a field-amplitude map via the
/// amplitude inversion at detuning `delta`.
pub fn fit_acz_map(
    pixels: &PixelTraceSet,
    delta: f64,
    fixed: FixedParams,
    constants: &PhysicalConstants,
    mode: ShiftMode,
) -> Result<FieldMap> {
    ensure_finite(&[("delta", delta)])?;
    constants.validate()?;
    map_from_pixel_fits(pixels, |trace| {
        let fit = fit_acz_trace(trace, fixed, InitStrategy::SpectralPeak).ok()?;
        if !fit.converged {
            return None;
        }
        amplitude_from_shift(fit.frequency(), delta, constants, mode).ok()
    })
}
