//! Sensitivity machinery: the amplitude Jacobian of the signal model, the
//! single-parameter error it implies, integration-time and pulse-count
//! scaling fits, per-tau sensitivity, and its optimization over tau.
//!
//! Units: eta is carried internally in mT sqrt(s); multiply by 1000 for
//! uT / sqrt(Hz) (the dimension is identical).

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{ensure_finite, Error};
use crate::fit::{least_squares, LsqOptions};
use crate::measure::{repetition_time_us, synth_noisy_trace, CameraModel, NoiseKind};
use crate::signal::{closed_form_trace, SignalModelParams, SignalTrace};
use crate::spin::{field_from_rabi, PhysicalConstants, ShiftMode};
use crate::Result;

/// Decay-time pulse-count exponent used as the default forward model.
pub const T2_SCALING_DEFAULT: f64 = 0.41;
/// Reference decay time (us) at the reference pulse count.
pub const T2_REF_US: f64 = 3.2;
pub const N_PI_REF: f64 = 2.0;

/// Signed derivative of the signal with respect to field amplitude, one
/// value per tau (per mT).
///
/// The value is `-gamma_e rf C pi tau (dF/dOmega) sin(2 pi F tau) env`
/// where F is the amplitude-dependent shift in the params' mode; for the
/// quadratic shift `dF/dOmega = Omega/Delta`, which gives the usual
/// magnitude `gamma_e pi (Omega/Delta) tau sin(pi Omega^2 tau / Delta)
/// exp(-2 tau/T2) C / sqrt(2)`.
pub fn jacobian_b(
    tau_grid: &[f64],
    p: &SignalModelParams,
    constants: &PhysicalConstants,
) -> Result<Vec<f64>> {
    p.validate()?;
    constants.validate()?;
    if p.detuning <= 0.0 {
        return Err(Error::Domain(format!(
            "amplitude jacobian requires detuning > 0, got {}",
            p.detuning
        )));
    }
    let f = p.shift()?;
    let df_domega = match p.shift_mode {
        ShiftMode::Approx => p.omega / p.detuning,
        ShiftMode::Exact => p.omega / p.detuning.hypot(p.omega),
    };
    let domega_db = constants.gamma_e * constants.rabi_factor;
    tau_grid
        .iter()
        .map(|&tau| {
            ensure_finite(&[("tau", tau)])?;
            if tau < 0.0 {
                return Err(Error::Domain(format!("tau must be >= 0, got {tau}")));
            }
            let env = if p.t2.is_finite() { (-2.0 * tau / p.t2).exp() } else { 1.0 };
            Ok(-p.contrast * PI * tau * (2.0 * PI * f * tau).sin() * env * df_domega
                * domega_db)
        })
        .collect()
}

/// Single-parameter amplitude error from per-point residual variance and
/// the Jacobian: `sigma_B = sqrt(sigma^2 / sum J_i^2)`.
pub fn sigma_b(residual_variance: f64, jacobian: &[f64]) -> Result<f64> {
    ensure_finite(&[("residual_variance", residual_variance)])?;
    if residual_variance < 0.0 {
        return Err(Error::Domain(format!(
            "residual variance must be >= 0, got {residual_variance}"
        )));
    }
    let sum: f64 = jacobian.iter().map(|j| j * j).sum();
    if !(sum > 0.0) {
        return Err(Error::Domain("all-zero jacobian: the design is singular in B".into()));
    }
    Ok((residual_variance / sum).sqrt())
}

/// Fits `sigma_B(T) = eta T^{-1/2} + sigma0` with both parameters
/// non-negative. Samples are `(T seconds, sigma_B)` and must span at least
/// a decade in T.
pub fn fit_eta(samples: &[(f64, f64)]) -> Result<(f64, f64)> {
    if samples.len() < 3 {
        return Err(Error::Domain(format!(
            "need at least 3 (T, sigma_B) samples, got {}",
            samples.len()
        )));
    }
    let mut t_min = f64::INFINITY;
    let mut t_max = 0.0f64;
    for &(t, s) in samples {
        ensure_finite(&[("T", t), ("sigma_B", s)])?;
        if t <= 0.0 || s <= 0.0 {
            return Err(Error::Domain(format!("samples must be positive, got ({t}, {s})")));
        }
        t_min = t_min.min(t);
        t_max = t_max.max(t);
    }
    if t_max / t_min < 10.0 {
        return Err(Error::Domain(format!(
            "samples span {:.2}x in T; at least a decade is required",
            t_max / t_min
        )));
    }
    // Linear in (eta, sigma0) against x = T^{-1/2}; plain OLS seeds the
    // bounded solve.
    let x: Vec<f64> = samples.iter().map(|&(t, _)| t.powf(-0.5)).collect();
    let y: Vec<f64> = samples.iter().map(|&(_, s)| s).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let eta0 = slope.max(1e-12);
    let sigma0 = (my - eta0 * mx).max(0.0);
    let residuals = |p: &[f64]| -> Result<Vec<f64>> {
        Ok(x.iter().zip(&y).map(|(&xi, &yi)| p[0] * xi + p[1] - yi).collect())
    };
    let jacobian =
        |_: &[f64]| -> Result<Vec<Vec<f64>>> { Ok(x.iter().map(|&xi| vec![xi, 1.0]).collect()) };
    let out = least_squares(
        &residuals,
        Some(&jacobian),
        &[eta0, sigma0],
        &[0.0, 0.0],
        &[f64::INFINITY, f64::INFINITY],
        &LsqOptions::default(),
    )?;
    Ok((out.params[0], out.params[1]))
}

/// Unconstrained log-log fit `sigma_B = a T^q`, returning `(a, q)`. Used to
/// verify the square-root law with the exponent left free.
pub fn fit_time_scaling_exponent(samples: &[(f64, f64)]) -> Result<(f64, f64)> {
    log_log_fit(samples, "(T, sigma_B)")
}

/// Log-log fit of `eta = eta0 N^{-p}` over pulse counts, returning `p`.
pub fn fit_pulse_scaling(etas: &[(f64, f64)]) -> Result<f64> {
    if etas.len() < 3 {
        return Err(Error::Domain(format!(
            "need at least 3 (N, eta) points, got {}",
            etas.len()
        )));
    }
    let (_, slope) = log_log_fit(etas, "(N, eta)")?;
    Ok(-slope)
}

/// Log-log fit of `T2 proportional to N^s` over pulse counts, returning `s`.
pub fn t2_scaling(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Domain(format!(
            "need at least 2 (N, T2) points, got {}",
            points.len()
        )));
    }
    let (_, slope) = log_log_fit(points, "(N, T2)")?;
    Ok(slope)
}

/// Forward evaluation of the decay-time scaling law
/// `T2(N) = T2_ref (N / N_ref)^s`.
pub fn t2_forward(n_pi: f64, n_ref: f64, t2_ref: f64, s: f64) -> Result<f64> {
    ensure_finite(&[("n_pi", n_pi), ("n_ref", n_ref), ("t2_ref", t2_ref), ("s", s)])?;
    if n_pi <= 0.0 || n_ref <= 0.0 || t2_ref <= 0.0 {
        return Err(Error::Domain("scaling-law inputs must be positive".into()));
    }
    Ok(t2_ref * (n_pi / n_ref).powf(s))
}

fn log_log_fit(points: &[(f64, f64)], what: &str) -> Result<(f64, f64)> {
    let mut lx = Vec::with_capacity(points.len());
    let mut ly = Vec::with_capacity(points.len());
    for &(a, b) in points {
        ensure_finite(&[("x", a), ("y", b)])?;
        if a <= 0.0 || b <= 0.0 {
            return Err(Error::Domain(format!("{what} points must be positive, got ({a}, {b})")));
        }
        lx.push(a.ln());
        ly.push(b.ln());
    }
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx) * (v - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Domain(format!("{what} points share one abscissa")));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok(((my - slope * mx).exp(), slope))
}

fn eta_single_raw(tau: f64, p: &SignalModelParams, cam: &CameraModel, c: &PhysicalConstants) -> f64 {
    let env = if p.t2.is_finite() { (-2.0 * tau / p.t2).exp() } else { 1.0 };
    let sin_mag = (PI * p.omega * p.omega * tau / p.detuning).sin().abs();
    let rep_s = repetition_time_us(tau, cam.tau_read) * 1e-6;
    let num = p.detuning * cam.sigma_s * rep_s.sqrt();
    let den = c.rabi_factor * c.gamma_e * PI * p.omega * tau * p.contrast * sin_mag * env;
    // den == 0 (sine zero, zero drive, dead envelope) divides to +inf,
    // which doubles as the no-signal flag.
    num / den
}

/// Sensitivity of a single fixed-tau measurement, mT sqrt(s).
///
/// `sqrt(2) Delta sigma_s sqrt(2 tau + tau_read) / (gamma_e pi Omega tau C
/// |sin(pi Omega^2 tau / Delta)| exp(-2 tau / T2))`, the sqrt(2) being the
/// inverse drive factor. Sine zeros and zero drive return +inf rather than
/// an error so optimization grids survive them.
pub fn eta_single(
    tau: f64,
    p: &SignalModelParams,
    cam: &CameraModel,
    constants: &PhysicalConstants,
) -> Result<f64> {
    p.validate()?;
    cam.validate()?;
    constants.validate()?;
    ensure_finite(&[("tau", tau)])?;
    if p.detuning <= 0.0 {
        return Err(Error::Domain(format!(
            "sensitivity requires detuning > 0, got {}",
            p.detuning
        )));
    }
    if tau <= 0.0 {
        return Err(Error::Domain(format!("tau must be > 0, got {tau}")));
    }
    Ok(eta_single_raw(tau, p, cam, constants))
}

/// Minimizes `eta_single` over tau: a log grid of at least 100 points
/// followed by golden-section refinement around the best cell. Ties break
/// toward smaller tau. Returns `(eta_best, tau_star)`.
pub fn eta_best(
    p: &SignalModelParams,
    cam: &CameraModel,
    constants: &PhysicalConstants,
    tau_range: (f64, f64),
    grid_points: usize,
) -> Result<(f64, f64)> {
    p.validate()?;
    cam.validate()?;
    constants.validate()?;
    let (lo, hi) = tau_range;
    ensure_finite(&[("tau_lo", lo), ("tau_hi", hi)])?;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Domain(format!("invalid tau range ({lo}, {hi})")));
    }
    if grid_points < 100 {
        return Err(Error::Domain(format!(
            "tau grid needs at least 100 points, got {grid_points}"
        )));
    }
    if p.detuning <= 0.0 {
        return Err(Error::Domain(format!(
            "sensitivity requires detuning > 0, got {}",
            p.detuning
        )));
    }
    let ratio = hi / lo;
    let tau_at = |k: usize| lo * ratio.powf(k as f64 / (grid_points - 1) as f64);
    let mut best_k = 0usize;
    let mut best_eta = f64::INFINITY;
    for k in 0..grid_points {
        let eta = eta_single_raw(tau_at(k), p, cam, constants);
        // Strict improvement keeps the earlier (smaller) tau on ties.
        if eta < best_eta {
            best_eta = eta;
            best_k = k;
        }
    }
    if !best_eta.is_finite() {
        return Err(Error::Domain(
            "sensitivity is infinite over the whole tau grid (no usable signal)".into(),
        ));
    }
    // Golden-section polish in log tau between the neighbors of the best
    // grid cell.
    let mut a = tau_at(best_k.saturating_sub(1)).ln();
    let mut b = tau_at((best_k + 1).min(grid_points - 1)).ln();
    let g = |u: f64| eta_single_raw(u.exp(), p, cam, constants);
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c_pt = b - INV_PHI * (b - a);
    let mut d_pt = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (g(c_pt), g(d_pt));
    for _ in 0..80 {
        if fc <= fd {
            b = d_pt;
            d_pt = c_pt;
            fd = fc;
            c_pt = b - INV_PHI * (b - a);
            fc = g(c_pt);
        } else {
            a = c_pt;
            c_pt = d_pt;
            fc = fd;
            d_pt = a + INV_PHI * (b - a);
            fd = g(d_pt);
        }
    }
    let tau_mid = (0.5 * (a + b)).exp();
    let eta_mid = eta_single_raw(tau_mid, p, cam, constants);
    if eta_mid < best_eta {
        Ok((eta_mid, tau_mid))
    } else {
        Ok((best_eta, tau_at(best_k)))
    }
}

/// Predicted per-point noise after uniformly allocating a total budget.
fn point_sigma(tau_grid: &[f64], cam: &CameraModel, total_time_s: f64) -> Result<f64> {
    let sweep_us: f64 = tau_grid.iter().map(|&t| repetition_time_us(t, cam.tau_read)).sum();
    let reps = (total_time_s * 1e6 / sweep_us + 1e-9).floor();
    if reps < 1.0 {
        return Err(Error::Domain(format!(
            "budget {total_time_s} s allows zero repetitions of a {sweep_us} us sweep"
        )));
    }
    Ok(cam.sigma_s / reps.sqrt())
}

/// Amplitude error predicted from the Jacobian for a given budget.
pub fn predicted_sigma_b(
    p: &SignalModelParams,
    cam: &CameraModel,
    constants: &PhysicalConstants,
    tau_grid: &[f64],
    total_time_s: f64,
) -> Result<f64> {
    cam.validate()?;
    if cam.noise != NoiseKind::Gaussian {
        return Err(Error::Domain(
            "the amplitude-error prediction assumes gaussian contrast noise".into(),
        ));
    }
    let j = jacobian_b(tau_grid, p, constants)?;
    sigma_b(point_sigma(tau_grid, cam, total_time_s)?.powi(2), &j)
}

/// The T^{-1/2} coefficient implied by the Jacobian:
/// `eta = sigma_s sqrt(sweep_s) / sqrt(sum J_i^2)`. Exact whenever the
/// budget is an integer multiple of the sweep time (no floor loss).
pub fn predicted_eta(
    p: &SignalModelParams,
    cam: &CameraModel,
    constants: &PhysicalConstants,
    tau_grid: &[f64],
) -> Result<f64> {
    cam.validate()?;
    if cam.noise != NoiseKind::Gaussian {
        return Err(Error::Domain(
            "the amplitude-error prediction assumes gaussian contrast noise".into(),
        ));
    }
    let j = jacobian_b(tau_grid, p, constants)?;
    let sum: f64 = j.iter().map(|v| v * v).sum();
    if !(sum > 0.0) {
        return Err(Error::Domain("all-zero jacobian: the design is singular in B".into()));
    }
    let sweep_s: f64 =
        tau_grid.iter().map(|&t| repetition_time_us(t, cam.tau_read)).sum::<f64>() * 1e-6;
    Ok(cam.sigma_s * sweep_s.sqrt() / sum.sqrt())
}

/// One-parameter amplitude fit of a trace, everything else pinned to the
/// template params; offset pinned at 1. Returns the fitted amplitude, mT.
pub fn fit_amplitude_only(
    trace: &SignalTrace,
    template: &SignalModelParams,
    constants: &PhysicalConstants,
    b_init: f64,
) -> Result<f64> {
    template.validate()?;
    constants.validate()?;
    ensure_finite(&[("b_init", b_init)])?;
    if b_init <= 0.0 {
        return Err(Error::Domain(format!("initial amplitude must be > 0, got {b_init}")));
    }
    let residuals = |x: &[f64]| -> Result<Vec<f64>> {
        let p = SignalModelParams {
            omega: crate::spin::rabi_from_field(x[0], constants)?,
            ..*template
        };
        let f = p.shift()?;
        Ok(trace
            .tau_grid
            .iter()
            .zip(&trace.contrast)
            .map(|(&t, &y)| {
                let env = if p.t2.is_finite() { (-2.0 * t / p.t2).exp() } else { 1.0 };
                1.0 - 0.5 * p.contrast * (1.0 - (2.0 * PI * f * t).cos() * env) - y
            })
            .collect())
    };
    let out = least_squares(
        &residuals,
        None,
        &[b_init],
        &[0.0],
        &[f64::INFINITY],
        &LsqOptions::default(),
    )?;
    if !out.converged {
        return Err(Error::Convergence("amplitude fit did not converge".into()));
    }
    Ok(out.params[0])
}

fn trial_seed(base: u64, salt: u64, trial: u64) -> u64 {
    base ^ (salt << 32) ^ (trial.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Empirical amplitude scatter over repeated noisy syntheses, alongside the
/// Jacobian prediction. Trials run in parallel with counter-derived seeds.
pub fn empirical_sigma_b(
    p: &SignalModelParams,
    cam: &CameraModel,
    constants: &PhysicalConstants,
    tau_grid: &[f64],
    total_time_s: f64,
    trials: usize,
) -> Result<(f64, f64)> {
    if trials < 2 {
        return Err(Error::Domain(format!("need at least 2 trials, got {trials}")));
    }
    let predicted = predicted_sigma_b(p, cam, constants, tau_grid, total_time_s)?;
    let clean = closed_form_trace(tau_grid, p)?;
    let b_true = field_from_rabi(p.omega, constants)?;
    let fits: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let cam_t = CameraModel {
                seed: trial_seed(cam.seed, (total_time_s * 1e3) as u64, trial as u64),
                ..*cam
            };
            let noisy = synth_noisy_trace(&clean, &cam_t, total_time_s)?;
            fit_amplitude_only(&noisy, p, constants, b_true)
        })
        .collect::<Result<_>>()?;
    let mean = fits.iter().sum::<f64>() / trials as f64;
    let var = fits.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / (trials - 1) as f64;
    Ok((var.sqrt(), predicted))
}

/// Empirical sigma_B at each total time, `(T, sigma_B)` rows ready for
/// `fit_eta`.
pub fn sigma_b_vs_time(
    p: &SignalModelParams,
    cam: &CameraModel,
    constants: &PhysicalConstants,
    tau_grid: &[f64],
    total_times_s: &[f64],
    trials: usize,
) -> Result<Vec<(f64, f64)>> {
    total_times_s
        .iter()
        .map(|&t| {
            let (emp, _) = empirical_sigma_b(p, cam, constants, tau_grid, t, trials)?;
            Ok((t, emp))
        })
        .collect()
}

/// Bundled sensitivity summary.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SensitivityReport {
    /// (T seconds, sigma_B mT).
    pub sigma_b_samples: Vec<(f64, f64)>,
    /// mT sqrt(s).
    pub eta: f64,
    /// mT.
    pub sigma0: f64,
    /// Pulse-count exponent; absent when only one count was studied.
    pub p: Option<f64>,
    /// Decay-time exponent.
    pub s_t2: f64,
    /// mT sqrt(s).
    pub eta_best: f64,
    /// us.
    pub tau_star: f64,
    /// us, the range eta_best searched.
    pub tau_range: (f64, f64),
    /// Modeling assumptions baked into the numbers, one line each.
    pub assumptions: Vec<String>,
}

impl SensitivityReport {
    pub fn eta_ut_per_sqrt_hz(&self) -> f64 {
        self.eta * 1e3
    }

    pub fn eta_best_ut_per_sqrt_hz(&self) -> f64 {
        self.eta_best * 1e3
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !(self.eta_best > 0.0) {
            return Err(Error::Domain("eta values must be positive".into()));
        }
        if self.sigma_b_samples.iter().any(|&(t, s)| !(t > 0.0) || !(s > 0.0)) {
            return Err(Error::Domain("sigma_B samples must be positive".into()));
        }
        if !(self.tau_star >= self.tau_range.0 && self.tau_star <= self.tau_range.1) {
            return Err(Error::Domain(format!(
                "tau_star {} outside searched range ({}, {})",
                self.tau_star, self.tau_range.0, self.tau_range.1
            )));
        }
        Ok(())
    }

    /// Key-value text rendering; assumptions are listed one per line.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("eta_ut_per_sqrt_hz: {}\n", self.eta_ut_per_sqrt_hz()));
        out.push_str(&format!("sigma0_mt: {}\n", self.sigma0));
        if let Some(p) = self.p {
            out.push_str(&format!("pulse_scaling_p: {p}\n"));
        }
        out.push_str(&format!("t2_scaling_s: {}\n", self.s_t2));
        out.push_str(&format!(
            "eta_best_ut_per_sqrt_hz: {}\n",
            self.eta_best_ut_per_sqrt_hz()
        ));
        out.push_str(&format!("tau_star_us: {}\n", self.tau_star));
        out.push_str(&format!(
            "tau_range_us: {} {}\n",
            self.tau_range.0, self.tau_range.1
        ));
        out.push_str(&format!("sigma_b_samples: {}\n", self.sigma_b_samples.len()));
        for a in &self.assumptions {
            out.push_str(&format!("assumption: {a}\n"));
        }
        out
    }
}
