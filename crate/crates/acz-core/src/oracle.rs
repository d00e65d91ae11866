//! Independent numerical integrators used to validate the closed-form
//! propagator. Nothing here shares code with [`crate::spin::segment_unitary`];
//! agreement between the two paths is what the validation tests assert.
//!
//! Two oracles:
//!
//! * [`integrate_rotating_frame`] integrates the static rotating-frame
//!   Hamiltonian `H/h = (1/2)(Delta sz + Omega (cos(phi) sx + sin(phi) sy))`
//!   numerically. Agreement with the closed form is limited only by
//!   integrator tolerance.
//! * [`lab_frame_oracle`] integrates the full cosine-drive Hamiltonian
//!   `H/h = (f0/2) sz + (A/2) cos(2 pi f_mw t + phi) sx` without any rotating
//!   wave approximation, then transforms the result into the frame rotating
//!   at `f_mw`. Agreement with the closed form is limited by genuine
//!   counter-rotating effects of order `A / f_mw` (and their secular phase
//!   drift over long durations), so tolerances are physics, not numerics.
//!
//! The integrator is an embedded Dormand-Prince 5(4) pair with PI step
//! control. The Schroedinger equation convention is
//! `d psi / dt = -i 2 pi (H/h) psi` with `H/h` in MHz and `t` in us.

use num_complex::Complex64 as C64;

use crate::error::{ensure_finite, Error};
use crate::spin::{DriveParams, SpinState};
use crate::Result;

type Y = [C64; 2];

const DP_C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// 5th-order solution weights equal the last A row (FSAL).
const DP_E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

fn axpy(y: &Y, ks: &[Y], coefs: &[f64], h: f64) -> Y {
    let mut out = *y;
    for (k, c) in ks.iter().zip(coefs) {
        if *c != 0.0 {
            out[0] += k[0] * (h * c);
            out[1] += k[1] * (h * c);
        }
    }
    out
}

/// Adaptive Dormand-Prince 5(4). `h_max` bounds the step (resolving the
/// fastest oscillation is the caller's concern); failure to advance above
/// the minimum step is a convergence error.
fn dopri5<F: Fn(f64, &Y) -> Y>(
    rhs: F,
    y0: Y,
    t0: f64,
    t1: f64,
    rtol: f64,
    atol: f64,
    h_max: f64,
) -> Result<Y> {
    if t1 == t0 {
        return Ok(y0);
    }
    let span = t1 - t0;
    let mut t = t0;
    let mut y = y0;
    let mut h = (span / 100.0).min(h_max).max(1e-12);
    let h_min = span * 1e-14;
    let mut k1 = rhs(t, &y);
    let max_steps = 200_000_000u64;
    let mut steps = 0u64;
    while t < t1 {
        steps += 1;
        if steps > max_steps {
            return Err(Error::Convergence("integrator exceeded step budget".into()));
        }
        if t + h > t1 {
            h = t1 - t;
        }
        let mut ks: Vec<Y> = Vec::with_capacity(7);
        ks.push(k1);
        for i in 0..6 {
            let yi = axpy(&y, &ks, &DP_A[i][..=i], h);
            ks.push(rhs(t + DP_C[i] * h, &yi));
        }
        let y5 = axpy(&y, &ks[..6], &DP_A[5][..6], h);
        // ks[6] is the FSAL stage evaluated at (t + h, y5).
        let mut err: f64 = 0.0;
        for c in 0..2 {
            let mut e = C64::new(0.0, 0.0);
            for (k, w) in ks.iter().zip(DP_E) {
                e += k[c] * w;
            }
            e *= h;
            let scale = atol + rtol * y[c].norm().max(y5[c].norm());
            err = err.max(e.norm() / scale);
        }
        if err <= 1.0 {
            t += h;
            y = y5;
            k1 = ks[6];
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h * factor).min(h_max);
        if h < h_min && t < t1 {
            return Err(Error::Convergence(format!(
                "integrator step underflow at t = {t} (h = {h})"
            )));
        }
    }
    Ok(y)
}

/// Numerically integrates the static rotating-frame Hamiltonian for one
/// segment. Oracle for the closed-form propagator; tolerance-limited.
pub fn integrate_rotating_frame(
    state: &SpinState,
    drive: &DriveParams,
    duration: f64,
    rtol: f64,
) -> Result<SpinState> {
    drive.validate()?;
    ensure_finite(&[("duration", duration), ("rtol", rtol)])?;
    if duration < 0.0 {
        return Err(Error::Domain(format!("duration must be >= 0, got {duration}")));
    }
    if !(1e-14..=1e-6).contains(&rtol) {
        return Err(Error::Domain(format!("rtol must be in [1e-14, 1e-6], got {rtol}")));
    }
    let pi = std::f64::consts::PI;
    let half_off = C64::from_polar(drive.rabi, -drive.phase); // 2 * H_{01} / h
    let d = drive.detuning;
    // d/dt (c+, c-) = -i pi [d c+ + Omega e^{-i phi} c-, Omega e^{i phi} c+ - d c-]
    let rhs = move |_t: f64, y: &Y| -> Y {
        let m = C64::new(0.0, -pi);
        [m * (d * y[0] + half_off * y[1]), m * (half_off.conj() * y[0] - d * y[1])]
    };
    let a = drive.generalized_rabi().max(1.0);
    let h_max = 0.05 / a;
    let y = dopri5(rhs, [state.c_plus, state.c_minus], 0.0, duration, rtol, rtol * 1e-2, h_max)?;
    Ok(SpinState::new(y[0], y[1]))
}

/// Integrates the full cosine-drive two-level Hamiltonian (no rotating wave
/// approximation) and returns the state expressed in the frame rotating at
/// `f_mw`. `drive_amp` is the drive coefficient in frequency units
/// (gamma_e * B_mw); the rotating-frame Rabi frequency it corresponds to is
/// `drive_amp / 2`.
///
/// The step is capped at `1 / (50 f_mw)` so the carrier is always resolved.
pub fn lab_frame_oracle(
    initial: &SpinState,
    f0: f64,
    drive_amp: f64,
    f_mw: f64,
    phi: f64,
    duration: f64,
    tol: f64,
) -> Result<SpinState> {
    ensure_finite(&[
        ("f0", f0),
        ("drive_amp", drive_amp),
        ("f_mw", f_mw),
        ("phi", phi),
        ("duration", duration),
        ("tol", tol),
    ])?;
    if f0 <= 0.0 || f_mw <= 0.0 {
        return Err(Error::Domain("carrier frequencies must be > 0".into()));
    }
    if drive_amp < 0.0 {
        return Err(Error::Domain(format!("drive_amp must be >= 0, got {drive_amp}")));
    }
    if duration < 0.0 {
        return Err(Error::Domain(format!("duration must be >= 0, got {duration}")));
    }
    if !(tol > 1e-12 && tol <= 1e-6) {
        return Err(Error::Domain(format!("tol must be in (1e-12, 1e-6], got {tol}")));
    }
    let pi = std::f64::consts::PI;
    let tau = std::f64::consts::TAU;
    let rhs = move |t: f64, y: &Y| -> Y {
        let drive = drive_amp * (tau * f_mw * t + phi).cos();
        let m = C64::new(0.0, -pi);
        [m * (f0 * y[0] + drive * y[1]), m * (drive * y[0] - f0 * y[1])]
    };
    let h_max = 1.0 / (50.0 * f_mw.max(f0));
    let y = dopri5(
        rhs,
        [initial.c_plus, initial.c_minus],
        0.0,
        duration,
        tol,
        tol * 1e-3,
        h_max,
    )?;
    // Into the f_mw rotating frame: psi~ = exp(i 2 pi f_mw Sz t) psi.
    let z = C64::from_polar(1.0, pi * f_mw * duration);
    Ok(SpinState::new(y[0] * z, y[1] * z.conj()))
}
