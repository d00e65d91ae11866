//! End-to-end consistency between the synthetic camera, the fitting stack,
//! and the closed-form sensitivity predictions.

use acz_core::estimate::{
    amplitude_from_shift, fit_acz_map, fit_acz_trace, fit_rabi_map, FixedParams, InitStrategy,
};
use acz_core::measure::{
    synth_field_map, synth_noisy_trace, synth_pixel_traces, CameraModel, ImagingKind, MapGrid,
    OmegaAntenna,
};
use acz_core::sensitivity::{eta_single, fit_eta};
use acz_core::signal::{closed_form_signal, closed_form_trace, SignalModelParams};
use acz_core::spin::{field_from_rabi, rabi_from_field, PhysicalConstants, ShiftMode};
use rayon::prelude::*;

/// Reported per-fit amplitude error bars must calibrate against the actual
/// Monte Carlo scatter of the recovered amplitude.
#[test]
fn reported_fit_errors_calibrate_against_monte_carlo_scatter() {
    let p = SignalModelParams::default();
    let c = PhysicalConstants::nv();
    let cam = CameraModel::default();
    let tau: Vec<f64> = (0..40).map(|i| 0.2 + i as f64 * 0.246).collect();
    let clean = closed_form_trace(&tau, &p).unwrap();
    let results: Vec<(f64, f64)> = (0..500u64)
        .into_par_iter()
        .map(|i| {
            let cam_i = CameraModel { seed: 1000 + i, ..cam };
            let noisy = synth_noisy_trace(&clean, &cam_i, 60.0).unwrap();
            let fit =
                fit_acz_trace(&noisy, FixedParams::default(), InitStrategy::SpectralPeak).unwrap();
            assert!(fit.converged, "trial {i} did not converge");
            let f = fit.frequency();
            let df = fit.frequency_err();
            let b = amplitude_from_shift(f, p.detuning, &c, p.shift_mode).unwrap();
            // First-order error propagation through f = c B^2.
            (b, b * df / (2.0 * f))
        })
        .collect();
    assert!(results.iter().all(|r| r.0.is_finite() && r.1.is_finite()));
    let n = results.len() as f64;
    let mean_b = results.iter().map(|r| r.0).sum::<f64>() / n;
    let empirical =
        (results.iter().map(|r| (r.0 - mean_b).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let reported = results.iter().map(|r| r.1).sum::<f64>() / n;
    let ratio = empirical / reported;
    assert!(
        (ratio - 1.0).abs() <= 0.15,
        "empirical scatter {empirical:.3e} vs mean reported error {reported:.3e} (ratio {ratio:.3})"
    );
}

/// Field maps recovered through the amplitude-shift route and through direct
/// oscillation-rate fits must agree pixel for pixel on a synthetic antenna.
#[test]
fn acz_and_rabi_imaging_agree_on_the_antenna_map() {
    let antenna = OmegaAntenna::default();
    let grid = MapGrid { width: 8, height: 8, pixel_size_um: 15.0, ..MapGrid::default() };
    let map = synth_field_map(&antenna, &grid).unwrap();
    let p = SignalModelParams::default();
    let c = PhysicalConstants::nv();
    let cam = CameraModel::default();
    let tau_rabi: Vec<f64> = (0..40).map(|i| 0.02 + i as f64 * 0.02).collect();
    let tau_acz: Vec<f64> =
        (0..40).map(|i| 0.05 * (12.8f64 / 0.05).powf(i as f64 / 39.0)).collect();
    let rabi_px =
        synth_pixel_traces(&map, ImagingKind::Rabi, &tau_rabi, &p, &c, &cam, 50.0).unwrap();
    let cam2 = CameraModel { seed: 2, ..cam };
    let acz_px = synth_pixel_traces(
        &map,
        ImagingKind::Acz { detuning: p.detuning },
        &tau_acz,
        &p,
        &c,
        &cam2,
        50.0,
    )
    .unwrap();
    let rabi_map = fit_rabi_map(&rabi_px, FixedParams::default(), &c).unwrap();
    let acz_map =
        fit_acz_map(&acz_px, p.detuning, FixedParams::default(), &c, ShiftMode::Exact).unwrap();
    let mut sq = 0.0;
    let mut worst: f64 = 0.0;
    for i in 0..map.values.len() {
        assert!(rabi_map.mask[i] && acz_map.mask[i], "pixel {i} failed to fit");
        let rel = (acz_map.values[i] - rabi_map.values[i]) / rabi_map.values[i];
        sq += rel * rel;
        worst = worst.max(rel.abs());
    }
    let rms = (sq / map.values.len() as f64).sqrt();
    assert!(rms <= 0.03, "pixel-wise rms disagreement {rms:.3e}, worst {worst:.3e}");
    // The omega-loop geometry puts about a 3x spread across this field of view.
    let (lo, hi) = rabi_map.range().unwrap();
    let spread = hi / lo;
    assert!(
        (2.5..=3.5).contains(&spread),
        "recovered field spread {spread:.3} outside the expected band"
    );
}

/// The closed-form single-point sensitivity must match a Monte Carlo run
/// that inverts the signal at one evolution time.
#[test]
fn single_point_sensitivity_matches_monte_carlo() {
    let p = SignalModelParams::default();
    let c = PhysicalConstants::nv();
    let cam = CameraModel::default();
    let tau = 1.0;
    let clean = closed_form_trace(&[tau], &p).unwrap();
    let b_true = field_from_rabi(p.omega, &c).unwrap();
    let signal_at = |b: f64| -> f64 {
        let pb = SignalModelParams { omega: rabi_from_field(b, &c).unwrap(), ..p };
        closed_form_signal(tau, &pb).unwrap()
    };
    // Newton solve of S(tau; b) = y; the scatter keeps b within one
    // oscillation lobe of the truth, so the root is unique.
    let invert = |y: f64| -> f64 {
        let mut b = b_true;
        let h = 1e-7;
        for _ in 0..40 {
            let s = signal_at(b);
            let slope = (signal_at(b + h) - signal_at(b - h)) / (2.0 * h);
            let step = (s - y) / slope;
            b -= step;
            if step.abs() < 1e-13 {
                break;
            }
        }
        b
    };
    let mut samples = Vec::new();
    for (k, &t) in [0.5, 1.6, 5.0].iter().enumerate() {
        let fits: Vec<f64> = (0..1500u64)
            .into_par_iter()
            .map(|i| {
                let cam_i = CameraModel { seed: 10_000 * (k as u64 + 1) + i, ..cam };
                let noisy = synth_noisy_trace(&clean, &cam_i, t).unwrap();
                invert(noisy.contrast[0])
            })
            .collect();
        let n = fits.len() as f64;
        let mean = fits.iter().sum::<f64>() / n;
        let sd = (fits.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        samples.push((t, sd));
    }
    let (eta_fit, _) = fit_eta(&samples).unwrap();
    let eta_pred = eta_single(tau, &p, &cam, &c).unwrap();
    let ratio = eta_fit / eta_pred;
    assert!(
        (ratio - 1.0).abs() <= 0.10,
        "Monte Carlo eta {eta_fit:.3e} vs closed form {eta_pred:.3e} (ratio {ratio:.3})"
    );
}
