//! Pulse protocol builders: CP2 and XY8^n echo sequences with interleaved
//! off-resonant signal windows, SCROFULOUS composite pulses, and Rabi sweeps.
//!
//! Sequences are flat segment lists on a single timeline. Timing convention
//! (standard CPMG): for N pi pulses at interval `d`, free evolution is
//! `d/2 [pi] d [pi] d ... d [pi] d/2`, bracketed by the two pi/2 pulses.
//! With `d = tau / (4n)` and `N = 8n` the total free evolution is `2 tau`
//! and the signal windows, which fill every second gap starting with the
//! second, add up to exactly `tau`. CP2 is the `N = 2` case with a single
//! window of length `tau` between the pi pulses.
//!
//! Pulse durations (finite mode) extend the sequence; free-evolution spans
//! are kept exact. The readout pi/2 carries phase `phi + pi` relative to the
//! first, which makes the bright state the signal-bearing one.
//!
//! Builders attach a zero-amplitude placeholder drive to signal windows;
//! the signal simulator binds the actual drive parameters.

use crate::error::{ensure_finite, Error};
use crate::spin::{DriveParams, SpinOp};
use crate::Result;

const PI: f64 = std::f64::consts::PI;
const TAU_RAD: f64 = std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum SegmentKind {
    /// Resonant drive pulse with nominal rotation `angle` (rad).
    ControlPulse { angle: f64 },
    /// Off-resonant drive window.
    SignalWindow,
    /// Free evolution.
    Wait,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub drive: Option<DriveParams>,
    /// us.
    pub duration: f64,
    pub label: String,
}

impl Segment {
    fn control(angle: f64, phase: f64, control_rabi: f64, ideal: bool, label: &str) -> Self {
        let duration = if ideal { 0.0 } else { angle / (TAU_RAD * control_rabi) };
        Segment {
            kind: SegmentKind::ControlPulse { angle },
            drive: Some(DriveParams::new(0.0, if ideal { 0.0 } else { control_rabi }, phase)),
            duration,
            label: label.to_string(),
        }
    }

    fn window(duration: f64, label: &str) -> Self {
        Segment {
            kind: SegmentKind::SignalWindow,
            drive: Some(DriveParams::new(0.0, 0.0, 0.0)),
            duration,
            label: label.to_string(),
        }
    }

    fn wait(duration: f64) -> Self {
        Segment { kind: SegmentKind::Wait, drive: None, duration, label: "wait".to_string() }
    }
}

/// Which builder produced a sequence; drives protocol-specific validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Protocol {
    Cp2,
    Xy8 { n: usize },
    Rabi,
    Custom,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PulseSequence {
    pub segments: Vec<Segment>,
    /// Sweep parameter: total signal-window time for echo protocols, pulse
    /// duration for Rabi sequences. us.
    pub tau: f64,
    /// Number of pi pulses.
    pub n_pi: usize,
    /// Sum of segment durations, us.
    pub total_duration: f64,
    pub protocol: Protocol,
}

impl PulseSequence {
    fn seal(mut self) -> Self {
        self.total_duration = self.segments.iter().map(|s| s.duration).sum();
        self
    }

    /// Sum of wait and signal-window durations.
    pub fn free_evolution(&self) -> f64 {
        self.segments
            .iter()
            .filter(|s| !matches!(s.kind, SegmentKind::ControlPulse { .. }))
            .map(|s| s.duration)
            .sum()
    }

    /// Sum of signal-window durations.
    pub fn window_total(&self) -> f64 {
        self.segments
            .iter()
            .filter(|s| matches!(s.kind, SegmentKind::SignalWindow))
            .map(|s| s.duration)
            .sum()
    }

    /// One segment per line: kind, duration, detuning, rabi, phase, label.
    /// Driveless segments print `-` placeholders. Stable golden-file format.
    pub fn export_text(&self) -> String {
        let mut out = String::new();
        let proto = match self.protocol {
            Protocol::Cp2 => "cp2".to_string(),
            Protocol::Xy8 { n } => format!("xy8 n={n}"),
            Protocol::Rabi => "rabi".to_string(),
            Protocol::Custom => "custom".to_string(),
        };
        out.push_str(&format!(
            "# protocol: {proto} tau={} n_pi={} total={}\n",
            self.tau, self.n_pi, self.total_duration
        ));
        out.push_str("# columns: kind duration_us detuning_mhz rabi_mhz phase_rad label\n");
        for s in &self.segments {
            let kind = match s.kind {
                SegmentKind::ControlPulse { .. } => "control-pulse",
                SegmentKind::SignalWindow => "signal-window",
                SegmentKind::Wait => "wait",
            };
            match s.drive {
                Some(d) => out.push_str(&format!(
                    "{kind} {} {} {} {} {}\n",
                    s.duration, d.detuning, d.rabi, d.phase, s.label
                )),
                None => out.push_str(&format!("{kind} {} - - - {}\n", s.duration, s.label)),
            }
        }
        out
    }
}

fn check_tau(tau: f64) -> Result<()> {
    ensure_finite(&[("tau", tau)])?;
    if tau <= 0.0 {
        return Err(Error::Domain(format!("tau must be > 0, got {tau}")));
    }
    Ok(())
}

fn check_control(control_rabi: f64, ideal: bool) -> Result<()> {
    ensure_finite(&[("control_rabi", control_rabi)])?;
    if !ideal && control_rabi <= 0.0 {
        return Err(Error::Domain(format!(
            "control_rabi must be > 0 for finite pulses, got {control_rabi}"
        )));
    }
    Ok(())
}

/// Two-pi-pulse echo with one signal window of length `tau` between the pi
/// pulses and `tau/2` waits outside them; readout pi/2 is phase-inverted.
pub fn build_cp2(tau: f64, control_rabi: f64, ideal_pulses: bool) -> Result<PulseSequence> {
    check_tau(tau)?;
    check_control(control_rabi, ideal_pulses)?;
    let c = |angle: f64, phase: f64, label: &str| {
        Segment::control(angle, phase, control_rabi, ideal_pulses, label)
    };
    let segments = vec![
        c(PI / 2.0, 0.0, "pi/2"),
        Segment::wait(tau / 2.0),
        c(PI, 0.0, "pi#1"),
        Segment::window(tau, "window#1"),
        c(PI, 0.0, "pi#2"),
        Segment::wait(tau / 2.0),
        c(PI / 2.0, PI, "pi/2-readout"),
    ];
    Ok(PulseSequence { segments, tau, n_pi: 2, total_duration: 0.0, protocol: Protocol::Cp2 }
        .seal())
}

/// Phases of one XY8 block: X Y X Y Y X Y X.
pub const XY8_BLOCK_PHASES: [f64; 8] =
    [0.0, PI / 2.0, 0.0, PI / 2.0, PI / 2.0, 0.0, PI / 2.0, 0.0];

/// XY8 repeated `n` times: 8n pi pulses at interval `tau/(4n)`, half
/// intervals at the ends, signal windows filling every second gap starting
/// with the second (one window per two pi pulses, 4n in total).
pub fn build_xy8n(n: usize, tau: f64, control_rabi: f64, ideal_pulses: bool) -> Result<PulseSequence> {
    if n < 1 {
        return Err(Error::Domain(format!("n must be >= 1, got {n}")));
    }
    check_tau(tau)?;
    check_control(control_rabi, ideal_pulses)?;
    let n_pi = 8 * n;
    let d = tau / (4.0 * n as f64);
    let c = |angle: f64, phase: f64, label: &str| {
        Segment::control(angle, phase, control_rabi, ideal_pulses, label)
    };
    let mut segments = Vec::with_capacity(2 * n_pi + 3);
    segments.push(c(PI / 2.0, 0.0, "pi/2"));
    segments.push(Segment::wait(d / 2.0));
    let mut windows = 0usize;
    for k in 0..n_pi {
        let phase = XY8_BLOCK_PHASES[k % 8];
        let axis = if phase == 0.0 { "X" } else { "Y" };
        segments.push(c(PI, phase, &format!("pi[{axis}]#{}", k + 1)));
        if k + 1 == n_pi {
            segments.push(Segment::wait(d / 2.0));
        } else if k % 2 == 0 {
            windows += 1;
            segments.push(Segment::window(d, &format!("window#{windows}")));
        } else {
            segments.push(Segment::wait(d));
        }
    }
    segments.push(c(PI / 2.0, PI, "pi/2-readout"));
    Ok(PulseSequence { segments, tau, n_pi, total_duration: 0.0, protocol: Protocol::Xy8 { n } }
        .seal())
}

/// One resonant-drive sequence per duration; contrast vs duration sweeps out
/// the Rabi oscillation at the control Rabi frequency.
pub fn build_rabi(durations: &[f64], control_rabi: f64) -> Result<Vec<PulseSequence>> {
    check_control(control_rabi, false)?;
    let mut out = Vec::with_capacity(durations.len());
    for (i, &t) in durations.iter().enumerate() {
        ensure_finite(&[("duration", t)])?;
        if t < 0.0 {
            return Err(Error::Domain(format!("durations[{i}] must be >= 0, got {t}")));
        }
        let angle = TAU_RAD * control_rabi * t;
        let seg = Segment {
            kind: SegmentKind::ControlPulse { angle },
            drive: Some(DriveParams::new(0.0, control_rabi, 0.0)),
            duration: t,
            label: format!("rabi#{i}"),
        };
        out.push(
            PulseSequence {
                segments: vec![seg],
                tau: t,
                n_pi: 0,
                total_duration: 0.0,
                protocol: Protocol::Rabi,
            }
            .seal(),
        );
    }
    Ok(out)
}

/// Composite-pulse decomposition: sub-pulse (rotation angle, phase) list.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CompositePulseSpec {
    /// rad; pi or pi/2.
    pub target_angle: f64,
    /// (rotation angle rad, phase rad) triples.
    pub sub_pulses: Vec<(f64, f64)>,
    /// MHz; sets sub-pulse durations when expanded to segments.
    pub control_rabi: f64,
}

impl CompositePulseSpec {
    /// Net operator with all rotation angles scaled by `1 + eps`
    /// (pulse-length error model).
    pub fn unitary(&self, eps: f64) -> SpinOp {
        let mut u = SpinOp::identity();
        for &(angle, phase) in &self.sub_pulses {
            u = SpinOp::rotation(angle * (1.0 + eps), phase).mul(&u);
        }
        u
    }

    /// Expansion to finite control-pulse segments.
    pub fn to_segments(&self, ideal: bool) -> Vec<Segment> {
        self.sub_pulses
            .iter()
            .enumerate()
            .map(|(i, &(angle, phase))| {
                let mut s =
                    Segment::control(angle, phase, self.control_rabi, ideal, &format!("sub#{i}"));
                s.label = format!("composite-sub#{}", i + 1);
                s
            })
            .collect()
    }
}

/// Three-pulse composite robust to pulse-length error, for target rotation
/// `theta_t` about X. The sub-pulse parameters solve the published
/// constraint set
///
/// ```text
/// sin(theta_1)/theta_1 = 2 cos(theta_t/2) / pi,   theta_3 = theta_1
/// phi_1 = phi_3 = arccos(-pi cos(theta_1) / (2 theta_1 sin(theta_t/2)))
/// theta_2 = pi,   phi_2 = phi_1 - arccos(-pi / (2 theta_1))
/// ```
///
/// which evaluate to 180_60 180_300 180_60 (degrees, angle_phase) for a pi
/// target and 115.2_62.0 180_280.6 115.2_62.0 for pi/2.
pub fn build_scrofulous(target_angle: f64, control_rabi: f64) -> Result<CompositePulseSpec> {
    ensure_finite(&[("target_angle", target_angle)])?;
    check_control(control_rabi, false)?;
    if !(target_angle > 0.0 && target_angle <= PI) {
        return Err(Error::Domain(format!(
            "target_angle must be in (0, pi], got {target_angle}"
        )));
    }
    // sinc is strictly decreasing on (0, pi]; bisect.
    let rhs = 2.0 * (target_angle / 2.0).cos() / PI;
    let sinc = |x: f64| x.sin() / x;
    let (mut lo, mut hi) = (1e-9, PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sinc(mid) > rhs {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta1 = 0.5 * (lo + hi);
    let phi1 = (-PI * theta1.cos() / (2.0 * theta1 * (target_angle / 2.0).sin())).acos();
    let phi2 = phi1 - (-PI / (2.0 * theta1)).acos();
    Ok(CompositePulseSpec {
        target_angle,
        sub_pulses: vec![(theta1, phi1), (PI, phi2), (theta1, phi1)],
        control_rabi,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Stable machine-readable code.
    pub code: &'static str,
    pub detail: String,
}

/// Structural checks; violations are data, not errors.
pub fn validate_sequence(seq: &PulseSequence) -> Vec<Violation> {
    let mut v = Vec::new();
    let total: f64 = seq.segments.iter().map(|s| s.duration).sum();
    if (total - seq.total_duration).abs() > 1e-9 * total.max(1.0) {
        v.push(Violation {
            code: "total-duration",
            detail: format!("recorded {} != summed {}", seq.total_duration, total),
        });
    }
    let mut prev_window = false;
    for (i, s) in seq.segments.iter().enumerate() {
        if !(s.duration >= 0.0 && s.duration.is_finite()) {
            v.push(Violation { code: "duration", detail: format!("segment {i}: {}", s.duration) });
        }
        match s.kind {
            SegmentKind::ControlPulse { .. } | SegmentKind::SignalWindow => {
                if s.drive.is_none() {
                    v.push(Violation {
                        code: "drive-missing",
                        detail: format!("segment {i} ({}) has no drive", s.label),
                    });
                }
            }
            SegmentKind::Wait => {
                if s.drive.is_some() {
                    v.push(Violation {
                        code: "wait-drive",
                        detail: format!("segment {i} ({}) carries a drive", s.label),
                    });
                }
            }
        }
        // Two windows with no control pulse between them form one
        // uninterrupted signal span: flagged as overlap.
        let is_window = matches!(s.kind, SegmentKind::SignalWindow);
        if is_window && prev_window {
            v.push(Violation {
                code: "overlap",
                detail: format!("segments {} and {i} are adjacent signal windows", i - 1),
            });
        }
        if is_window {
            prev_window = true;
        } else if matches!(s.kind, SegmentKind::ControlPulse { .. }) {
            prev_window = false;
        }
    }
    let n_pi_actual = seq
        .segments
        .iter()
        .filter(|s| matches!(s.kind, SegmentKind::ControlPulse { angle } if (angle - PI).abs() < 1e-9))
        .count();
    if n_pi_actual != seq.n_pi {
        v.push(Violation {
            code: "pi-count",
            detail: format!("recorded {} != actual {}", seq.n_pi, n_pi_actual),
        });
    }
    match seq.protocol {
        Protocol::Xy8 { n } => validate_xy8(seq, n, &mut v),
        Protocol::Cp2 => {
            let w = seq.window_total();
            if (w - seq.tau).abs() > 1e-9 * seq.tau {
                v.push(Violation {
                    code: "window-total",
                    detail: format!("window total {} != tau {}", w, seq.tau),
                });
            }
        }
        Protocol::Rabi | Protocol::Custom => {}
    }
    v
}

fn validate_xy8(seq: &PulseSequence, n: usize, v: &mut Vec<Violation>) {
    let d = seq.tau / (4.0 * n as f64);
    // Free evolution between consecutive pi pulses must equal d.
    let mut gap = 0.0;
    let mut gaps = Vec::new();
    let mut phases = Vec::new();
    let mut seen_pi = false;
    for s in &seq.segments {
        match s.kind {
            SegmentKind::ControlPulse { angle } if (angle - PI).abs() < 1e-9 => {
                if seen_pi {
                    gaps.push(gap);
                }
                seen_pi = true;
                gap = 0.0;
                if let Some(dr) = s.drive {
                    phases.push(dr.phase);
                }
            }
            SegmentKind::ControlPulse { .. } => {}
            _ => gap += s.duration,
        }
    }
    for (i, g) in gaps.iter().enumerate() {
        if (g - d).abs() > 1e-9 * d.max(1e-300) {
            v.push(Violation {
                code: "interval",
                detail: format!("gap {i} is {g}, expected tau/(4n) = {d}"),
            });
        }
    }
    for (i, p) in phases.iter().enumerate() {
        if (p - XY8_BLOCK_PHASES[i % 8]).abs() > 1e-12 {
            v.push(Violation {
                code: "phase-pattern",
                detail: format!("pi pulse {i} phase {p}, expected {}", XY8_BLOCK_PHASES[i % 8]),
            });
        }
    }
    let windows = seq
        .segments
        .iter()
        .filter(|s| matches!(s.kind, SegmentKind::SignalWindow))
        .count();
    if windows != 4 * n {
        v.push(Violation {
            code: "window-count",
            detail: format!("found {windows} windows, expected {}", 4 * n),
        });
    }
}
