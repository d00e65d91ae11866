//! Exact two-level dynamics in the rotating frame of a drive.
//!
//! A drive with detuning `Delta`, Rabi frequency `Omega` and phase `phi`
//! generates a rotation at the generalized Rabi frequency
//! `a = sqrt(Delta^2 + Omega^2)` about the tilted axis
//! `(sin(theta) cos(phi), sin(theta) sin(phi), cos(theta))` with
//! `cos(theta) = Delta/a`, `sin(theta) = Omega/a`. Over a segment of
//! duration `T` the amplitudes `(c_plus, c_minus)` evolve as
//!
//! ```text
//! c+' = (cos(pi a T) - i cos(theta) sin(pi a T)) c+  - i sin(theta) e^{-i phi} sin(pi a T) c-
//! c-' = -i sin(theta) e^{+i phi} sin(pi a T) c+      + (cos(pi a T) + i cos(theta) sin(pi a T)) c-
//! ```
//!
//! The dressed levels sit at `+/- a/2` and the off-resonant drive shifts the
//! probed transition by `a - Delta`, which for `Delta >> Omega` reduces to
//! the quadratic law `Omega^2 / (2 Delta)`.
//!
//! Frame bookkeeping for multi-segment sequences (a free-running source seen
//! from the frame of a different source) lives in the sequence layer, not
//! here: `propagate_segment` is the single-segment closed form.

use num_complex::Complex64 as C64;

use crate::error::{ensure_finite, Error};
use crate::Result;

/// Electron gyromagnetic ratio, MHz per mT.
pub const GAMMA_E_MHZ_PER_MT: f64 = 28.02495;

/// Geometric factor between field amplitude and Rabi frequency for the
/// effective two-level system embedded in the spin-1 ground state.
pub const RABI_FACTOR_SPIN1: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Same factor for a true two-level system driven along x.
pub const RABI_FACTOR_TWO_LEVEL: f64 = 0.5;

/// Physical constants entering field/frequency conversions.
///
/// `rabi_factor` must be one of the two supported drive geometries;
/// `validate` enforces it.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PhysicalConstants {
    /// Gyromagnetic ratio in MHz/mT.
    pub gamma_e: f64,
    /// Omega = gamma_e * rabi_factor * B.
    pub rabi_factor: f64,
}

impl PhysicalConstants {
    /// Spin-1 ground-state manifold defaults (the 1/sqrt(2) drive factor).
    pub fn nv() -> Self {
        Self { gamma_e: GAMMA_E_MHZ_PER_MT, rabi_factor: RABI_FACTOR_SPIN1 }
    }

    /// True two-level drive factor 1/2.
    pub fn two_level() -> Self {
        Self { gamma_e: GAMMA_E_MHZ_PER_MT, rabi_factor: RABI_FACTOR_TWO_LEVEL }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(&[("gamma_e", self.gamma_e), ("rabi_factor", self.rabi_factor)])?;
        if self.gamma_e <= 0.0 {
            return Err(Error::Domain(format!("gamma_e must be > 0, got {}", self.gamma_e)));
        }
        let ok = (self.rabi_factor - RABI_FACTOR_SPIN1).abs() < 1e-12
            || (self.rabi_factor - RABI_FACTOR_TWO_LEVEL).abs() < 1e-12;
        if !ok {
            return Err(Error::Domain(format!(
                "rabi_factor must be 1/sqrt(2) or 1/2, got {}",
                self.rabi_factor
            )));
        }
        Ok(())
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::nv()
    }
}

/// Drive parameters for one segment. Detuning is `f_transition - f_drive`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DriveParams {
    /// Detuning in MHz; may be negative.
    pub detuning: f64,
    /// Rabi frequency in MHz; non-negative.
    pub rabi: f64,
    /// Drive phase in rad.
    pub phase: f64,
}

impl DriveParams {
    pub fn new(detuning: f64, rabi: f64, phase: f64) -> Self {
        Self { detuning, rabi, phase }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(&[
            ("detuning", self.detuning),
            ("rabi", self.rabi),
            ("phase", self.phase),
        ])?;
        if self.rabi < 0.0 {
            return Err(Error::Domain(format!("rabi must be >= 0, got {}", self.rabi)));
        }
        Ok(())
    }

    /// Generalized Rabi frequency sqrt(Delta^2 + Omega^2).
    pub fn generalized_rabi(&self) -> f64 {
        self.detuning.hypot(self.rabi)
    }
}

/// Normalized amplitude pair on the (|+>, |->) basis, in the rotating frame.
/// Sequences start in |->.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinState {
    pub c_plus: C64,
    pub c_minus: C64,
}

impl SpinState {
    pub fn new(c_plus: C64, c_minus: C64) -> Self {
        Self { c_plus, c_minus }
    }

    pub fn plus() -> Self {
        Self { c_plus: C64::new(1.0, 0.0), c_minus: C64::new(0.0, 0.0) }
    }

    pub fn minus() -> Self {
        Self { c_plus: C64::new(0.0, 0.0), c_minus: C64::new(1.0, 0.0) }
    }

    pub fn norm(&self) -> f64 {
        (self.c_plus.norm_sqr() + self.c_minus.norm_sqr()).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self { c_plus: self.c_plus / n, c_minus: self.c_minus / n }
    }

    /// Population of |+>.
    pub fn population_plus(&self) -> f64 {
        self.c_plus.norm_sqr()
    }

    /// Population of |-> (the bright, signal-bearing state at readout).
    pub fn population_minus(&self) -> f64 {
        self.c_minus.norm_sqr()
    }

    /// |<self|other>|^2, insensitive to global phase.
    pub fn overlap(&self, other: &SpinState) -> f64 {
        (self.c_plus.conj() * other.c_plus + self.c_minus.conj() * other.c_minus).norm_sqr()
    }
}

/// 2x2 unitary acting on [`SpinState`], row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinOp {
    pub m: [[C64; 2]; 2],
}

impl SpinOp {
    pub fn identity() -> Self {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        Self { m: [[l, o], [o, l]] }
    }

    /// Rotation by `angle` about the equatorial axis at azimuth `phase`:
    /// exp(-i angle/2 (cos(phase) sx + sin(phase) sy)).
    pub fn rotation(angle: f64, phase: f64) -> Self {
        let (s, c) = (0.5 * angle).sin_cos();
        let e = C64::from_polar(1.0, -phase);
        Self {
            m: [
                [C64::new(c, 0.0), C64::new(0.0, -s) * e],
                [C64::new(0.0, -s) * e.conj(), C64::new(c, 0.0)],
            ],
        }
    }

    /// diag(e^{+i chi/2}, e^{-i chi/2}).
    pub fn z_phase(chi: f64) -> Self {
        let o = C64::new(0.0, 0.0);
        Self { m: [[C64::from_polar(1.0, 0.5 * chi), o], [o, C64::from_polar(1.0, -0.5 * chi)]] }
    }

    pub fn apply(&self, s: &SpinState) -> SpinState {
        SpinState {
            c_plus: self.m[0][0] * s.c_plus + self.m[0][1] * s.c_minus,
            c_minus: self.m[1][0] * s.c_plus + self.m[1][1] * s.c_minus,
        }
    }

    /// Matrix product; `a.mul(&b)` applies `b` first.
    pub fn mul(&self, rhs: &SpinOp) -> SpinOp {
        let mut m = [[C64::new(0.0, 0.0); 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.m[i][0] * rhs.m[0][j] + self.m[i][1] * rhs.m[1][j];
            }
        }
        SpinOp { m }
    }

    pub fn dagger(&self) -> SpinOp {
        SpinOp {
            m: [
                [self.m[0][0].conj(), self.m[1][0].conj()],
                [self.m[0][1].conj(), self.m[1][1].conj()],
            ],
        }
    }

    /// max |A_ij - B_ij|.
    pub fn max_abs_diff(&self, other: &SpinOp) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                d = d.max((self.m[i][j] - other.m[i][j]).norm());
            }
        }
        d
    }

    /// Phase-insensitive operator infidelity 1 - |tr(A^dag B)| / 2.
    pub fn infidelity(&self, other: &SpinOp) -> f64 {
        let ad = self.dagger();
        let p = ad.mul(other);
        1.0 - 0.5 * (p.m[0][0] + p.m[1][1]).norm()
    }
}

/// Closed-form single-segment unitary in the frame rotating with the drive.
pub fn segment_unitary(drive: &DriveParams, duration: f64) -> Result<SpinOp> {
    drive.validate()?;
    ensure_finite(&[("duration", duration)])?;
    if duration < 0.0 {
        return Err(Error::Domain(format!("duration must be >= 0, got {duration}")));
    }
    let a = drive.generalized_rabi();
    if a == 0.0 || duration == 0.0 {
        return Ok(SpinOp::identity());
    }
    let (cos_th, sin_th) = (drive.detuning / a, drive.rabi / a);
    let (s, c) = (std::f64::consts::PI * a * duration).sin_cos();
    let e = C64::from_polar(1.0, -drive.phase);
    let off = C64::new(0.0, -sin_th * s);
    Ok(SpinOp {
        m: [
            [C64::new(c, -cos_th * s), off * e],
            [off * e.conj(), C64::new(c, cos_th * s)],
        ],
    })
}

/// Propagates one state through one drive segment; output is normalized.
pub fn propagate_segment(state: &SpinState, drive: &DriveParams, duration: f64) -> Result<SpinState> {
    let u = segment_unitary(drive, duration)?;
    Ok(u.apply(state).normalized())
}

/// Dressed-state energies `(+a/2, -a/2)` in MHz.
pub fn dressed_energies(detuning: f64, rabi: f64) -> (f64, f64) {
    let a = detuning.hypot(rabi);
    (0.5 * a, -0.5 * a)
}

/// Which expression the shift is evaluated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftMode {
    /// sign(Delta) * (sqrt(Delta^2 + Omega^2) - |Delta|); at Delta = 0 the
    /// positive branch Omega is returned.
    Exact,
    /// Omega^2 / (2 Delta), valid for |Delta| >> Omega.
    Approx,
}

/// Drive-induced shift of the probed transition with a regime flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftEstimate {
    /// Shift in MHz, odd in Delta.
    pub mhz: f64,
    /// Set when |Delta| < 5 Omega, where the quadratic form degrades.
    pub regime_warning: bool,
}

/// Ratio |Delta|/Omega below which [`ShiftEstimate::regime_warning`] is set.
pub const SHIFT_REGIME_K: f64 = 5.0;

/// Amplitude-dependent transition shift produced by an off-resonant drive.
pub fn ac_zeeman_shift(detuning: f64, rabi: f64, mode: ShiftMode) -> Result<ShiftEstimate> {
    ensure_finite(&[("detuning", detuning), ("rabi", rabi)])?;
    if rabi < 0.0 {
        return Err(Error::Domain(format!("rabi must be >= 0, got {rabi}")));
    }
    let regime_warning = detuning.abs() < SHIFT_REGIME_K * rabi;
    let mhz = match mode {
        ShiftMode::Exact => {
            let magnitude = detuning.hypot(rabi) - detuning.abs();
            if detuning < 0.0 {
                -magnitude
            } else {
                magnitude
            }
        }
        ShiftMode::Approx => {
            if detuning == 0.0 {
                return Err(Error::Domain(
                    "approximate shift requires a nonzero detuning".into(),
                ));
            }
            rabi * rabi / (2.0 * detuning)
        }
    };
    Ok(ShiftEstimate { mhz, regime_warning })
}

/// Rabi frequency in MHz for a drive field amplitude in mT.
pub fn rabi_from_field(b_mt: f64, constants: &PhysicalConstants) -> Result<f64> {
    constants.validate()?;
    ensure_finite(&[("b_mt", b_mt)])?;
    if b_mt < 0.0 {
        return Err(Error::Domain(format!("field amplitude must be >= 0, got {b_mt}")));
    }
    Ok(constants.gamma_e * constants.rabi_factor * b_mt)
}

/// Field amplitude in mT for a Rabi frequency in MHz.
pub fn field_from_rabi(omega: f64, constants: &PhysicalConstants) -> Result<f64> {
    constants.validate()?;
    ensure_finite(&[("omega", omega)])?;
    if omega < 0.0 {
        return Err(Error::Domain(format!("rabi must be >= 0, got {omega}")));
    }
    Ok(omega / (constants.gamma_e * constants.rabi_factor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn dressed_energies_at_reference_point() {
        let (ep, em) = dressed_energies(140.0, 7.76);
        assert_relative_eq!(ep, 70.1074490, max_relative = 1e-7);
        assert_relative_eq!(em, -70.1074490, max_relative = 1e-7);
    }

    #[test]
    fn shift_exact_and_approx_reference_values() {
        let exact = ac_zeeman_shift(140.0, 7.76, ShiftMode::Exact).unwrap();
        let approx = ac_zeeman_shift(140.0, 7.76, ShiftMode::Approx).unwrap();
        assert_relative_eq!(exact.mhz, 0.21489792, max_relative = 1e-6);
        assert_relative_eq!(approx.mhz, 0.21506286, max_relative = 1e-6);
        assert!(!exact.regime_warning);
        // Relative gap stays below (Omega/Delta)^2.
        let gap = (approx.mhz - exact.mhz).abs() / exact.mhz;
        assert!(gap < (7.76f64 / 140.0).powi(2));
    }

    #[test]
    fn shift_regime_flag_and_domain_error() {
        let warn = ac_zeeman_shift(30.0, 7.76, ShiftMode::Exact).unwrap();
        assert!(warn.regime_warning);
        assert!(ac_zeeman_shift(0.0, 5.0, ShiftMode::Approx).is_err());
        let on_resonance = ac_zeeman_shift(0.0, 5.0, ShiftMode::Exact).unwrap();
        assert_relative_eq!(on_resonance.mhz, 5.0);
    }

    #[test]
    fn shift_is_odd_in_detuning() {
        let plus = ac_zeeman_shift(140.0, 7.76, ShiftMode::Exact).unwrap().mhz;
        let minus = ac_zeeman_shift(-140.0, 7.76, ShiftMode::Exact).unwrap().mhz;
        assert_relative_eq!(plus, -minus, max_relative = 1e-14);
        let ap = ac_zeeman_shift(140.0, 7.76, ShiftMode::Approx).unwrap().mhz;
        let am = ac_zeeman_shift(-140.0, 7.76, ShiftMode::Approx).unwrap().mhz;
        assert_relative_eq!(ap, -am, max_relative = 1e-14);
    }

    #[test]
    fn resonant_pi_pulse_inverts() {
        // Omega = 10 MHz => pi pulse duration 1/(2*10) = 0.05 us.
        let drive = DriveParams::new(0.0, 10.0, 0.0);
        let out = propagate_segment(&SpinState::minus(), &drive, 0.05).unwrap();
        assert_relative_eq!(out.population_plus(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rabi_field_reference_and_roundtrip() {
        let c = PhysicalConstants::nv();
        let omega = rabi_from_field(0.3919, &c).unwrap();
        assert_relative_eq!(omega, 7.766143, max_relative = 1e-6);
        let b = field_from_rabi(omega, &c).unwrap();
        assert_relative_eq!(b, 0.3919, max_relative = 1e-13);
        assert!(rabi_from_field(-0.1, &c).is_err());
    }

    #[test]
    fn invalid_inputs_are_domain_errors() {
        let d = DriveParams::new(0.0, 10.0, 0.0);
        assert!(propagate_segment(&SpinState::minus(), &d, -1.0).is_err());
        let neg = DriveParams::new(0.0, -1.0, 0.0);
        assert!(propagate_segment(&SpinState::minus(), &neg, 1.0).is_err());
        let nan = DriveParams::new(f64::NAN, 1.0, 0.0);
        assert!(propagate_segment(&SpinState::minus(), &nan, 1.0).is_err());
    }

    #[test]
    fn zero_drive_is_identity() {
        let d = DriveParams::new(0.0, 0.0, 0.3);
        let u = segment_unitary(&d, 2.5).unwrap();
        assert_eq!(u.max_abs_diff(&SpinOp::identity()), 0.0);
    }

    fn arb_drive() -> impl Strategy<Value = DriveParams> {
        (-400.0f64..400.0, 0.0f64..30.0, 0.0f64..std::f64::consts::TAU)
            .prop_map(|(d, o, p)| DriveParams::new(d, o, p))
    }

    proptest! {
        #[test]
        fn norm_is_preserved_along_chains(drives in proptest::collection::vec((arb_drive(), 0.0f64..2.0), 1..20)) {
            let mut s = SpinState::minus();
            for (d, t) in &drives {
                s = propagate_segment(&s, d, *t).unwrap();
            }
            prop_assert!((s.norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn composition_matches_single_segment(d in arb_drive(), t1 in 0.0f64..2.0, t2 in 0.0f64..2.0) {
            let whole = segment_unitary(&d, t1 + t2).unwrap();
            let part = segment_unitary(&d, t2).unwrap().mul(&segment_unitary(&d, t1).unwrap());
            prop_assert!(whole.max_abs_diff(&part) < 1e-12);
        }

        #[test]
        fn propagator_is_unitary(d in arb_drive(), t in 0.0f64..5.0) {
            let u = segment_unitary(&d, t).unwrap();
            let id = u.dagger().mul(&u);
            prop_assert!(id.max_abs_diff(&SpinOp::identity()) < 1e-13);
        }
    }
}
