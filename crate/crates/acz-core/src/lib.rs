//! Simulation and analysis toolkit for wideband microwave-amplitude sensing
//! with driven two-level spin ensembles.
//!
//! An off-resonant microwave drive shifts the spin transition by the
//! amplitude-dependent dressed-state splitting; dynamical-decoupling
//! sequences convert that shift into an oscillating contrast signal whose
//! frequency encodes the drive amplitude. The crate covers the full chain:
//!
//! * [`spin`]: exact two-level rotating-frame propagators and shift formulas
//! * [`oracle`]: independent numerical integrators used only for validation
//! * [`sequence`]: CP2 / XY8^n / composite-pulse / Rabi sequence builders
//! * [`signal`]: phase-averaged sequence simulation and closed-form model
//! * [`measure`]: synthetic noisy datasets, antenna field maps, resonator
//! * [`estimate`]: damped least-squares fits from traces back to amplitudes
//! * [`sensitivity`]: Jacobians, noise scaling, pulse-number scaling laws
//! * [`config`]: experiment configuration loading and validation
//!
//! Unit conventions throughout: frequencies in MHz, times in us, magnetic
//! fields in mT. Phases passed to trigonometric arguments are built as
//! 2 pi f t from those units.

pub mod config;
pub mod error;
pub mod estimate;
pub mod fit;
pub mod io;
pub mod measure;
pub mod oracle;
pub mod run;
pub mod sensitivity;
pub mod sequence;
pub mod signal;
pub mod spin;

pub use config::ExperimentConfig;
pub use error::Error;
pub use estimate::{FitResult, FixedParams};
pub use measure::{CameraModel, FieldMap, ResonatorResponse};
pub use sensitivity::SensitivityReport;
pub use sequence::{PulseSequence, Segment, SegmentKind};
pub use signal::{SignalModelParams, SignalTrace};
pub use spin::{DriveParams, PhysicalConstants, ShiftMode, SpinState};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
