//! Near-field uplink localization and synchronization with a linear array.
//!
//! * [`scenario`]: geometry, the four phase models, gains and regimes.
//! * [`fim`]: Fisher information (brute force and closed forms) and the PEB.
//! * [`synth`]: received-grid synthesis with optional scatterers.
//! * [`estimate`]: 2D-FFT estimation and sub-array localization.
//! * [`experiment`]: sweeps and Monte Carlo runs emitting CSV rows.

// `!(x > 0.0)` style checks are intentional: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod estimate;
pub mod experiment;
pub mod fim;
pub mod scenario;
pub mod synth;

pub use error::{Error, Result};
pub use estimate::{EstimatorConfig, LocalizationResult, SubarrayMeasurement};
pub use fim::{FimPolar, FimPosition, PilotSpectrum};
pub use scenario::{classify_regime, ModelKind, Point2, RegimeReport, Scatterer, Scenario};
pub use synth::ObservationGrid;
