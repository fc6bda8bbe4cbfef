//! Signal chain for a multi-modal tactile skin: five single-axis Hall sensors
//! for planar normal force, four film piezoresistors for 2D shear, and an NTC
//! thermistor with a heating wire for temperature sensing and regulation.
//!
//! The crate is organised the way data flows through the system:
//!
//! - [`sim`]: physics stand-in for the hardware (force spread, transduction,
//!   lumped thermal model, scripted scenarios).
//! - [`acquisition`]: 5 kHz MUX schedule, 12-bit ADC, 30-byte wire packets.
//! - [`dsp`]: decimation, moving average and Butterworth low-pass.
//! - [`calibration`]: polynomial, multilinear and piecewise-linear models,
//!   profile persistence and evaluation metrics.
//! - [`runtime`]: zeroing, thermostat duty law, normal/shear cross-reference
//!   interference detection and thermal material recognition.
//! - [`pipeline`] and [`recording`]: the live chain from raw frames to
//!   [`runtime::ForceState`], plus lossless record/replay.

pub mod acquisition;
pub mod calibration;
pub mod channels;
pub mod dsp;
pub mod pipeline;
pub mod queue;
pub mod recording;
pub mod runtime;
pub mod sim;

pub use acquisition::RawFrame;
pub use calibration::CalibrationProfile;
pub use channels::{GridPosition, ShearDirection};
pub use dsp::{FilterSpec, FilteredFrame};
pub use pipeline::Pipeline;
pub use runtime::ForceState;
