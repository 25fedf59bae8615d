//! Truncated Fock-space simulation of a phase- and polarization-insensitive
//! quantum repeater built from atomic-ensemble memories.
//!
//! * [`fock`] and [`transform`]: sparse multimode bosonic states, linear mode
//!   transforms and projective measurements.
//! * [`optics`]: beam splitters, delays, channel noise, loss and gated detectors.
//! * [`protocol`]: node write process, heralded link generation, local
//!   entanglement swapping and chain connection.

pub mod error;
pub mod fock;
pub mod mode;
pub mod optics;
pub mod protocol;
pub mod transform;

pub use error::{Error, Result};
pub use fock::{fidelity, inner_product, CreationPolynomial, FockState, MeasurementBranch, Outcome};
pub use mode::{ModeId, Polarization, Species};
pub use transform::ModeTransform;
