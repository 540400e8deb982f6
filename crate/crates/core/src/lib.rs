//! Precoding for multiuser MIMO systems whose transmitters may use a
//! single-RF parasitic antenna array (ESPAR).
//!
//! * [`coupling`] - mutual-impedance model, port currents, input impedance
//!   and return loss;
//! * [`channel`] - seeded Rayleigh channels with transmit correlation;
//! * [`precoding`] - closed-form interference alignment and max-SINR;
//! * [`espar`] - loads and feed voltage for a desired precoder, with a
//!   constrained genetic-algorithm fallback;
//! * [`eval`] - ergodic rates, leakage and degrees-of-freedom estimates;
//! * [`sweep`] - configuration, presets and CSV output of power sweeps.

pub mod channel;
pub mod coupling;
pub mod error;
pub mod espar;
pub mod eval;
pub mod genetic;
pub mod linalg;
pub mod precoding;
pub mod special;
pub mod sweep;
pub mod text;

pub use error::{Error, Result};
