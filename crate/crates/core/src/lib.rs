//! Parametric channel estimation for uplink OFDMA with hopping pilots.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: complex dense kernels (Hermitian EVD, pseudo-inverse,
//!   shift-operator solvers, Bessel `J0`, seeded complex Gaussian sampling).
//! - [`channel`]: WSSUS sparse multipath Rayleigh fading and per-tone CFR.
//! - [`frame`]: uplink numerology, tile allocation, hopping pilot patterns
//!   and per-tone noisy observation.
//! - [`estimator`]: the hopping-pilot ESPRIT pipeline (LS pilots, stacking,
//!   covariance, Doppler compensation, MDL, ESPRIT, delay support, global
//!   interpolation) and the per-tile local-linear baseline.
//! - [`harness`]: Monte Carlo NMSE sweeps and CSV output.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod estimator;
pub mod frame;
pub mod harness;
pub mod numerics;

pub use error::{Error, Result};
pub use numerics::{CMatrix, C64};
