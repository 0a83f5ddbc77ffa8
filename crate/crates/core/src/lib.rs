//! Two-timescale hybrid precoding for multi-user massive MIMO.
//!
//! The RF precoder is optimized online from a stream of sampled channels with a
//! stochastic successive convex approximation, while the baseband precoder is a
//! regularized zero-forcing precoder recomputed per channel sample.

pub use nalgebra::Complex;

/// Complex scalar used throughout.
pub type C64 = Complex<f64>;

pub mod channel;
pub mod dual_qp;
pub mod error;
pub mod gradients;
pub mod harness;
pub mod precoding;
pub mod problems;
pub mod rng;
pub mod surrogate;

pub use error::{Result, ThpError};
