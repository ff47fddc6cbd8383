//! Uplink cell-free massive MIMO simulation.
//!
//! The crate models a network of `L` distributed access points (APs) with `M`
//! antennas each serving `U` single-antenna users over a block-fading channel.
//! Its pieces, bottom-up:
//!
//! * [`topology`]: AP/user placement on a wrap-around square.
//! * [`propagation`]: path loss, correlated shadowing and per-link covariances.
//! * [`channel_training`]: pilot assignment, channel draws and MMSE estimation.
//! * [`clustering`]: correlation-based AP clustering and capacity-limited
//!   user association.
//! * [`power_control`]: pilot power weighted sum-rate maximization and
//!   max-min data power control.
//! * [`performance`]: use-and-then-forget SINR, spectral efficiency and
//!   summary statistics.
//! * [`harness`]: experiment configuration, Monte Carlo batching, sweeps and
//!   CSV output.

// `!(x > 0.0)` is used on purpose so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod channel_training;
pub mod clustering;
mod error;
pub mod harness;
pub mod linalg;
pub mod performance;
pub mod power_control;
pub mod propagation;
pub mod topology;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts a dB power ratio to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_conversions() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-12);
        assert!((dbm_to_watts(20.0) - 0.1).abs() < 1e-12);
        assert!((db_to_linear(-30.0) - 1e-3).abs() < 1e-15);
    }
}
