//! Capacity accounting for noisy driven dynamical systems.
//!
//! A reservoir observed through a linear readout splits its observable rank
//! between tasks measurable from the input history (information-processing
//! capacity) and tasks orthogonal to it (innovation capacity). This crate
//! provides the numerical machinery around that split: covariance-level
//! trace identities and the temperature shrinkage law, empirical capacity
//! estimation over orthonormal task families with Doob trial averaging,
//! whitened ellipsoid geometry with block-entropy and covering bounds, and a
//! typical-set packing construction that lower-bounds the sample complexity
//! of learning the innovation-block law in total variation.
//!
//! Reference reservoirs (a series RLC oscillator and a Duffing oscillator
//! with I/Q demodulation) and configuration-driven experiment runners live in
//! [`reservoir`] and [`experiments`].

pub mod capacity;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod hardness;
pub mod reservoir;
pub mod spectral;

pub use error::{Error, Result};
