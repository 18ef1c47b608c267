//! Desk-scale laboratory for semantic agent communication.
//!
//! The crate is organised by concern:
//!
//! - [`numerics`]: tensors, dense networks, Adam, gradient checking.
//! - [`channel`]: AWGN / block-Rayleigh channels and SNR drift schedules.
//! - [`codec`]: the joint semantic-channel codec and its quality surface.
//! - [`adaptation`]: conditional-GAN channel surrogate and online fine-tuning
//!   under SNR drift.
//! - [`lightweight`]: pruning, quantization and receiver-guided partial
//!   sampling.
//! - [`orchestration`]: interference network and two-timescale hierarchical
//!   Q-learning agents.
//! - [`harness`]: dataset loading, checkpoints, CSV metrics, configuration
//!   and the experiment drivers behind the `semnet` CLI.

pub mod adaptation;
pub mod channel;
pub mod codec;
pub mod error;
pub mod harness;
pub mod lightweight;
pub mod numerics;
pub mod orchestration;

pub use error::{Error, Result};
