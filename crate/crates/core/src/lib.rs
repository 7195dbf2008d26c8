//! Online adaptation of dropout-trained networks by particle filtering over
//! dropout masks.
//!
//! A network trained with dropout is an implicit ensemble: every binary mask
//! over its hidden units selects one member. [`filter`] keeps a weighted set
//! of masks and reweights them by how well each member predicts incoming
//! observations, so the model adapts without touching its weights.
//!
//! The crate is `no_std` (it needs `alloc`). Enable the `std` feature to let
//! the matrix kernels detect CPU features at runtime.
//!
//! Module map:
//!
//! * [`net`]: dense ReLU network with explicit per-unit gates, training and input Jacobians
//! * [`filter`]: the mask particle filter, resampling and effective sample size
//! * [`arm`]: two-link planar arm kinematics and multi-task data generation
//! * [`baselines`]: adaptation strategies (none, mask filter, gradient, length filter)
//! * [`control`]: PD tracking through the adapted model's Jacobian
//! * [`interpret`]: nearest-mask retrieval and distance-based confidence

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod arm;
pub mod baselines;
pub mod control;
mod error;
pub mod filter;
pub mod interpret;
pub mod linalg;
pub mod net;
pub mod rng;

pub use error::{Error, Result};
