//! Data-driven transmission power control for remote state estimation over
//! a packet-dropping wireless channel.
//!
//! A sensor runs a local Kalman filter and sends its estimate to a remote
//! estimator. The power it spends on each packet is a quadratic function of
//! the incremental innovation, so a lost packet still tells the receiver
//! that the innovation was small, and the receiver's posterior stays
//! Gaussian.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod estimator;
pub mod plant;
pub mod policy;
pub mod psdlin;
pub mod sim;

pub use channel::{ChannelError, ChannelParams};
pub use estimator::RemoteState;
pub use plant::{ModelError, SteadyState, SystemModel};
pub use policy::{PolicyError, PolicyKind, PolicyState};
pub use psdlin::{LinalgError, Matrix, PsdMatrix, Vector};
