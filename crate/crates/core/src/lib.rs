//! Simulation and analysis toolkit for studying how log-normal shadowing
//! degrades on-demand source routing over an 802.11 DCF MAC.
//!
//! The crate is split into the closed-form side ([`analytics`],
//! [`propagation`]) and the packet-level discrete-event simulator
//! ([`mac`], [`dsr`], [`engine`]). [`study`] glues the two together to
//! produce the delivery-ratio datasets and the mitigation comparisons.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod dsr;
pub mod engine;
pub mod error;
pub mod frame;
pub mod mac;
pub mod propagation;
pub mod quad;
pub mod study;
pub mod time;

pub use error::{ConfigError, ModelError};
pub use time::SimTime;
