//! Degradation-aware energy management for a vehicle-home-grid system.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod battery;
pub mod data_io;
pub mod engine;
pub mod forecaster;
pub mod optimizer;
pub mod parallel;
pub mod verify;
