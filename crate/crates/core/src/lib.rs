//! Numerical toolkit for quaternionic contact structures given in local
//! coordinates: structure recovery, the canonical connection and its curvature,
//! and the CR structure on the twistor space.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod algebra;
pub mod catalog;
pub mod chart;
pub mod connection;
pub mod curvature;
pub mod error;
pub mod exprlang;
pub mod fd;
pub mod settings;
pub mod twistor;

pub use error::{QcError, Result};
pub use settings::{NumericSettings, Tolerances};
