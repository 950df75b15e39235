//! Sequential treatment-allocation procedures for two-arm clinical trials and
//! a Monte-Carlo engine for comparing them.

pub mod cara;
pub mod covadaptive;
pub mod error;
pub mod estimation;
pub mod procedure;
pub mod restricted;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod trial;

pub use error::{Result, SimError};
