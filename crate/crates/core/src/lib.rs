pub mod analysis;
pub mod cli;
pub mod config;
pub mod counting;
pub mod entanglement;
pub mod error;
pub mod fiber;
pub mod numeric;
pub mod phase_matching;
pub mod spectrum;
pub mod units;

pub use error::{Error, Result};
