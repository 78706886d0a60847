pub mod cli;
pub mod cumulant;
pub mod error;
pub mod linops;
pub mod montecarlo;
pub mod noise;
pub mod sequences;
pub mod smp;
pub mod spinsys;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
