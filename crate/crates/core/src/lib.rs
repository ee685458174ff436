//! Optimal dynamic allocation and pricing of goods sold in several
//! varieties to impatient consumers who accept any variety up to their
//! flexibility level, under random supply and demand.

pub mod cli;
pub mod dp;
pub mod error;
pub mod example;
pub mod market;
pub mod mechanism;
pub mod oracle;
pub mod sampling;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
