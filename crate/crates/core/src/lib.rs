pub mod asif;
pub mod barrier;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod intervals;
pub mod platoon;
pub mod reachability;

pub use error::{Error, Result};
