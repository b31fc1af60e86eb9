//! Sign-flipping poisoning attacks on signed trust networks, the models they
//! target, balance metrics, and graph-level attack detectors.

pub mod attacks;
pub mod balance;
pub mod detectors;
pub mod error;
pub mod fextra;
pub mod graph;
pub mod numerics;
pub mod pole;
pub mod synthetic;
pub mod victim;

pub use error::{Error, Result};
