pub mod detection;
pub mod error;
pub mod fock;
pub mod linalg;
pub mod metrics;
pub mod optics;
pub mod protocols;
pub mod rng;
pub mod runner;
pub mod sources;
pub mod stats;

pub use error::{Error, Result};
