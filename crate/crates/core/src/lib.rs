//! Distributed sign-perturbed-sums confidence regions over simulated
//! sensor networks.

pub mod analysis;
pub mod diffusion;
pub mod error;
pub mod experiments;
pub mod model;
pub mod rng;
pub mod sps;
pub mod topology;

pub use error::{Error, Result};
