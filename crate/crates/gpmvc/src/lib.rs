//! Partial multi-view clustering with adversarial generation of missing views.

pub mod backprop;
pub mod checkpoint;
pub mod clustering;
pub mod dataio;
pub mod fusion;
pub mod losses;
pub mod report;
pub mod synth;
pub mod trainer;
pub mod viz;
pub mod networks;
pub mod error;
pub mod rng;

pub use error::{Error, Result};
