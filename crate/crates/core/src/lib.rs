pub mod baselines;
pub mod datahub;
pub mod diffcore;
pub mod dualtower;
pub mod error;
pub mod evalkit;
pub mod experiment;
pub mod inference;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
