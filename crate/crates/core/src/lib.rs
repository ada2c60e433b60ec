pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod hashing;
pub mod operator;
pub mod quadrature;
pub mod rng;
pub mod simulator;
pub mod stable_noise;
pub mod verifier;

pub use error::{Error, Result};
