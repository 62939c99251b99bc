pub mod error;
pub mod linalg;
pub mod problems;
pub mod rng;

pub use error::{Error, Result};
pub mod models;
pub mod optimizer;
pub mod moreau;
pub mod harness;
pub mod cli;
