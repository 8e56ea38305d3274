pub mod autodiff;
pub mod checkpoint;
pub mod env;
pub mod error;
pub mod experiment;
pub mod models;
pub mod optim;
pub mod oracle;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
