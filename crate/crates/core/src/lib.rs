pub mod data;
pub mod dgp;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod survival;
pub mod weights;

pub use error::{Error, Result};
