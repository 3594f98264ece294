pub mod attribution;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod rng;
pub mod training;

pub use error::{MoiraError, Result};
pub use numerics::Tensor2;
