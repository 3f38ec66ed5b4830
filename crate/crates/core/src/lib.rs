pub mod capacity;
pub mod cli;
pub mod error;
pub mod kinematics;
pub mod lstm;
pub mod metrics;
pub mod predictors;
pub mod seed;
pub mod sim;
pub mod textdoc;
pub mod trace;
pub mod training;

pub use error::{Error, Result};
