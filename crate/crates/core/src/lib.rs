pub mod cli;
pub mod config;
pub mod ct_double;
pub mod ct_single;
pub mod dt_double;
pub mod dt_single;
pub mod error;
pub mod model;
pub mod optimizer;
pub mod report;
pub mod sim;
pub mod tradeoff;
pub mod topology;

pub use error::{Error, Result};
