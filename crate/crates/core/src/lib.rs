pub mod calibrate;
pub mod dgp;
pub mod error;
pub mod exec;
pub mod fmtest;
pub mod harness;
pub mod linalg;
pub mod longrun;
pub mod quantreg;
pub mod rng;
pub mod series;
pub mod stats;
pub mod tables;
pub mod unitroot;

pub use error::{Error, Result};
pub use exec::Exec;
