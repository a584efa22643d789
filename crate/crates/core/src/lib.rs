pub mod backtests;
pub mod cli;
pub mod engine;
pub mod distributions;
pub mod error;
pub mod io;
pub mod lambda;
pub mod poisson_binomial;
pub mod risk;
pub mod selftest;
pub mod series;
pub mod special;

pub use error::{Error, Result};
