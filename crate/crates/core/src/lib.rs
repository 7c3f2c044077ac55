pub mod checks;
pub mod config;
pub mod error;
pub mod dilation;
pub mod finprob;
pub mod graded;
pub mod monoid;
pub mod rational;
pub mod rep;

pub use error::{Error, Result};
