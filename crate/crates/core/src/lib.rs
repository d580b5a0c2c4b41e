pub mod admissible;
pub mod cli;
pub mod counterexample;
pub mod error;
pub mod functions;
pub mod geometry;
pub mod kernels;
pub mod norms;
pub mod numeric;
pub mod quadrature;
pub mod space;
pub mod sqfun;

pub use error::{Error, Result};
