pub mod bayesopt;
pub mod config;
pub mod error;
pub mod filter;
pub mod gp;
pub mod harness;
pub mod metrics;
pub mod otsu;
pub mod pipeline;
pub mod pnm;
pub mod raster;
pub mod synth;

pub use error::{Error, Result};
