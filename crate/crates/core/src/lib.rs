pub mod cli;
pub mod currents;
pub mod dd;
pub mod error;
pub mod gs;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod spectral;
pub mod stats;
pub mod tangles;
pub mod union_find;
pub mod verifiers;

pub use error::{Error, Result};
