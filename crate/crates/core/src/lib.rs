pub mod bnb;
pub mod cutloop;
pub mod cuts;
pub mod error;
pub mod experiment;
pub mod formulations;
pub mod instances;
pub mod lp;
pub mod lp_format;
pub mod model;

pub use error::{Error, Result};
