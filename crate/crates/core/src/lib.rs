//! Maximum-likelihood analysis of human lifetimes above a high threshold age.

pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod hazard;
pub mod inference;
pub mod lifetimes;
pub mod likelihood;
pub mod optim;
pub mod power;
pub mod rng;
pub mod synthetic;
pub mod threshold;

pub use distributions::{Family, LifetimeModel};
pub use error::{Error, ErrorKind, Result};
pub use lifetimes::{Dataset, ExcessSample, LifetimeRecord, SamplingFrame, Scheme};
