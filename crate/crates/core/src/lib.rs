//! Principal component projection and regression through ridge regression
//! oracles, using Chebyshev sign polynomials evaluated with a stable matrix
//! recurrence.

pub mod chebyshev;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod format;
pub mod metrics;
pub mod pcp;
pub mod pcr;
pub mod recurrence;
pub mod ridge;
pub mod signpoly;
pub mod verify;

pub use error::{Error, ErrorClass, Result};
