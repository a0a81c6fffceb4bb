//! Deterministic and probabilistic rounding-error bounds, checked against a
//! bit-exact emulator of low-precision binary arithmetic.

pub mod bounds;
pub mod bvp;
pub mod error;
pub mod io;
pub mod kernels;
pub mod precision;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use precision::{FloatFormat, Op, Underflow};
pub use rng::Stream;
