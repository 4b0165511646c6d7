//! Numerical workbench for thin subsets of the primes.
//!
//! A thin function `h` of exponent `c in [1, 2)` selects the primes of the
//! form `floor(h(n))`. The crate sieves such sets, evaluates the weighted
//! exponential sums over them, compares discrete maximal averages and
//! ergodic averages along them, and counts ternary Goldbach
//! representations with summands drawn from three such sets.

pub mod averages;
pub mod dd;
pub mod ergodic;
pub mod error;
pub mod expsum;
pub mod goldbach;
pub mod numeric;
pub mod poly;
pub mod sieve;
pub mod thinfn;

pub use error::{Error, Result};
