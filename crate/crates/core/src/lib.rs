//! Numerical laboratory for `p`-ellipticity of complex coefficient tuples,
//! the associated Bellman function and the `L^p` behaviour of the generated semigroups.

pub mod bellman;
pub mod cli;
pub mod cutoff;
pub mod error;
pub mod field;
pub mod hess;
pub mod pell;
pub mod semigroup;
pub mod sparse;

pub use error::{Error, Result};
