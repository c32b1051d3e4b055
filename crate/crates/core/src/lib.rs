//! LULU smoothers and the Discrete Pulse Transform for integer fields on
//! finite windows of Z^d.

pub mod dpt;
mod engine;
pub mod error;
pub mod field;
pub mod lattice;
pub mod lulu;
pub mod verify;

pub use error::{Error, Result};
pub use field::{Polarity, ScalarField, Witness};
pub use lattice::{Boundary, CellSet, Connectivity, Lattice};
