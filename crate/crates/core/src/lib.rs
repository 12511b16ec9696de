//! Linear extrapolation of functionals of periodically correlated sequences
//! observed with missing blocks.

pub mod error;
pub mod extrapolate;
pub mod fixtures;
pub mod linalg;
pub mod minimax;
pub mod oracle;
pub mod par;
pub mod pcmodel;
pub mod spectral;

pub use error::{Error, Result};
pub use par::Execution;
