pub mod error;
pub mod eval;
pub mod io;
pub mod maxent;
pub mod model;
pub mod search;
pub mod stats;
pub mod synth;

pub use error::{ErrorKind, GragraError, Result};
