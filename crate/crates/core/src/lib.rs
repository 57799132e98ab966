//! Pooled minimum eigenvalue estimation of long-run relations in panels.

pub mod cli;
pub mod eigen;
pub mod error;
pub mod io;
pub mod longrun;
pub mod moments;
pub mod panel;
pub mod rank;
pub mod sim;

pub use error::{PmeError, Result};
