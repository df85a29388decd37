//! File formats, the streaming classification pipeline and the experiment
//! harness built on `protoclass-core`.

pub mod capture;
pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod report;
pub mod training;

pub use error::{Error, Result};
