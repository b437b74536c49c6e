//! Built-in systems from the examples, with their sets, feedbacks and
//! expected verdicts.

pub mod models;
pub mod registry;

pub use models::*;
pub use registry::*;
