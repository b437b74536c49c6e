//! Shared domain types: smooth maps, control-affine and passive systems,
//! closed sets with point-to-set geometry, and verdicts.

mod sets;
mod system;
mod verdict;

pub use sets::*;
pub use system::*;
pub use verdict::*;
