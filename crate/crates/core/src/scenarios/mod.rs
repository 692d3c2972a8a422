//! Builtin scenario library and the scenario file format.

mod builtin;
pub mod format;

pub use builtin::{builtin, builtin_summary, BUILTIN_NAMES};
pub use format::{load, parse, serialize};
