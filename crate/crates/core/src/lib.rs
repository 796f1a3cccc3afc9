//! Span-independent prediction learning.
//!
//! Forward-view oracles defined over the whole weight triangle `θ_{t,h}`, the
//! matching constant-cost backward-view learners, and the tooling that checks
//! one against the other.

pub mod error;
mod vector;
pub mod schedule;
pub mod episode;
pub mod returns;
pub mod forward_oracle;
pub mod backward;
pub mod equivalence;
pub mod fixedpoint;
pub mod bench;

pub use error::{Error, Result};
pub use vector::euclidean_distance;
pub use schedule::{Schedule, StepSchedule};
pub use episode::{Episode, Step};
