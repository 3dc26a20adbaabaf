//! Strong chain recurrence and constructive Lyapunov functions for flows on
//! compact metric spaces, computed on finite grids.

pub mod error;
pub mod chaingraph;
pub mod flows;
pub mod lyapunov;
pub mod oracle;
mod orbit;
pub mod pairs;
pub mod pipeline;
mod quad;
pub mod space;
pub mod stablesets;

pub use error::{Error, Result};
