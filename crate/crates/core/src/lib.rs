//! Drone visual localization against LoD city models.
//!
//! A query is localized by scoring projected wireframe points of the LoD
//! model against wireframe-probability maps over a coarse-to-fine pose
//! grid, then refining the best hypothesis with Gauss-Newton.

pub mod camera;
pub mod error;
pub mod eval;
pub mod exec;
pub mod geometry;
pub mod io;
pub mod oracle;
pub mod pipeline;
pub mod refine;
pub mod scene;
pub mod visibility;
pub mod volume;

pub use error::{Error, Result};
pub use exec::Execution;
