//! Distributed multi-robot active information acquisition.
//!
//! Robots localize landmarks with range-only sensors. The team splits the
//! landmarks by Voronoi cell; each robot either plans an informative path
//! for its own landmarks with a sampling-based tree over covariance states,
//! or explores its cell until landmarks fall into it.

pub mod cli_io;
pub mod coordinator;
pub mod error;
pub mod estimation;
pub mod planner;
pub mod workspace;

pub use error::{AiaError, Result};
