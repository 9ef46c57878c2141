//! Level-set forced mean curvature flow with Neumann boundary conditions: masked grids,
//! an explicit regularized solver, radial large-time analytics and the parabolic channel
//! construction.

pub mod bounds;
pub mod channel;
pub mod error;
pub mod field;
pub mod forcing;
pub mod geometry;
pub mod numeric;
pub mod radial;
pub mod solver;

pub use error::{Error, Result};
