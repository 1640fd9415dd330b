//! Cut finite element method for the Stokes equations on a background mesh
//! overlapped by a second, independently meshed domain.

pub mod analysis;
pub mod basis;
pub mod case;
pub mod cutgeom;
pub mod error;
pub mod forms;
pub mod geometry;
pub mod mesh;
pub mod problem;
pub mod quadrature;
pub mod space;
pub mod system;

pub use error::{Error, ErrorCategory, Result};
