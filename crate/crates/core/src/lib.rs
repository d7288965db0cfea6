//! Fixed-N polygon representations for instance segmentation.

pub mod error;
pub mod geometry;

pub use error::{Error, Result};
pub mod contour;
pub mod shapes;
pub mod gradcheck;
pub mod grid;
pub mod losses;
pub mod fitter;
pub mod eval;
pub mod io;
pub mod cli;
