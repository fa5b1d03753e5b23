//! Per-vertex binary classification on triangle meshes with ring-expanding
//! convolutions.

pub mod arch;
pub mod error;
pub mod expansion;
pub mod features;
pub mod mesh;
pub mod nn;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
