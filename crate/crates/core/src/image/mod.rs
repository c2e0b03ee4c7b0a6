//! Image containers and the raster operations the simulator is built from.

pub mod io;
mod ops;
mod plane;

pub use ops::{add_noise, box_blur_x, gaussian_blur, translate_y, translate_y_with, Boundary};
pub use plane::{correlation, ColorFrame, GroundTruthPair, ImagePlane};
