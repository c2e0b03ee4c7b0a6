//! Simulation and algorithms for color-multiplexed single-shot autofocus
//! in whole-slide imaging.
//!
//! A slide is scanned tile by tile without stopping to refocus: during each
//! stage move the scanner grabs one frame under red and green illumination
//! tilted in opposite directions. Defocus shows up as a signed y
//! displacement between the two channels, so one frame yields the focus
//! correction for the next tile.
//!
//! The crate covers the full loop in simulation:
//!
//! - [`phantom`]: seeded synthetic slides (blood smear, tissue, two-layer).
//! - [`optics`]: defocused, motion-blurred, noisy frame rendering with
//!   spectral channel mixing.
//! - [`crosstalk`]: estimating and inverting that mixing.
//! - [`shift`]: sub-pixel red/green shift by normalized cross-correlation
//!   or mutual information, plus multi-layer peak detection.
//! - [`focus`]: Brenner-gradient focus grading and the shift-to-defocus
//!   calibration line.
//! - [`scan`]: the continuous-motion scan controller, its timing model,
//!   and the differential focus map.
//! - [`bench`]: the method-by-ratio accuracy/speed comparison harness.
//!
//! Everything derived from a seed is bit-reproducible, with or without the
//! `parallel` feature and at any thread count. Measured wall times are the
//! only exception and never feed back into results.

pub mod bench;
pub mod config;
pub mod crosstalk;
mod error;
pub mod focus;
pub mod image;
pub mod optics;
mod parallel;
pub mod phantom;
pub mod rng;
pub mod scan;
pub mod shift;

pub use error::{Error, Result};
