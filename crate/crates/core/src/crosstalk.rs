//! Spectral crosstalk: forward mixing of clean channels into a captured
//! frame, coefficient estimation from paired captures, and the inverse
//! correction.
//!
//! Model: I_R = O_R + w_gr·O_G and I_G = w_rg·O_R + O_G, where w_gr is the
//! green-into-red leak and w_rg the red-into-green leak.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ColorFrame, GroundTruthPair, ImagePlane};
use crate::parallel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkCoefficients {
    pub w_gr: f64,
    pub w_rg: f64,
}

impl CrosstalkCoefficients {
    pub fn new(w_gr: f64, w_rg: f64) -> Result<Self> {
        let c = Self { w_gr, w_rg };
        c.validate()?;
        Ok(c)
    }

    /// No leakage in either direction.
    pub fn none() -> Self {
        Self { w_gr: 0.0, w_rg: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("w_gr", self.w_gr), ("w_rg", self.w_rg)] {
            if !(0.0..1.0).contains(&v) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "crosstalk coefficient {name} must lie in [0, 1), got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Forward mixing. Output is not clamped: coefficients near 1 on bright
/// content can push intensities above 1, and the caller decides whether
/// that matters (the renderer clamps only after adding noise).
pub fn mix(truth: &GroundTruthPair, coeffs: CrosstalkCoefficients) -> Result<ColorFrame> {
    coeffs.validate()?;
    let (w, h) = (truth.width(), truth.height());
    let n = w * h;
    let mut red = vec![0.0; n];
    let mut green = vec![0.0; n];
    let (o_r, o_g) = (truth.red.as_slice(), truth.green.as_slice());
    for i in 0..n {
        red[i] = o_r[i] + coeffs.w_gr * o_g[i];
        green[i] = coeffs.w_rg * o_r[i] + o_g[i];
    }
    ColorFrame::new(
        ImagePlane::from_values(w, h, red)?,
        ImagePlane::from_values(w, h, green)?,
    )
}

/// Estimate the coefficients from a multiplexed capture paired with clean
/// single-LED captures of the same (aligned, in-focus) field. Each
/// coefficient is the mean of the per-pixel leak ratio, taken only over
/// pixels whose denominator is at least `denom_floor`.
pub fn estimate_coefficients(
    multiplexed: &ColorFrame,
    truth: &GroundTruthPair,
    denom_floor: f64,
) -> Result<CrosstalkCoefficients> {
    if denom_floor <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "denom_floor must be positive, got {denom_floor}"
        )));
    }
    if multiplexed.width() != truth.width() || multiplexed.height() != truth.height() {
        return Err(Error::DimensionMismatch(
            multiplexed.width(),
            multiplexed.height(),
            truth.width(),
            truth.height(),
        ));
    }
    let w = truth.width();
    let h = truth.height();

    // Per-row partial sums merged in row order keep the mean deterministic
    // under parallel evaluation.
    let partials = parallel::map_indexed(h, |y| {
        let i_r = multiplexed.red.row(y);
        let i_g = multiplexed.green.row(y);
        let o_r = truth.red.row(y);
        let o_g = truth.green.row(y);
        let mut acc = (0.0f64, 0usize, 0.0f64, 0usize);
        for x in 0..w {
            if o_g[x] >= denom_floor {
                acc.0 += (i_r[x] - o_r[x]) / o_g[x];
                acc.1 += 1;
            }
            if o_r[x] >= denom_floor {
                acc.2 += (i_g[x] - o_g[x]) / o_r[x];
                acc.3 += 1;
            }
        }
        acc
    });
    let mut sum_gr = 0.0;
    let mut n_gr = 0usize;
    let mut sum_rg = 0.0;
    let mut n_rg = 0usize;
    for (a, b, c, d) in partials {
        sum_gr += a;
        n_gr += b;
        sum_rg += c;
        n_rg += d;
    }
    if n_gr == 0 || n_rg == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(CrosstalkCoefficients {
        w_gr: sum_gr / n_gr as f64,
        w_rg: sum_rg / n_rg as f64,
    })
}

/// Invert the mixing:
///   O_R = (I_R − w_gr·I_G) / (1 − w_gr·w_rg)
///   O_G = (w_rg·I_R − I_G) / (w_gr·w_rg − 1)
/// The output is intentionally not clamped; negative or >1 values are real
/// information about noise and should survive until display.
pub fn correct(multiplexed: &ColorFrame, coeffs: CrosstalkCoefficients) -> Result<ColorFrame> {
    let det = 1.0 - coeffs.w_gr * coeffs.w_rg;
    if det.abs() < 1e-6 {
        return Err(Error::SingularMixing(det.abs()));
    }
    let (w, h) = (multiplexed.width(), multiplexed.height());
    let n = w * h;
    let mut red = vec![0.0; n];
    let mut green = vec![0.0; n];
    let (i_r, i_g) = (multiplexed.red.as_slice(), multiplexed.green.as_slice());
    for i in 0..n {
        red[i] = (i_r[i] - coeffs.w_gr * i_g[i]) / det;
        green[i] = (coeffs.w_rg * i_r[i] - i_g[i]) / (coeffs.w_gr * coeffs.w_rg - 1.0);
    }
    ColorFrame::new(
        ImagePlane::from_values(w, h, red)?,
        ImagePlane::from_values(w, h, green)?,
    )
}
