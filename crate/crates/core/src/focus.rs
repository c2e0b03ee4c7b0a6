//! The focus ground truth: Brenner-gradient sharpness over a z-stack, and
//! the affine calibration between channel shift and defocus.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::optics::ZStack;
use crate::parallel;

/// Brenner gradient: sum of squared intensity differences at a 2-pixel
/// horizontal offset. Larger is sharper.
pub fn brenner(image: &ImagePlane) -> Result<f64> {
    let w = image.width();
    if w < 3 {
        return Err(Error::ImageTooNarrow(w));
    }
    Ok(parallel::sum_rows(image.height(), |y| {
        let row = image.row(y);
        let mut acc = 0.0;
        for x in 0..w - 2 {
            let d = row[x + 2] - row[x];
            acc += d * d;
        }
        acc
    }))
}

/// Per-plane scores of a z sweep plus the refined best-focus position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FocusScoreTrace {
    pub z_positions: Vec<f64>,
    pub scores: Vec<f64>,
    pub best_z: f64,
}

/// Score every plane and locate the sharpest z. The grid argmax (ties broken
/// toward the stack center) is refined by a 3-point parabola on log-scores,
/// clamped to half a step; edge argmaxes are left unrefined.
pub fn best_focus(stack: &ZStack) -> Result<FocusScoreTrace> {
    let scores = {
        let partials = parallel::map_indexed(stack.len(), |k| brenner(&stack.planes[k]));
        let mut out = Vec::with_capacity(stack.len());
        for s in partials {
            out.push(s?);
        }
        out
    };
    if scores.iter().all(|&s| s == 0.0) {
        return Err(Error::AllZeroScores);
    }
    let center = (scores.len() - 1) as f64 / 2.0;
    let mut best = 0usize;
    for (k, &s) in scores.iter().enumerate() {
        let closer = (k as f64 - center).abs() < (best as f64 - center).abs();
        if s > scores[best] || (s == scores[best] && closer) {
            best = k;
        }
    }
    let step = stack.step();
    let mut best_z = stack.z_positions[best];
    if best > 0 && best < scores.len() - 1 {
        let (l, c, r) = (scores[best - 1], scores[best], scores[best + 1]);
        if l > 0.0 && c > 0.0 && r > 0.0 {
            let (ll, lc, lr) = (l.ln(), c.ln(), r.ln());
            let denom = ll - 2.0 * lc + lr;
            if denom < 0.0 {
                let delta = (0.5 * (ll - lr) / denom).clamp(-0.5, 0.5);
                best_z += delta * step;
            }
        }
    }
    Ok(FocusScoreTrace {
        z_positions: stack.z_positions.clone(),
        scores,
        best_z,
    })
}

/// Affine shift-vs-defocus calibration (shift = slope·z + intercept).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    #[serde(rename = "slope_px_per_um")]
    pub slope: f64,
    #[serde(rename = "intercept_px")]
    pub intercept: f64,
    #[serde(rename = "residual_rms_px")]
    pub residual_rms: f64,
}

impl CalibrationCurve {
    pub fn validate(&self) -> Result<()> {
        if self.slope == 0.0 || !self.slope.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "calibration slope must be non-zero and finite, got {}",
                self.slope
            )));
        }
        if self.residual_rms < 0.0 || !self.residual_rms.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "calibration residual must be non-negative, got {}",
                self.residual_rms
            )));
        }
        Ok(())
    }
}

/// Minimum defocus span for a trustworthy fit, in µm.
pub const MIN_CALIBRATION_SPAN: f64 = 2.0;

/// Least-squares affine fit of (defocus µm, shift px) samples. The slope sign
/// is preserved; the intercept absorbs any channel co-registration offset.
pub fn fit_calibration(samples: &[(f64, f64)]) -> Result<CalibrationCurve> {
    if samples.len() < 3 {
        return Err(Error::RankDeficient);
    }
    let (mut z_min, mut z_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(z, _) in samples {
        z_min = z_min.min(z);
        z_max = z_max.max(z);
    }
    let span = z_max - z_min;
    if span < MIN_CALIBRATION_SPAN {
        return Err(Error::DegenerateSpan(span, MIN_CALIBRATION_SPAN));
    }
    let n = samples.len() as f64;
    let mean_z = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let mean_s = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(z, s) in samples {
        num += (z - mean_z) * (s - mean_s);
        den += (z - mean_z) * (z - mean_z);
    }
    if den <= 0.0 {
        return Err(Error::RankDeficient);
    }
    let slope = num / den;
    if slope == 0.0 {
        return Err(Error::RankDeficient);
    }
    let intercept = mean_s - slope * mean_z;
    let sse: f64 = samples
        .iter()
        .map(|&(z, s)| (s - (slope * z + intercept)).powi(2))
        .sum();
    Ok(CalibrationCurve {
        slope,
        intercept,
        residual_rms: (sse / n).sqrt(),
    })
}

/// Invert the calibration: the defocus (µm) implied by a measured shift (px).
pub fn predict_defocus(curve: &CalibrationCurve, shift: f64) -> f64 {
    (shift - curve.intercept) / curve.slope
}
