use std::time::Instant;

use crate::error::{Error, Result};
use crate::image::{ColorFrame, ImagePlane};
use crate::parallel;
use crate::shift::{CorrelationProfile, Method, ShiftEstimate};

fn is_flat(plane: &ImagePlane) -> bool {
    let (lo, hi) = plane.min_max();
    lo == hi
}

/// Normalized cross-correlation for every integer y-lag in [-max_lag, max_lag].
/// Both planes are mean-subtracted globally; each lag is normalized over its
/// own overlap region, so |value| <= 1 throughout.
fn ncc_values(a: &ImagePlane, b: &ImagePlane, max_lag: i64) -> Vec<f64> {
    let (w, h) = (a.width(), a.height() as i64);
    let ma = a.mean();
    let mb = b.mean();
    parallel::map_indexed((2 * max_lag + 1) as usize, |k| {
        let lag = k as i64 - max_lag;
        let y_start = lag.max(0);
        let y_end = h + lag.min(0);
        let mut num = 0.0;
        let mut da = 0.0;
        let mut db = 0.0;
        for y in y_start..y_end {
            let ra = a.row(y as usize);
            let rb = b.row((y - lag) as usize);
            for x in 0..w {
                let u = ra[x] - ma;
                let v = rb[x] - mb;
                num += u * v;
                da += u * u;
                db += v * v;
            }
        }
        if da <= 0.0 || db <= 0.0 {
            0.0
        } else {
            num / (da * db).sqrt()
        }
    })
}

/// Integer argmax with ties resolved toward the smallest |lag| (the
/// in-focus hypothesis), then toward the negative lag for symmetry ties.
fn argmax_lag(values: &[f64], max_lag: i64) -> (i64, usize) {
    let mut best_k = 0usize;
    let mut best_lag = -max_lag;
    let mut best_v = f64::NEG_INFINITY;
    for (k, &v) in values.iter().enumerate() {
        let lag = k as i64 - max_lag;
        let better = v > best_v
            || (v == best_v
                && (lag.abs() < best_lag.abs() || (lag.abs() == best_lag.abs() && lag < best_lag)));
        if better {
            best_k = k;
            best_lag = lag;
            best_v = v;
        }
    }
    (best_lag, best_k)
}

/// 3-point parabolic peak refinement; returns the sub-sample offset in
/// [-0.5, 0.5] and the interpolated apex value.
pub(crate) fn parabolic_refine(left: f64, center: f64, right: f64) -> (f64, f64) {
    let denom = left - 2.0 * center + right;
    if denom >= 0.0 || !denom.is_finite() {
        // No downward curvature: keep the grid peak.
        return (0.0, center);
    }
    let delta = (0.5 * (left - right) / denom).clamp(-0.5, 0.5);
    (delta, center - 0.25 * (left - right) * delta)
}

/// Estimate the red-to-green y shift by normalized cross-correlation.
/// `max_lag` is in original pixels; the returned shift is too, regardless of
/// `subsample_ratio`.
pub fn xcorr_shift(
    frame: &ColorFrame,
    subsample_ratio: usize,
    max_lag: usize,
) -> Result<ShiftEstimate> {
    let start = Instant::now();
    if subsample_ratio < 1 {
        return Err(Error::InvalidConfig("subsample_ratio must be >= 1".into()));
    }
    if max_lag == 0 || max_lag >= frame.height() / 2 {
        return Err(Error::InvalidConfig(format!(
            "max_lag must be in [1, height/2), got {max_lag} for height {}",
            frame.height()
        )));
    }
    let n = subsample_ratio;
    let red = frame.red.subsample(n);
    let green = frame.green.subsample(n);
    if is_flat(&red) || is_flat(&green) {
        return Err(Error::FlatImage);
    }
    let lag_window = ((max_lag / n) as i64).max(1).min(red.height() as i64 - 1);
    let values = ncc_values(&red, &green, lag_window);
    let (best_lag, best_k) = argmax_lag(&values, lag_window);
    if best_lag.abs() == lag_window {
        return Err(Error::PeakAtBoundary(best_lag * n as i64));
    }
    let (delta, apex) = parabolic_refine(values[best_k - 1], values[best_k], values[best_k + 1]);
    Ok(ShiftEstimate {
        shift_y: (best_lag as f64 + delta) * n as f64,
        score: apex,
        method: Method::Xcorr,
        subsample_ratio: n,
        elapsed: start.elapsed().as_secs_f64(),
    })
}

/// Full correlation-vs-lag curve at subsample ratio 1; shows one peak per
/// specimen layer.
pub fn correlation_profile(frame: &ColorFrame, max_lag: usize) -> Result<CorrelationProfile> {
    if max_lag == 0 || max_lag >= frame.height() / 2 {
        return Err(Error::InvalidConfig(format!(
            "max_lag must be in [1, height/2), got {max_lag} for height {}",
            frame.height()
        )));
    }
    if is_flat(&frame.red) || is_flat(&frame.green) {
        return Err(Error::FlatImage);
    }
    let l = max_lag as i64;
    let values = ncc_values(&frame.red, &frame.green, l);
    Ok(CorrelationProfile {
        lags: (-l..=l).collect(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::translate_y;
    use crate::optics::{render_multiplexed, shift_per_micron, OpticsConfig};
    use crate::phantom::{generate_phantom, PhantomStyle};
    use crate::crosstalk::CrosstalkCoefficients;

    fn quiet_cfg() -> OpticsConfig {
        OpticsConfig {
            noise_sigma: 0.0,
            crosstalk: CrosstalkCoefficients::none(),
            ..OpticsConfig::default()
        }
    }

    #[test]
    fn zero_defocus_gives_zero_shift() {
        let obj = generate_phantom(4, 256, 256, PhantomStyle::BloodSmear).unwrap();
        let frame = render_multiplexed(&obj, 0.0, 0, &quiet_cfg()).unwrap();
        let est = xcorr_shift(&frame, 1, 32).unwrap();
        assert!(est.shift_y.abs() <= 0.1, "shift {}", est.shift_y);
        assert!(est.score > 0.5);
    }

    #[test]
    fn recovers_programmed_separation() {
        // Identical channel content isolates the registration error from
        // the channel-contrast mismatch measured separately below.
        let obj = generate_phantom(4, 128, 128, PhantomStyle::Tissue).unwrap();
        let same = crate::image::GroundTruthPair::new(obj.red.clone(), obj.red).unwrap();
        let cfg = quiet_cfg();
        let truth = 2.0 * shift_per_micron(&cfg); // ~7.64 px
        let frame = render_multiplexed(&same, 2.0, 0, &cfg).unwrap();
        let est = xcorr_shift(&frame, 1, 32).unwrap();
        assert!(
            (est.shift_y - truth).abs() <= 0.3,
            "estimate {} vs truth {}",
            est.shift_y,
            truth
        );
    }

    #[test]
    fn channel_contrast_mismatch_stays_inside_the_error_budget() {
        // Tissue phantoms render the green channel through a different
        // response curve; plain correlation picks up a content bias that
        // must stay within the half-pixel benchmark envelope.
        let obj = generate_phantom(4, 256, 256, PhantomStyle::Tissue).unwrap();
        let cfg = quiet_cfg();
        let truth = 2.0 * shift_per_micron(&cfg);
        let frame = render_multiplexed(&obj, 2.0, 0, &cfg).unwrap();
        let est = xcorr_shift(&frame, 1, 32).unwrap();
        assert!(
            (est.shift_y - truth).abs() <= 0.5,
            "estimate {} vs truth {}",
            est.shift_y,
            truth
        );
    }

    #[test]
    fn subsampled_estimate_is_reported_in_original_pixels() {
        let obj = generate_phantom(8, 192, 192, PhantomStyle::Tissue).unwrap();
        let shifted = ColorFrame::new(
            translate_y(&obj.red, 3.0).unwrap(),
            translate_y(&obj.green, -3.0).unwrap(),
        )
        .unwrap();
        let est = xcorr_shift(&shifted, 3, 48).unwrap();
        assert!(
            (est.shift_y - 6.0).abs() <= 1.5,
            "estimate {} vs truth 6",
            est.shift_y
        );
        assert_eq!(est.subsample_ratio, 3);
    }

    #[test]
    fn flat_frame_is_rejected() {
        let flat = ImagePlane::filled(64, 64, 0.4);
        let frame = ColorFrame::new(flat.clone(), flat).unwrap();
        assert!(matches!(xcorr_shift(&frame, 1, 16), Err(Error::FlatImage)));
    }

    #[test]
    fn out_of_window_peak_reports_boundary() {
        let obj = generate_phantom(4, 128, 128, PhantomStyle::Tissue).unwrap();
        let cfg = quiet_cfg();
        let frame = render_multiplexed(&obj, 2.0, 0, &cfg).unwrap(); // ~7.6 px
        assert!(matches!(
            xcorr_shift(&frame, 1, 4),
            Err(Error::PeakAtBoundary(_))
        ));
    }

    #[test]
    fn exact_ties_resolve_to_the_smallest_lag() {
        // Period-4 vertical pattern: correlation is exactly 1.0 at lags
        // 0, +/-4, +/-8; the tie rule must pick 0.
        let pattern = [0.25, 0.75, 0.25, 0.0];
        let mut plane = ImagePlane::zeros(16, 32);
        for y in 0..32 {
            for x in 0..16 {
                plane.set(x, y, pattern[y % 4]);
            }
        }
        let frame = ColorFrame::new(plane.clone(), plane).unwrap();
        let est = xcorr_shift(&frame, 1, 8).unwrap();
        assert_eq!(est.shift_y, 0.0);
    }

    #[test]
    fn profile_covers_the_full_window_and_peaks_at_zero() {
        let obj = generate_phantom(4, 128, 128, PhantomStyle::Tissue).unwrap();
        let frame = render_multiplexed(&obj, 0.0, 0, &quiet_cfg()).unwrap();
        let profile = correlation_profile(&frame, 20).unwrap();
        assert_eq!(profile.lags.len(), 41);
        assert_eq!(profile.lags[0], -20);
        assert_eq!(*profile.lags.last().unwrap(), 20);
        let peak_idx = profile
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(profile.lags[peak_idx], 0);
        assert!(profile.values.iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn parabola_refines_toward_the_larger_neighbour() {
        let (d, apex) = parabolic_refine(0.2, 1.0, 0.6);
        assert!(d > 0.0 && d <= 0.5);
        assert!(apex >= 1.0);
        let (d2, _) = parabolic_refine(0.6, 1.0, 0.2);
        assert!((d + d2).abs() < 1e-12);
    }
}
