use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shift::xcorr::parabolic_refine;
use crate::shift::CorrelationProfile;

/// One detected correlation peak; `lag` is sub-pixel after parabolic
/// refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub lag: f64,
    pub value: f64,
}

/// Topographic prominence of the local maximum at `i`: height above the
/// higher of the two valley floors separating it from larger terrain.
fn prominence_at(values: &[f64], i: usize) -> f64 {
    let v = values[i];
    let mut left_min = v;
    for k in (0..i).rev() {
        if values[k] > v {
            break;
        }
        left_min = left_min.min(values[k]);
    }
    let mut right_min = v;
    for &value in &values[i + 1..] {
        if value > v {
            break;
        }
        right_min = right_min.min(value);
    }
    v - left_min.max(right_min)
}

/// Find correlation peaks with prominence at least `prominence`, sorted by
/// lag. Each specimen layer shows up as one peak; an empty result is valid.
pub fn detect_layers(profile: &CorrelationProfile, prominence: f64) -> Result<Vec<Peak>> {
    if !(0.0..1.0).contains(&prominence) || prominence == 0.0 {
        return Err(Error::InvalidConfig(format!(
            "prominence must lie in (0, 1), got {prominence}"
        )));
    }
    if profile.lags.len() != profile.values.len() {
        return Err(Error::InvalidConfig(
            "profile lags/values length mismatch".into(),
        ));
    }
    let v = &profile.values;
    let mut peaks = Vec::new();
    for i in 1..v.len().saturating_sub(1) {
        if v[i] > v[i - 1] && v[i] > v[i + 1] && prominence_at(v, i) >= prominence {
            let (delta, apex) = parabolic_refine(v[i - 1], v[i], v[i + 1]);
            peaks.push(Peak {
                lag: profile.lags[i] as f64 + delta,
                value: apex,
            });
        }
    }
    Ok(peaks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile_from(values: Vec<f64>) -> CorrelationProfile {
        let half = (values.len() / 2) as i64;
        CorrelationProfile {
            lags: (-half..=half).collect(),
            values,
        }
    }

    fn two_bumps() -> CorrelationProfile {
        // Gaussian bumps centered at lags -4.7 and +6.3.
        let lags: Vec<i64> = (-15..=15).collect();
        let values = lags
            .iter()
            .map(|&l| {
                let a = (-(l as f64 + 4.7).powi(2) / 4.0).exp();
                let b = 0.8 * (-(l as f64 - 6.3).powi(2) / 4.0).exp();
                a + b
            })
            .collect();
        CorrelationProfile { lags, values }
    }

    #[test]
    fn monotone_profile_has_no_peaks() {
        let p = profile_from((0..21).map(|i| i as f64 * 0.01).collect());
        assert!(detect_layers(&p, 0.05).unwrap().is_empty());
    }

    #[test]
    fn finds_both_bumps_with_subpixel_lags() {
        let peaks = detect_layers(&two_bumps(), 0.2).unwrap();
        assert_eq!(peaks.len(), 2);
        assert!((peaks[0].lag + 4.7).abs() < 0.2, "peak 0 at {}", peaks[0].lag);
        assert!((peaks[1].lag - 6.3).abs() < 0.2, "peak 1 at {}", peaks[1].lag);
        assert!(peaks[0].lag < peaks[1].lag);
    }

    #[test]
    fn threshold_above_everything_returns_empty() {
        let peaks = detect_layers(&two_bumps(), 0.99).unwrap();
        assert!(peaks.is_empty());
    }

    #[test]
    fn small_ripples_are_filtered_by_prominence() {
        let lags: Vec<i64> = (-10..=10).collect();
        let values = lags
            .iter()
            .map(|&l| (-(l as f64).powi(2) / 9.0).exp() + 0.02 * ((l as f64) * 1.3).sin())
            .collect();
        let p = CorrelationProfile { lags, values };
        let peaks = detect_layers(&p, 0.2).unwrap();
        assert_eq!(peaks.len(), 1);
        assert!(peaks[0].lag.abs() < 0.5);
    }

    #[test]
    fn prominence_domain_is_validated() {
        assert!(detect_layers(&two_bumps(), 0.0).is_err());
        assert!(detect_layers(&two_bumps(), 1.0).is_err());
    }
}
