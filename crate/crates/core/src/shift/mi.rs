use std::time::Instant;

use crate::error::{Error, Result};
use crate::image::{ColorFrame, ImagePlane};
use crate::parallel;
use crate::shift::{default_max_lag, Method, ShiftEstimate, DEFAULT_MI_BINS};

/// Partial-volume weights: intensity v spreads linearly over the two
/// neighbouring bins, so the histogram (and MI) varies smoothly with
/// sub-pixel resampling.
#[inline]
fn pv_weights(v: f64, bins: usize) -> (usize, f64) {
    let t = v.clamp(0.0, 1.0) * (bins - 1) as f64;
    let i0 = (t.floor() as usize).min(bins - 2);
    (i0, t - i0 as f64)
}

/// Stretch a plane's intensities to [0, 1] so the histogram bins cover the
/// observed range. MI becomes invariant to affine intensity changes, which
/// keeps the estimator working on low-contrast (e.g. heavily motion-blurred)
/// frames. A flat plane maps to all zeros.
fn normalized(plane: &ImagePlane) -> ImagePlane {
    let (lo, hi) = plane.min_max();
    let span = hi - lo;
    let values = if span > 0.0 {
        plane.as_slice().iter().map(|&v| (v - lo) / span).collect()
    } else {
        vec![0.0; plane.as_slice().len()]
    };
    ImagePlane::from_values(plane.width(), plane.height(), values).expect("same dimensions")
}

/// Uniform cubic B-spline weights for a sample at fractional offset `t`
/// past row j, covering rows j-1, j, j+1, j+2. Always sums to 1.
#[inline]
fn bspline_weights(t: f64) -> [f64; 4] {
    let u = 1.0 - t;
    [
        u * u * u / 6.0,
        2.0 / 3.0 - t * t + t * t * t / 2.0,
        2.0 / 3.0 - u * u + u * u * u / 2.0,
        t * t * t / 6.0,
    ]
}

/// The same kernel at integer offsets ([1/6, 2/3, 1/6]), applied to the
/// fixed plane once so both marginals carry the same low-pass. Uses the
/// exact expression of the 4-tap path, so a resample at an integer shift
/// reproduces these values bit for bit.
fn smooth_rows(plane: &ImagePlane) -> ImagePlane {
    let (w, h) = (plane.width(), plane.height());
    let weights = bspline_weights(0.0);
    let mut values = vec![0.0; w * h];
    parallel::fill_rows(&mut values, w, |y, row| {
        let above = plane.row(y.saturating_sub(1));
        let here = plane.row(y);
        let below = plane.row((y + 1).min(h - 1));
        for (x, out) in row.iter_mut().enumerate() {
            *out = weights[0] * above[x]
                + weights[1] * here[x]
                + weights[2] * below[x]
                + weights[3] * below[x];
        }
    });
    ImagePlane::from_values(w, h, values).expect("same dimensions")
}

fn mi_from_joint(joint: &[f64], bins: usize) -> f64 {
    let total: f64 = joint.iter().sum();
    if total <= 0.0 {
        return f64::NAN;
    }
    let mut pa = vec![0.0; bins];
    let mut pb = vec![0.0; bins];
    for i in 0..bins {
        for j in 0..bins {
            let p = joint[i * bins + j];
            pa[i] += p;
            pb[j] += p;
        }
    }
    let mut mi = 0.0;
    for i in 0..bins {
        if pa[i] <= 0.0 {
            continue;
        }
        for j in 0..bins {
            let p = joint[i * bins + j];
            if p > 0.0 {
                mi += (p / total) * ((p * total) / (pa[i] * pb[j])).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Accumulate the joint PV histogram over row range `rows`, pairing the
/// (pre-smoothed) fixed plane's row y with `b` resampled at y - shift by a
/// cubic B-spline kernel. An interpolating 2-tap kernel would modulate the
/// sample noise with the fractional offset and carve artificial extrema into
/// the MI surface around integer shifts; the B-spline's smoothing is nearly
/// offset-independent, so the surface tracks content, not resampling.
fn joint_for_shift(
    a_smooth: &ImagePlane,
    b: &ImagePlane,
    shift: f64,
    bins: usize,
    rows: std::ops::Range<usize>,
) -> Vec<f64> {
    let w = a_smooth.width();
    let h = b.height() as i64;
    let mut joint = vec![0.0; bins * bins];
    for y in rows {
        let src = y as f64 - shift;
        let j = src.floor();
        let weights = bspline_weights(src - j);
        let j = j as i64;
        let taps = [
            b.row((j - 1).clamp(0, h - 1) as usize),
            b.row(j.clamp(0, h - 1) as usize),
            b.row((j + 1).clamp(0, h - 1) as usize),
            b.row((j + 2).clamp(0, h - 1) as usize),
        ];
        let ra = a_smooth.row(y);
        for x in 0..w {
            let bv = weights[0] * taps[0][x]
                + weights[1] * taps[1][x]
                + weights[2] * taps[2][x]
                + weights[3] * taps[3][x];
            let (ia, wa) = pv_weights(ra[x], bins);
            let (ib, wb) = pv_weights(bv, bins);
            joint[ia * bins + ib] += (1.0 - wa) * (1.0 - wb);
            joint[ia * bins + ib + 1] += (1.0 - wa) * wb;
            joint[(ia + 1) * bins + ib] += wa * (1.0 - wb);
            joint[(ia + 1) * bins + ib + 1] += wa * wb;
        }
    }
    joint
}

/// Joint PV histogram of two aligned planes over a row range, pairing raw
/// pixels with no resampling.
fn joint_aligned(a: &ImagePlane, b: &ImagePlane, bins: usize, rows: std::ops::Range<usize>) -> Vec<f64> {
    let w = a.width();
    let mut joint = vec![0.0; bins * bins];
    for y in rows {
        let ra = a.row(y);
        let rb = b.row(y);
        for x in 0..w {
            let (ia, wa) = pv_weights(ra[x], bins);
            let (ib, wb) = pv_weights(rb[x], bins);
            joint[ia * bins + ib] += (1.0 - wa) * (1.0 - wb);
            joint[ia * bins + ib + 1] += (1.0 - wa) * wb;
            joint[(ia + 1) * bins + ib] += wa * (1.0 - wb);
            joint[(ia + 1) * bins + ib + 1] += wa * wb;
        }
    }
    joint
}

/// Rows of `a` for which `y - shift` lands inside `b` (no boundary samples).
fn valid_rows(height: usize, shift: f64) -> std::ops::Range<usize> {
    let lo = shift.ceil().max(0.0) as usize;
    let hi = (((height - 1) as f64 + shift).floor().min((height - 1) as f64) as i64).max(-1);
    lo..((hi + 1) as usize).min(height)
}

/// MI between the pre-smoothed fixed plane and plane b resampled at y-offset
/// `shift`, evaluated over the rows where both are defined. Accumulation runs
/// over fixed 32-row chunks merged in order, so results are thread-count
/// independent.
fn mi_at(a_smooth: &ImagePlane, b: &ImagePlane, shift: f64, bins: usize) -> Result<f64> {
    let rows = valid_rows(a_smooth.height(), shift);
    if rows.is_empty() {
        return Err(Error::NonFiniteMi);
    }
    let chunk = 32usize;
    let n_chunks = rows.len().div_ceil(chunk);
    let partials = parallel::map_indexed(n_chunks, |c| {
        let lo = rows.start + c * chunk;
        let hi = (lo + chunk).min(rows.end);
        joint_for_shift(a_smooth, b, shift, bins, lo..hi)
    });
    let mut joint = vec![0.0; bins * bins];
    for part in partials {
        for (acc, v) in joint.iter_mut().zip(part) {
            *acc += v;
        }
    }
    let mi = mi_from_joint(&joint, bins);
    if mi.is_finite() {
        Ok(mi)
    } else {
        Err(Error::NonFiniteMi)
    }
}

/// Mutual information of two aligned planes, in nats, from a partial-volume
/// joint histogram with `bins`² cells. Pixels pair directly (no resampling),
/// so MI(a, a) = H(a) holds exactly. Always >= 0. Accumulation runs over
/// fixed 32-row chunks merged in order, so results are thread-count
/// independent.
pub fn mutual_information(a: &ImagePlane, b: &ImagePlane, bins: usize) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    if bins < 8 {
        return Err(Error::InvalidConfig(format!("bins must be >= 8, got {bins}")));
    }
    let a = normalized(a);
    let b = normalized(b);
    let chunk = 32usize;
    let n_chunks = a.height().div_ceil(chunk);
    let partials = parallel::map_indexed(n_chunks, |c| {
        let lo = c * chunk;
        let hi = (lo + chunk).min(a.height());
        joint_aligned(&a, &b, bins, lo..hi)
    });
    let mut joint = vec![0.0; bins * bins];
    for part in partials {
        for (acc, v) in joint.iter_mut().zip(part) {
            *acc += v;
        }
    }
    let mi = mi_from_joint(&joint, bins);
    if mi.is_finite() {
        Ok(mi)
    } else {
        Err(Error::NonFiniteMi)
    }
}

/// Marginal (Shannon) entropy of one plane under the same normalization and
/// partial-volume binning as [`mutual_information`], in nats.
pub fn entropy(a: &ImagePlane, bins: usize) -> Result<f64> {
    if bins < 8 {
        return Err(Error::InvalidConfig(format!("bins must be >= 8, got {bins}")));
    }
    let a = normalized(a);
    let mut hist = vec![0.0; bins];
    for &v in a.as_slice() {
        let (i, w) = pv_weights(v, bins);
        hist[i] += 1.0 - w;
        hist[i + 1] += w;
    }
    let total: f64 = hist.iter().sum();
    let mut h = 0.0;
    for &c in &hist {
        if c > 0.0 {
            let p = c / total;
            h -= p * p.ln();
        }
    }
    Ok(h)
}

/// Estimate the red-to-green y shift by maximizing MI with up to
/// `iterations` gradient-ascent steps. Without `init`, a coarse integer-lag
/// MI sweep (stride 2) seeds the ascent. Lag window: height/4, 64 bins.
pub fn mi_shift(
    frame: &ColorFrame,
    subsample_ratio: usize,
    iterations: usize,
    init: Option<f64>,
) -> Result<ShiftEstimate> {
    mi_shift_with(
        frame,
        subsample_ratio,
        iterations,
        init,
        default_max_lag(frame.height()),
        DEFAULT_MI_BINS,
    )
    .map(|(est, _)| est)
}

/// [`mi_shift`] with explicit lag window and histogram size; also returns
/// the MI value after initialization and after each accepted step (the
/// ascent trace is non-decreasing by construction).
pub fn mi_shift_with(
    frame: &ColorFrame,
    subsample_ratio: usize,
    iterations: usize,
    init: Option<f64>,
    max_lag: usize,
    bins: usize,
) -> Result<(ShiftEstimate, Vec<f64>)> {
    let start = Instant::now();
    if subsample_ratio < 1 {
        return Err(Error::InvalidConfig("subsample_ratio must be >= 1".into()));
    }
    if iterations < 1 {
        return Err(Error::InvalidConfig("iterations must be >= 1".into()));
    }
    if bins < 8 {
        return Err(Error::InvalidConfig(format!("bins must be >= 8, got {bins}")));
    }
    if max_lag == 0 || max_lag >= frame.height() / 2 {
        return Err(Error::InvalidConfig(format!(
            "max_lag must be in [1, height/2), got {max_lag} for height {}",
            frame.height()
        )));
    }
    let n = subsample_ratio;
    let red = smooth_rows(&normalized(&frame.red.subsample(n)));
    let green = normalized(&frame.green.subsample(n));
    // Everything below works in subsampled pixels.
    let bound = ((max_lag / n) as f64).max(1.0);

    let mut shift = match init {
        Some(px) => {
            let s = px / n as f64;
            if s.abs() > bound {
                return Err(Error::Divergence {
                    shift: px,
                    bound: max_lag as f64,
                });
            }
            s
        }
        None => {
            let mut best: (f64, f64) = (f64::NEG_INFINITY, 0.0);
            let mut lag = -(bound as i64);
            while lag <= bound as i64 {
                let v = mi_at(&red, &green, lag as f64, bins)?;
                let better = v > best.0
                    || (v == best.0 && (lag as f64).abs() < best.1.abs());
                if better {
                    best = (v, lag as f64);
                }
                lag += 2;
            }
            best.1
        }
    };

    let mut score = mi_at(&red, &green, shift, bins)?;
    let mut trace = vec![score];
    const GRAD_STEP: f64 = 0.1;
    const MIN_STEP: f64 = 1.0 / 64.0;
    for _ in 0..iterations {
        let up = mi_at(&red, &green, shift + GRAD_STEP, bins)?;
        let down = mi_at(&red, &green, shift - GRAD_STEP, bins)?;
        let grad = (up - down) / (2.0 * GRAD_STEP);
        if grad == 0.0 {
            break;
        }
        let dir = grad.signum();
        let mut step = 1.0;
        let mut accepted = None;
        while step >= MIN_STEP {
            let cand = shift + dir * step;
            if cand.abs() <= bound {
                let cand_score = mi_at(&red, &green, cand, bins)?;
                if cand_score >= score {
                    accepted = Some((cand, cand_score));
                    break;
                }
            }
            step /= 2.0;
        }
        match accepted {
            Some((s, v)) => {
                shift = s;
                score = v;
                trace.push(v);
            }
            None => break,
        }
    }

    Ok((
        ShiftEstimate {
            shift_y: shift * n as f64,
            score,
            method: Method::MutualInfo,
            subsample_ratio: n,
            elapsed: start.elapsed().as_secs_f64(),
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{render_multiplexed, OpticsConfig};
    use crate::phantom::{generate_phantom, PhantomStyle};
    use crate::crosstalk::CrosstalkCoefficients;
    use crate::rng;
    use rand::Rng;

    fn quiet_cfg() -> OpticsConfig {
        OpticsConfig {
            noise_sigma: 0.0,
            crosstalk: CrosstalkCoefficients::none(),
            ..OpticsConfig::default()
        }
    }

    fn bin_centered_plane(seed: u64, bins: usize) -> ImagePlane {
        let mut stream = rng::stream(seed, 0);
        let mut p = ImagePlane::zeros(64, 64);
        for v in p.as_mut_slice() {
            let k = stream.random_range(0..bins);
            *v = k as f64 / (bins - 1) as f64;
        }
        p
    }

    #[test]
    fn self_information_equals_entropy_on_bin_centered_data() {
        let p = bin_centered_plane(3, 64);
        let mi = mutual_information(&p, &p, 64).unwrap();
        let h = entropy(&p, 64).unwrap();
        assert!((mi - h).abs() < 1e-9, "mi {mi} vs entropy {h}");
    }

    #[test]
    fn constant_partner_has_zero_information() {
        let p = bin_centered_plane(4, 64);
        let c = ImagePlane::filled(64, 64, 0.31);
        let mi = mutual_information(&p, &c, 64).unwrap();
        assert!(mi.abs() < 1e-9, "mi {mi}");
    }

    #[test]
    fn shuffling_destroys_information() {
        let obj = generate_phantom(6, 64, 64, PhantomStyle::Tissue).unwrap();
        let reference = mutual_information(&obj.red, &obj.green, 64).unwrap();
        for s in 0..10u64 {
            let mut vals = obj.green.as_slice().to_vec();
            let mut stream = rng::stream(99, s);
            for i in (1..vals.len()).rev() {
                let j = stream.random_range(0..=i);
                vals.swap(i, j);
            }
            let shuffled = ImagePlane::from_values(64, 64, vals).unwrap();
            let mi = mutual_information(&obj.red, &shuffled, 64).unwrap();
            assert!(mi < reference, "shuffle {s}: {mi} !< {reference}");
        }
    }

    #[test]
    fn bins_below_eight_rejected() {
        let p = bin_centered_plane(1, 8);
        assert!(mutual_information(&p, &p, 7).is_err());
        assert!(entropy(&p, 4).is_err());
    }

    #[test]
    fn zero_defocus_gives_zero_shift() {
        let obj = generate_phantom(4, 128, 128, PhantomStyle::Tissue).unwrap();
        let frame = render_multiplexed(&obj, 0.0, 0, &quiet_cfg()).unwrap();
        let est = mi_shift(&frame, 1, 5, None).unwrap();
        assert!(est.shift_y.abs() <= 0.1, "shift {}", est.shift_y);
    }

    #[test]
    fn ascent_trace_never_decreases() {
        let obj = generate_phantom(11, 128, 128, PhantomStyle::Tissue).unwrap();
        let frame = render_multiplexed(&obj, 1.0, 0, &quiet_cfg()).unwrap();
        let (_, trace) = mi_shift_with(&frame, 1, 5, None, 32, 64).unwrap();
        for pair in trace.windows(2) {
            assert!(pair[1] >= pair[0], "trace decreased: {pair:?}");
        }
    }

    #[test]
    fn out_of_window_init_is_divergence() {
        let obj = generate_phantom(4, 128, 128, PhantomStyle::Tissue).unwrap();
        let frame = render_multiplexed(&obj, 0.0, 0, &quiet_cfg()).unwrap();
        assert!(matches!(
            mi_shift(&frame, 1, 5, Some(40.0)),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn respects_supplied_initialization() {
        let obj = generate_phantom(4, 128, 128, PhantomStyle::Tissue).unwrap();
        let cfg = quiet_cfg();
        let frame = render_multiplexed(&obj, 1.5, 0, &cfg).unwrap();
        let truth = 1.5 * crate::optics::shift_per_micron(&cfg);
        let est = mi_shift(&frame, 1, 5, Some(truth.round())).unwrap();
        assert!(
            (est.shift_y - truth).abs() <= 0.3,
            "estimate {} vs truth {}",
            est.shift_y,
            truth
        );
    }
}
