use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::{parallel, rng};

/// How out-of-range sample coordinates are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Mirror about the edge pixel without repeating it.
    Reflect,
    /// Treat the axis as periodic.
    Wrap,
}

#[inline]
fn resolve(i: i64, n: usize, boundary: Boundary) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    match boundary {
        Boundary::Reflect => {
            let period = 2 * (n - 1);
            let mut m = i % period;
            if m < 0 {
                m += period;
            }
            if m >= n {
                m = period - m;
            }
            m as usize
        }
        Boundary::Wrap => {
            let mut m = i % n;
            if m < 0 {
                m += n;
            }
            m as usize
        }
    }
}

/// Translate image content by `dy` pixels along y (positive moves content
/// toward larger y). Non-integer shifts use linear interpolation; samples that
/// fall outside the frame reflect about the edges.
///
/// Fails if `|dy|` reaches the frame height, at which point no original
/// content would remain.
pub fn translate_y(plane: &ImagePlane, dy: f64) -> Result<ImagePlane> {
    translate_y_with(plane, dy, Boundary::Reflect)
}

/// [`translate_y`] with an explicit boundary rule. Wrap keeps periodic
/// content seamless (used by the phantom generator's layered specimens).
pub fn translate_y_with(plane: &ImagePlane, dy: f64, boundary: Boundary) -> Result<ImagePlane> {
    if !dy.is_finite() {
        return Err(Error::NonFiniteValue(0));
    }
    if dy.abs() >= plane.height() as f64 {
        return Err(Error::ShiftExceedsFrame {
            shift_px: dy,
            limit_px: plane.height() as f64,
        });
    }
    if dy == 0.0 {
        return Ok(plane.clone());
    }
    let (w, h) = (plane.width(), plane.height());
    let mut out = ImagePlane::zeros(w, h);
    parallel::fill_rows(out.as_mut_slice(), w, |y, row| {
        // Content moved by +dy means output row y samples input row y - dy.
        let src = y as f64 - dy;
        let y0 = src.floor();
        let frac = src - y0;
        let ia = resolve(y0 as i64, h, boundary);
        let ib = resolve(y0 as i64 + 1, h, boundary);
        let ra = plane.row(ia);
        let rb = plane.row(ib);
        if frac == 0.0 {
            row.copy_from_slice(ra);
        } else {
            for x in 0..w {
                row[x] = ra[x] + frac * (rb[x] - ra[x]);
            }
        }
    });
    Ok(out)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable Gaussian blur with a kernel truncated at three sigma.
/// `sigma <= 0` is the identity.
pub fn gaussian_blur(plane: &ImagePlane, sigma: f64, boundary: Boundary) -> ImagePlane {
    if sigma <= 0.0 {
        return plane.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let (w, h) = (plane.width(), plane.height());

    // Horizontal pass.
    let mut mid = ImagePlane::zeros(w, h);
    parallel::fill_rows(mid.as_mut_slice(), w, |y, row| {
        let src = plane.row(y);
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, &kv) in kernel.iter().enumerate() {
                let xi = resolve(x as i64 + j as i64 - radius, w, boundary);
                acc += kv * src[xi];
            }
            *out = acc;
        }
    });

    // Vertical pass.
    let mut out = ImagePlane::zeros(w, h);
    parallel::fill_rows(out.as_mut_slice(), w, |y, row| {
        for (j, &kv) in kernel.iter().enumerate() {
            let yi = resolve(y as i64 + j as i64 - radius, h, boundary);
            let src = mid.row(yi);
            for x in 0..w {
                row[x] += kv * src[x];
            }
        }
    });
    out
}

/// Uniform 1-D motion blur along x with a `blur_px`-tap box kernel, computed
/// with per-row prefix sums so cost stays linear even for very long kernels.
/// `blur_px <= 1` is the identity.
pub fn box_blur_x(plane: &ImagePlane, blur_px: u32, boundary: Boundary) -> ImagePlane {
    let len = blur_px as usize;
    if len <= 1 {
        return plane.clone();
    }
    let (w, h) = (plane.width(), plane.height());
    let left = (len - 1) / 2;
    let mut out = ImagePlane::zeros(w, h);
    parallel::fill_rows(out.as_mut_slice(), w, |y, row| {
        let src = plane.row(y);
        // Padded prefix sums: prefix[i] = sum of the first i padded samples.
        let padded = w + len - 1;
        let mut prefix = Vec::with_capacity(padded + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for i in 0..padded {
            let xi = resolve(i as i64 - left as i64, w, boundary);
            acc += src[xi];
            prefix.push(acc);
        }
        let inv = 1.0 / len as f64;
        for x in 0..w {
            row[x] = (prefix[x + len] - prefix[x]) * inv;
        }
    });
    out
}

/// Add zero-mean Gaussian read noise and clamp the result to [0, 1].
/// A non-positive `sigma` only clamps.
///
/// Each row draws from its own counter-seeded stream, so the result does not
/// depend on how rows are scheduled across threads.
pub fn add_noise(plane: &ImagePlane, sigma: f64, seed: u64) -> ImagePlane {
    let mut out = plane.clone();
    let w = out.width();
    if sigma <= 0.0 {
        out.clamp_in_place(0.0, 1.0);
        return out;
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    parallel::fill_rows(out.as_mut_slice(), w, |y, row| {
        let mut stream = rng::stream(seed, y as u64);
        for v in row.iter_mut() {
            *v = (*v + normal.sample(&mut stream)).clamp(0.0, 1.0);
        }
    });
    out
}
