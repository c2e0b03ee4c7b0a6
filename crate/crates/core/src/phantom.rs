//! Synthetic specimens: bright background, absorbing blobs, band-limited
//! texture, and (for tissue) coarse absorption bands. Content is toroidal
//! (every feature wraps at the frame edges), so circular shifts of a phantom
//! are seam-free; this keeps sharpness metrics translation-invariant in
//! tests.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{translate_y_with, Boundary, GroundTruthPair, ImagePlane};
use crate::{parallel, rng};

const BACKGROUND: f64 = 0.72;
const FLOOR: f64 = 0.02;
/// Intensity ceiling. Keeping clean values at or below 0.75 guarantees that
/// crosstalk mixing with coefficients up to 0.3 stays inside [0, 1], so the
/// render pipeline's final clamp never distorts noiseless frames.
const CEILING: f64 = 0.75;

pub const MIN_PHANTOM_DIM: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomStyle {
    BloodSmear,
    Tissue,
    TwoLayer,
}

impl fmt::Display for PhantomStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PhantomStyle::BloodSmear => "blood_smear",
            PhantomStyle::Tissue => "tissue",
            PhantomStyle::TwoLayer => "two_layer",
        };
        f.write_str(s)
    }
}

impl FromStr for PhantomStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blood_smear" => Ok(PhantomStyle::BloodSmear),
            "tissue" => Ok(PhantomStyle::Tissue),
            "two_layer" => Ok(PhantomStyle::TwoLayer),
            other => Err(Error::InvalidConfig(format!(
                "unknown phantom style '{other}' (expected blood_smear, tissue or two_layer)"
            ))),
        }
    }
}

/// Full phantom control. [`generate_phantom`] covers the common case; tests
/// that need hostile channel statistics or specific layer geometry construct
/// params directly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomParams {
    pub width: usize,
    pub height: usize,
    pub style: PhantomStyle,
    /// Fraction of blobs whose green response is inverted (brighter than
    /// background while red darkens). Near 0.5 the channels decorrelate,
    /// which defeats plain cross-correlation but not mutual information.
    pub contrast_split: f64,
    /// Two-layer styles only: red/green pre-separation of the second layer,
    /// in pixels. A rendered two-layer frame shows correlation peaks at the
    /// defocus lag and at defocus lag + this separation.
    pub layer_sep_px: f64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            style: PhantomStyle::Tissue,
            contrast_split: 0.0,
            layer_sep_px: 8.0,
        }
    }
}

impl PhantomParams {
    pub fn new(style: PhantomStyle, width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            style,
            ..Self::default()
        }
    }
}

struct Preset {
    area_per_blob: f64,
    radius: (f64, f64),
    depth: (f64, f64),
    max_elongation: f64,
    green_gamma: f64,
    /// Depth of coarse absorption bands (see [`texture`]). Sectioned tissue
    /// has architecture far larger than any cell; smears and the layered
    /// debris phantom have none.
    macro_amp: f64,
}

const BLOOD_SMEAR: Preset = Preset {
    area_per_blob: 900.0,
    radius: (4.0, 9.0),
    depth: (0.18, 0.42),
    max_elongation: 1.3,
    green_gamma: 1.25,
    macro_amp: 0.0,
};

const TISSUE: Preset = Preset {
    area_per_blob: 3600.0,
    radius: (8.0, 22.0),
    depth: (0.15, 0.45),
    max_elongation: 2.2,
    green_gamma: 1.35,
    macro_amp: 0.18,
};

// Fine grains, so each layer's correlation peak is much narrower than the
// typical layer separation and the two peaks stay resolvable.
const TWO_LAYER: Preset = Preset {
    area_per_blob: 90.0,
    radius: (1.6, 3.4),
    depth: (0.18, 0.45),
    max_elongation: 1.6,
    green_gamma: 1.35,
    macro_amp: 0.0,
};

/// Generate a clean red/green specimen pair. Deterministic in `seed`; the
/// channels share all structure but differ in per-blob strength and gamma.
pub fn generate_phantom(
    seed: u64,
    width: usize,
    height: usize,
    style: PhantomStyle,
) -> Result<GroundTruthPair> {
    generate(&PhantomParams::new(style, width, height), seed)
}

/// [`generate_phantom`] with explicit [`PhantomParams`].
pub fn generate(params: &PhantomParams, seed: u64) -> Result<GroundTruthPair> {
    if params.width < MIN_PHANTOM_DIM || params.height < MIN_PHANTOM_DIM {
        return Err(Error::DimensionTooSmall {
            width: params.width,
            height: params.height,
            min: MIN_PHANTOM_DIM,
        });
    }
    if !(0.0..=1.0).contains(&params.contrast_split) {
        return Err(Error::InvalidConfig(format!(
            "contrast_split {} outside [0, 1]",
            params.contrast_split
        )));
    }
    match params.style {
        PhantomStyle::BloodSmear => {
            let (r, g) = raw_layer(params, seed, &BLOOD_SMEAR, 1.0);
            finalize(params, r, g, BLOOD_SMEAR.green_gamma)
        }
        PhantomStyle::Tissue => {
            let (r, g) = raw_layer(params, seed, &TISSUE, 1.0);
            finalize(params, r, g, TISSUE.green_gamma)
        }
        PhantomStyle::TwoLayer => two_layer(params, seed),
    }
}

/// Background + texture + blobs, before clamping and gamma.
fn raw_layer(
    params: &PhantomParams,
    seed: u64,
    preset: &Preset,
    density_scale: f64,
) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (params.width, params.height);
    let tex = texture(seed, w, h, preset.macro_amp);
    let mut red = vec![0.0; w * h];
    let mut green = vec![0.0; w * h];
    for i in 0..w * h {
        red[i] = BACKGROUND + tex[i];
        green[i] = BACKGROUND + 0.9 * tex[i];
    }

    let mut blob_rng = rng::stream_label(seed, "phantom.blobs");
    let count = ((w * h) as f64 / preset.area_per_blob * density_scale)
        .round()
        .max(1.0) as usize;
    for _ in 0..count {
        let cx = blob_rng.random::<f64>() * w as f64;
        let cy = blob_rng.random::<f64>() * h as f64;
        let radius = blob_rng.random_range(preset.radius.0..preset.radius.1);
        let depth = blob_rng.random_range(preset.depth.0..preset.depth.1);
        let elong = blob_rng.random_range(1.0..preset.max_elongation);
        let theta = blob_rng.random::<f64>() * PI;
        // One structure's stain density varies a lot, but its red/green
        // response ratio varies far less. Independent weights would leave the
        // channels decorrelated after heavy spatial averaging.
        let red_weight = 0.75 + 0.5 * blob_rng.random::<f64>();
        let green_weight = red_weight * (0.9 + 0.2 * blob_rng.random::<f64>());
        let inverted = blob_rng.random::<f64>() < params.contrast_split;
        splat(
            &mut red,
            &mut green,
            w,
            h,
            Blob {
                cx,
                cy,
                a: radius * elong,
                b: radius,
                theta,
                red_delta: -depth * red_weight,
                green_delta: if inverted {
                    depth * green_weight
                } else {
                    -depth * green_weight
                },
            },
        );
    }
    (red, green)
}

struct Blob {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    theta: f64,
    red_delta: f64,
    green_delta: f64,
}

/// Add one soft elliptical blob with toroidal wrapping. The profile is
/// exp(-rho^4): a flat core with a fast skirt, truncated where it falls
/// below ~3e-5 of the peak.
fn splat(red: &mut [f64], green: &mut [f64], w: usize, h: usize, blob: Blob) {
    let (sin_t, cos_t) = blob.theta.sin_cos();
    let extent = (1.8 * blob.a).ceil() as i64;
    let cx_i = blob.cx.floor() as i64;
    let cy_i = blob.cy.floor() as i64;
    for gy in (cy_i - extent)..=(cy_i + extent) {
        let dy = gy as f64 - blob.cy;
        let iy = gy.rem_euclid(h as i64) as usize;
        for gx in (cx_i - extent)..=(cx_i + extent) {
            let dx = gx as f64 - blob.cx;
            let u = cos_t * dx + sin_t * dy;
            let v = -sin_t * dx + cos_t * dy;
            let rho2 = (u / blob.a).powi(2) + (v / blob.b).powi(2);
            if rho2 > 3.24 {
                continue;
            }
            let fall = (-(rho2 * rho2)).exp();
            let ix = gx.rem_euclid(w as i64) as usize;
            let idx = iy * w + ix;
            red[idx] += blob.red_delta * fall;
            green[idx] += blob.green_delta * fall;
        }
    }
}

/// Periodic value noise: two fine octaves, plus (when `macro_amp > 0`) a
/// coarse band field stretched along x. The bands only absorb (they never
/// brighten past the background) and they survive long x-direction motion
/// blur, which is what keeps shift estimation alive on smeared frames.
/// Wavelengths in pixels.
fn texture(seed: u64, w: usize, h: usize, macro_amp: f64) -> Vec<f64> {
    // (wavelength_x, wavelength_y, amplitude, one-sided)
    let mut octaves = vec![(6.0, 6.0, 0.018, false), (17.0, 17.0, 0.012, false)];
    if macro_amp > 0.0 {
        octaves.push((3000.0, 32.0, macro_amp, true));
    }
    let mut tex = vec![0.0; w * h];
    parallel::fill_rows(&mut tex, w, |y, row| {
        for (k, &(wl_x, wl_y, amp, one_sided)) in octaves.iter().enumerate() {
            let oct_seed = rng::mix(seed, 0x7e5 + k as u64);
            let cells_x = ((w as f64 / wl_x).round() as i64).max(1);
            let cells_y = ((h as f64 / wl_y).round() as i64).max(1);
            let v = y as f64 * cells_y as f64 / h as f64;
            let j0 = v.floor() as i64;
            let fy = fade(v - j0 as f64);
            for (x, out) in row.iter_mut().enumerate() {
                let u = x as f64 * cells_x as f64 / w as f64;
                let i0 = u.floor() as i64;
                let fx = fade(u - i0 as f64);
                let corner = |di: i64, dj: i64| {
                    rng::lattice_unit(
                        oct_seed,
                        (i0 + di).rem_euclid(cells_x),
                        (j0 + dj).rem_euclid(cells_y),
                    )
                };
                let top = lerp(corner(0, 0), corner(1, 0), fx);
                let bottom = lerp(corner(0, 1), corner(1, 1), fx);
                let val = lerp(top, bottom, fy);
                *out += if one_sided {
                    0.5 * amp * (val - 1.0)
                } else {
                    amp * val
                };
            }
        }
    });
    tex
}

#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

fn finalize(
    params: &PhantomParams,
    mut red: Vec<f64>,
    mut green: Vec<f64>,
    gamma: f64,
) -> Result<GroundTruthPair> {
    for v in &mut red {
        *v = v.clamp(FLOOR, CEILING);
    }
    for v in &mut green {
        *v = v.clamp(FLOOR, CEILING).powf(gamma);
    }
    GroundTruthPair::new(
        ImagePlane::from_values(params.width, params.height, red)?,
        ImagePlane::from_values(params.width, params.height, green)?,
    )
}

/// Two independent fine-grained layers; the second is pre-separated between
/// the channels (red half up, green half down) so its content registers at a
/// different lag than the first layer's.
fn two_layer(params: &PhantomParams, seed: u64) -> Result<GroundTruthPair> {
    let (w, h) = (params.width, params.height);
    let preset = &TWO_LAYER;
    let (a_red, a_green) = raw_layer(params, rng::mix_label(seed, "layer.a"), preset, 0.6);
    let (b_red, b_green) = raw_layer(params, rng::mix_label(seed, "layer.b"), preset, 0.6);

    let half = params.layer_sep_px / 2.0;
    let b_red = translate_y_with(&ImagePlane::from_values(w, h, b_red)?, half, Boundary::Wrap)?;
    let b_green = translate_y_with(
        &ImagePlane::from_values(w, h, b_green)?,
        -half,
        Boundary::Wrap,
    )?;

    // Absorptions of both layers act on one shared background.
    let combine = |a: Vec<f64>, b: &ImagePlane| -> Vec<f64> {
        a.iter()
            .zip(b.as_slice())
            .map(|(&x, &y)| x + y - BACKGROUND)
            .collect()
    };
    let red = combine(a_red, &b_red);
    let green = combine(a_green, &b_green);
    finalize(params, red, green, preset.green_gamma)
}
