//! The synthetic microscope. Renders brightfield frames, z-stacks, and
//! color-multiplexed frames in which defocus appears as an equal-and-opposite
//! y translation of the red and green channels.

use serde::{Deserialize, Serialize};

use crate::crosstalk::{self, CrosstalkCoefficients};
use crate::error::{Error, Result};
use crate::image::{
    add_noise, box_blur_x, gaussian_blur, translate_y, Boundary, ColorFrame, GroundTruthPair,
    ImagePlane,
};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpticsConfig {
    pub illumination_na: f64,
    pub objective_na: f64,
    pub magnification: f64,
    /// Camera pixel size in µm.
    pub camera_pixel: f64,
    /// Defocus blur sigma in pixels per µm of defocus.
    pub defocus_blur_coeff: f64,
    pub noise_sigma: f64,
    pub crosstalk: CrosstalkCoefficients,
    pub rng_seed: u64,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        Self {
            illumination_na: 0.4,
            objective_na: 0.75,
            magnification: 10.5,
            camera_pixel: 2.4,
            defocus_blur_coeff: 0.8,
            noise_sigma: 0.003,
            crosstalk: CrosstalkCoefficients::new(0.12, 0.08).expect("valid defaults"),
            rng_seed: 0,
        }
    }
}

impl OpticsConfig {
    /// Check the physical-plausibility invariants. `illumination_na` may be
    /// zero (on-axis illumination, no channel shift).
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..1.0).contains(&self.illumination_na)
            || self.illumination_na >= self.objective_na
            || self.objective_na >= 1.0
        {
            return bad(format!(
                "need 0 <= illumination_na < objective_na < 1, got {} and {}",
                self.illumination_na, self.objective_na
            ));
        }
        if self.magnification <= 0.0 || !self.magnification.is_finite() {
            return bad(format!("magnification must be positive, got {}", self.magnification));
        }
        if self.camera_pixel <= 0.0 || !self.camera_pixel.is_finite() {
            return bad(format!("camera_pixel must be positive, got {}", self.camera_pixel));
        }
        if self.defocus_blur_coeff < 0.0 || !self.defocus_blur_coeff.is_finite() {
            return bad(format!(
                "defocus_blur_coeff must be non-negative, got {}",
                self.defocus_blur_coeff
            ));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return bad(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        self.crosstalk.validate()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            rng_seed: seed,
            ..self.clone()
        }
    }
}

/// Red-to-green channel separation per µm of defocus: the two illumination
/// beams arrive at ±asin(illumination_na), so a defocus z displaces the
/// channels by 2·tan(asin(NA))·z in the sample, scaled to camera pixels.
pub fn shift_per_micron(cfg: &OpticsConfig) -> f64 {
    2.0 * cfg.illumination_na.asin().tan() * cfg.magnification / cfg.camera_pixel
}

fn frame_seed(cfg: &OpticsConfig, label: &str, defocus: f64, blur_px: u32) -> u64 {
    let s = rng::mix_label(cfg.rng_seed, label);
    rng::mix(rng::mix(s, defocus.to_bits()), u64::from(blur_px))
}

/// Render one color-multiplexed capture. The pipeline order is fixed:
/// (a) translate red by +s/2 and green by −s/2 along y, where
///     s = defocus · [`shift_per_micron`], with subpixel interpolation;
/// (b) Gaussian defocus blur of σ = defocus_blur_coeff · |defocus|;
/// (c) 1-D box motion blur of `blur_px` along x;
/// (d) crosstalk mixing;
/// (e) additive Gaussian noise, clamped to [0, 1].
pub fn render_multiplexed(
    obj: &GroundTruthPair,
    defocus: f64,
    blur_px: u32,
    cfg: &OpticsConfig,
) -> Result<ColorFrame> {
    cfg.validate()?;
    let s = defocus * shift_per_micron(cfg);
    let limit = obj.width().min(obj.height()) as f64 / 4.0;
    if s.abs() >= limit {
        return Err(Error::ShiftExceedsFrame {
            shift_px: s,
            limit_px: limit,
        });
    }
    let red = translate_y(&obj.red, s / 2.0)?;
    let green = translate_y(&obj.green, -s / 2.0)?;

    let sigma = cfg.defocus_blur_coeff * defocus.abs();
    let red = gaussian_blur(&red, sigma, Boundary::Reflect);
    let green = gaussian_blur(&green, sigma, Boundary::Reflect);

    let red = box_blur_x(&red, blur_px, Boundary::Reflect);
    let green = box_blur_x(&green, blur_px, Boundary::Reflect);

    let mixed = crosstalk::mix(&GroundTruthPair::new(red, green)?, cfg.crosstalk)?;
    let seed = frame_seed(cfg, "render.multiplexed", defocus, blur_px);
    ColorFrame::new(
        add_noise(&mixed.red, cfg.noise_sigma, rng::mix(seed, 0)),
        add_noise(&mixed.green, cfg.noise_sigma, rng::mix(seed, 1)),
    )
}

/// Render an all-LED brightfield capture: the incoherent average of the two
/// channels, defocus-blurred, with noise. No channel shift appears because
/// the symmetric illumination cancels it.
pub fn render_brightfield(obj: &GroundTruthPair, defocus: f64, cfg: &OpticsConfig) -> Result<ImagePlane> {
    cfg.validate()?;
    let (w, h) = (obj.width(), obj.height());
    let values = obj
        .red
        .as_slice()
        .iter()
        .zip(obj.green.as_slice())
        .map(|(&r, &g)| 0.5 * (r + g))
        .collect();
    let sum = ImagePlane::from_values(w, h, values)?;
    let blurred = gaussian_blur(&sum, cfg.defocus_blur_coeff * defocus.abs(), Boundary::Reflect);
    let seed = frame_seed(cfg, "render.brightfield", defocus, 0);
    Ok(add_noise(&blurred, cfg.noise_sigma, seed))
}

/// An ordered stack of brightfield planes at uniformly spaced z positions.
#[derive(Debug, Clone)]
pub struct ZStack {
    pub planes: Vec<ImagePlane>,
    pub z_positions: Vec<f64>,
}

impl ZStack {
    pub fn new(planes: Vec<ImagePlane>, z_positions: Vec<f64>) -> Result<Self> {
        if planes.len() != z_positions.len() || planes.len() < 3 {
            return Err(Error::InvalidConfig(format!(
                "z-stack needs >= 3 planes with matching positions, got {} planes and {} positions",
                planes.len(),
                z_positions.len()
            )));
        }
        let step = z_positions[1] - z_positions[0];
        if step <= 0.0 {
            return Err(Error::InvalidConfig(
                "z positions must be strictly increasing".into(),
            ));
        }
        for w in z_positions.windows(2) {
            if (w[1] - w[0] - step).abs() > 1e-9 * step.abs().max(1.0) {
                return Err(Error::InvalidConfig(
                    "z positions must be uniformly spaced".into(),
                ));
            }
        }
        Ok(Self { planes, z_positions })
    }

    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.z_positions[1] - self.z_positions[0]
    }
}

/// Render a z-stack of brightfield planes for a specimen whose in-focus
/// plane sits at z = 0. `steps` must be odd so the center z is on the grid.
pub fn render_zstack(
    obj: &GroundTruthPair,
    center: f64,
    half_range: f64,
    steps: usize,
    cfg: &OpticsConfig,
) -> Result<ZStack> {
    render_zstack_at(obj, 0.0, center, half_range, steps, cfg)
}

/// [`render_zstack`] for a specimen in focus at `true_focus` rather than 0;
/// plane k is rendered with defocus z_k − true_focus.
pub fn render_zstack_at(
    obj: &GroundTruthPair,
    true_focus: f64,
    center: f64,
    half_range: f64,
    steps: usize,
    cfg: &OpticsConfig,
) -> Result<ZStack> {
    if steps < 3 || steps % 2 == 0 {
        return Err(Error::EvenSteps(steps));
    }
    if half_range < 0.0 || !half_range.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "half_range must be non-negative, got {half_range}"
        )));
    }
    let step = 2.0 * half_range / (steps - 1) as f64;
    let mut planes = Vec::with_capacity(steps);
    let mut z_positions = Vec::with_capacity(steps);
    for k in 0..steps {
        let z = center - half_range + k as f64 * step;
        planes.push(render_brightfield(obj, z - true_focus, cfg)?);
        z_positions.push(z);
    }
    if half_range == 0.0 {
        // Degenerate sweep: all planes at the same z. Bypass the
        // strictly-increasing check; callers get the planes as rendered.
        return Ok(ZStack { planes, z_positions });
    }
    ZStack::new(planes, z_positions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_phantom, PhantomStyle};
    use approx::assert_abs_diff_eq;

    fn quiet(cfg: &OpticsConfig) -> OpticsConfig {
        OpticsConfig {
            noise_sigma: 0.0,
            crosstalk: CrosstalkCoefficients::none(),
            ..cfg.clone()
        }
    }

    #[test]
    fn slope_matches_independent_arithmetic() {
        let cfg = OpticsConfig::default();
        // 2 · (NA / sqrt(1 − NA²)) · M / pixel, written without asin/tan.
        let expected = 2.0 * (0.4 / (1.0 - 0.16f64).sqrt()) * 10.5 / 2.4;
        assert_abs_diff_eq!(shift_per_micron(&cfg), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(shift_per_micron(&cfg), 3.8188, epsilon = 5e-4);
    }

    #[test]
    fn slope_zero_na_and_linear_in_magnification() {
        let mut cfg = OpticsConfig::default();
        cfg.illumination_na = 0.0;
        assert_eq!(shift_per_micron(&cfg), 0.0);
        let mut doubled = OpticsConfig::default();
        doubled.magnification *= 2.0;
        assert_abs_diff_eq!(
            shift_per_micron(&doubled),
            2.0 * shift_per_micron(&OpticsConfig::default()),
            epsilon = 1e-12
        );
    }

    #[test]
    fn config_validation_rejects_bad_geometry() {
        let mut cfg = OpticsConfig::default();
        cfg.illumination_na = 0.8; // above objective NA
        assert!(cfg.validate().is_err());
        cfg = OpticsConfig::default();
        cfg.camera_pixel = 0.0;
        assert!(cfg.validate().is_err());
        cfg = OpticsConfig::default();
        cfg.noise_sigma = -0.1;
        assert!(cfg.validate().is_err());
        assert!(OpticsConfig::default().validate().is_ok());
    }

    #[test]
    fn identity_render_returns_the_object() {
        let obj = generate_phantom(3, 64, 64, PhantomStyle::Tissue).unwrap();
        let cfg = quiet(&OpticsConfig::default());
        let frame = render_multiplexed(&obj, 0.0, 0, &cfg).unwrap();
        for (a, b) in [(&frame.red, &obj.red), (&frame.green, &obj.green)] {
            for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn oversized_shift_is_rejected() {
        let obj = generate_phantom(3, 64, 64, PhantomStyle::Tissue).unwrap();
        let cfg = OpticsConfig::default();
        // 64/4 = 16 px limit; 5 µm · 3.82 px/µm ≈ 19 px.
        assert!(matches!(
            render_multiplexed(&obj, 5.0, 0, &cfg),
            Err(Error::ShiftExceedsFrame { .. })
        ));
    }

    #[test]
    fn renders_are_deterministic() {
        let obj = generate_phantom(9, 64, 64, PhantomStyle::BloodSmear).unwrap();
        let cfg = OpticsConfig::default();
        let a = render_multiplexed(&obj, 1.5, 30, &cfg).unwrap();
        let b = render_multiplexed(&obj, 1.5, 30, &cfg).unwrap();
        assert_eq!(a.red, b.red);
        assert_eq!(a.green, b.green);
        let c = render_multiplexed(&obj, 1.5, 30, &cfg.with_seed(1)).unwrap();
        assert_ne!(a.red, c.red);
    }

    #[test]
    fn brightfield_keeps_channel_average_mean_at_focus() {
        let obj = generate_phantom(5, 64, 64, PhantomStyle::Tissue).unwrap();
        let cfg = quiet(&OpticsConfig::default());
        let bf = render_brightfield(&obj, 0.0, &cfg).unwrap();
        let want = 0.5 * (obj.red.mean() + obj.green.mean());
        assert_abs_diff_eq!(bf.mean(), want, epsilon = 1e-9);
    }

    #[test]
    fn zstack_grid_is_symmetric_and_evenly_stepped() {
        let obj = generate_phantom(5, 64, 64, PhantomStyle::Tissue).unwrap();
        let cfg = quiet(&OpticsConfig::default());
        let stack = render_zstack(&obj, 0.0, 5.0, 11, &cfg).unwrap();
        assert_eq!(stack.len(), 11);
        assert_abs_diff_eq!(stack.z_positions[0], -5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(stack.z_positions[10], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(stack.step(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zstack_rejects_even_or_tiny_step_counts() {
        let obj = generate_phantom(5, 64, 64, PhantomStyle::Tissue).unwrap();
        let cfg = OpticsConfig::default();
        assert!(matches!(
            render_zstack(&obj, 0.0, 5.0, 10, &cfg),
            Err(Error::EvenSteps(10))
        ));
        assert!(matches!(
            render_zstack(&obj, 0.0, 5.0, 1, &cfg),
            Err(Error::EvenSteps(1))
        ));
    }

    #[test]
    fn degenerate_range_gives_identical_planes() {
        let obj = generate_phantom(5, 64, 64, PhantomStyle::Tissue).unwrap();
        let cfg = quiet(&OpticsConfig::default());
        let stack = render_zstack(&obj, 2.0, 0.0, 3, &cfg).unwrap();
        assert_eq!(stack.planes[0], stack.planes[1]);
        assert_eq!(stack.planes[1], stack.planes[2]);
    }
}
