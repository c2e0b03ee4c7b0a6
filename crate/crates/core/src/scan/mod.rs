//! Continuous-motion scan controller.
//!
//! The scanner never refocuses from scratch: while the stage moves to the
//! next tile it captures one color-multiplexed frame, estimates the
//! red/green shift, converts it to a defocus correction through the
//! calibration curve, and lands at the corrected height. The first tile
//! starts with a deliberate focus error and every later tile inherits
//! whatever the previous measurement achieved.

mod profile;
mod report;

pub use profile::FocusProfile;
pub use report::{
    export_focus_map, format_summary, summarize, tile_csv, write_tile_csv, FocusMap, GroupBy,
    ScanReport, SummaryRow, TileFlag, TileRecord, DOF_UM,
};

use serde::{Deserialize, Serialize};

use crate::crosstalk;
use crate::error::{Error, Result};
use crate::focus::{predict_defocus, CalibrationCurve};
use crate::image::{GroundTruthPair, ImagePlane};
use crate::optics::{render_brightfield, render_multiplexed, OpticsConfig};
use crate::phantom::{self, PhantomParams, PhantomStyle, MIN_PHANTOM_DIM};
use crate::rng;
use crate::shift::{estimate_shift, Method};

/// What to scan and how to track focus while doing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanPlan {
    pub rows: usize,
    pub cols: usize,
    /// Stage travel between tile centers, µm.
    pub tile_pitch_um: f64,
    pub focus_profile: FocusProfile,
    pub method: Method,
    pub subsample_ratio: usize,
    /// Motion blur length in px for the frames captured during transit.
    pub blur_px: u32,
    /// Focus error of the very first tile, µm.
    pub start_z_error_um: f64,
    pub tile_width: usize,
    pub tile_height: usize,
    pub style: PhantomStyle,
}

impl Default for ScanPlan {
    fn default() -> Self {
        Self {
            rows: 10,
            cols: 10,
            tile_pitch_um: 500.0,
            focus_profile: FocusProfile::default(),
            method: Method::MutualInfo,
            subsample_ratio: 3,
            blur_px: 0,
            start_z_error_um: 1.0,
            tile_width: 256,
            tile_height: 256,
            style: PhantomStyle::Tissue,
        }
    }
}

impl ScanPlan {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidConfig("scan grid must be at least 1x1".into()));
        }
        if !(self.tile_pitch_um > 0.0) || !self.tile_pitch_um.is_finite() {
            return Err(Error::InvalidConfig("tile pitch must be positive".into()));
        }
        if self.subsample_ratio == 0 {
            return Err(Error::InvalidConfig("subsample ratio must be at least 1".into()));
        }
        if self.tile_width < MIN_PHANTOM_DIM || self.tile_height < MIN_PHANTOM_DIM {
            return Err(Error::InvalidConfig(format!(
                "tiles must be at least {MIN_PHANTOM_DIM} px on each side"
            )));
        }
        if !(self.focus_profile.wavelength_tiles > 0.0) {
            return Err(Error::InvalidConfig("undulation wavelength must be positive".into()));
        }
        Ok(())
    }
}

/// Per-step costs of the simulated hardware, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingModel {
    pub t_image_s: f64,
    pub t_stage_s: f64,
    pub t_process_xcorr_s: f64,
    pub t_process_mi_s: f64,
    /// When true, stage motion happens while the transit frame is captured
    /// and processed, so a transition costs max(stage, capture + process).
    pub overlap_stage_with_capture: bool,
}

impl Default for TimingModel {
    fn default() -> Self {
        Self {
            t_image_s: 0.04,
            t_stage_s: 0.2,
            t_process_xcorr_s: 0.044,
            t_process_mi_s: 0.065,
            overlap_stage_with_capture: true,
        }
    }
}

impl TimingModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t_image_s", self.t_image_s),
            ("t_stage_s", self.t_stage_s),
            ("t_process_xcorr_s", self.t_process_xcorr_s),
            ("t_process_mi_s", self.t_process_mi_s),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn t_process(&self, method: Method) -> f64 {
        match method {
            Method::Xcorr => self.t_process_xcorr_s,
            Method::MutualInfo => self.t_process_mi_s,
        }
    }

    /// Scheduled cost of one tile: the in-focus capture, plus the tracking
    /// transition when another tile follows.
    pub fn tile_segment(&self, method: Method, has_next: bool) -> f64 {
        let mut t = self.t_image_s;
        if has_next {
            t += if self.overlap_stage_with_capture {
                self.t_stage_s.max(self.t_image_s + self.t_process(method))
            } else {
                self.t_image_s + self.t_stage_s + self.t_process(method)
            };
        }
        t
    }

    /// Full-cycle time per tile, the number throughput comparisons quote.
    pub fn cycle(&self, method: Method) -> f64 {
        self.tile_segment(method, true)
    }
}

/// Tiles visited row by row, alternating direction, so consecutive tiles
/// are always grid neighbours.
pub fn scan_order(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut order = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        if r % 2 == 0 {
            for c in 0..cols {
                order.push((r, c));
            }
        } else {
            for c in (0..cols).rev() {
                order.push((r, c));
            }
        }
    }
    order
}

fn tile_phantom(plan: &ScanPlan, seed: u64, index: usize) -> Result<GroundTruthPair> {
    let params = PhantomParams {
        width: plan.tile_width,
        height: plan.tile_height,
        style: plan.style,
        ..PhantomParams::default()
    };
    phantom::generate(&params, rng::mix_label(rng::mix(seed, index as u64), "scan.tile"))
}

/// Capture a transit frame of `obj` at the given defocus, undo crosstalk,
/// and estimate the red/green shift.
fn measure(
    obj: &GroundTruthPair,
    defocus: f64,
    plan: &ScanPlan,
    cfg: &OpticsConfig,
    frame_seed: u64,
) -> Result<crate::shift::ShiftEstimate> {
    let frame = render_multiplexed(obj, defocus, plan.blur_px, &cfg.with_seed(frame_seed))?;
    let corrected = crosstalk::correct(&frame, cfg.crosstalk)?;
    estimate_shift(&corrected, plan.method, plan.subsample_ratio)
}

/// Run a full serpentine scan, tracking focus from tile to tile.
///
/// All height bookkeeping happens relative to the profile's `base_um`, so
/// the residual errors (and every rendered frame) are bit-identical when
/// the whole slide is shifted up or down.
pub fn run_scan(
    plan: &ScanPlan,
    cfg: &OpticsConfig,
    curve: &CalibrationCurve,
    timing: &TimingModel,
    seed: u64,
) -> Result<ScanReport> {
    run_scan_with_sink(plan, cfg, curve, timing, seed, None)
}

/// Like [`run_scan`], additionally handing each tile's in-focus brightfield
/// image (as captured at the applied height) to `sink`.
pub fn run_scan_with_sink(
    plan: &ScanPlan,
    cfg: &OpticsConfig,
    curve: &CalibrationCurve,
    timing: &TimingModel,
    seed: u64,
    mut sink: Option<&mut dyn FnMut(&TileRecord, &ImagePlane) -> Result<()>>,
) -> Result<ScanReport> {
    plan.validate()?;
    cfg.validate()?;
    curve.validate()?;
    timing.validate()?;

    let order = scan_order(plan.rows, plan.cols);
    let profile = &plan.focus_profile;
    let mut applied_rel = profile.relative_z(order[0].0, order[0].1) - plan.start_z_error_um;

    let mut records = Vec::with_capacity(order.len());
    let mut obj = tile_phantom(plan, seed, 0)?;
    // Estimate that produced the current applied height; the first tile has
    // none, it starts at the deliberately wrong height.
    let mut shift_px = 0.0;
    let mut pred_um = 0.0;
    let mut flag = TileFlag::Start;
    let mut elapsed = 0.0;

    for (i, &(row, col)) in order.iter().enumerate() {
        let rel = profile.relative_z(row, col);
        let has_next = i + 1 < order.len();
        let record = TileRecord {
            tile_id: i,
            row,
            col,
            true_z_um: profile.base_um + rel,
            shift_px,
            pred_z_um: pred_um,
            applied_z_um: profile.base_um + applied_rel,
            err_um: (applied_rel - rel).abs(),
            t_total_s: timing.tile_segment(plan.method, has_next),
            flag,
            t_estimate_s: elapsed,
        };
        if let Some(sink) = sink.as_deref_mut() {
            let capture = render_brightfield(
                &obj,
                applied_rel - rel,
                &cfg.with_seed(rng::mix(seed, i as u64)),
            )?;
            sink(&record, &capture)?;
        }
        records.push(record);

        if has_next {
            let (nr, nc) = order[i + 1];
            let next = tile_phantom(plan, seed, i + 1)?;
            let defocus = profile.relative_z(nr, nc) - applied_rel;
            match measure(&next, defocus, plan, cfg, rng::mix(seed, (i + 1) as u64)) {
                Ok(est) => {
                    shift_px = est.shift_y;
                    pred_um = predict_defocus(curve, est.shift_y);
                    applied_rel += pred_um;
                    flag = TileFlag::Ok;
                    elapsed = est.elapsed;
                }
                Err(_) => {
                    // Keep the last good height and move on; the record for
                    // the next tile carries the failure.
                    shift_px = 0.0;
                    pred_um = 0.0;
                    flag = TileFlag::Fail;
                    elapsed = 0.0;
                }
            }
            obj = next;
        }
    }

    ScanReport::from_records(
        plan.style.to_string(),
        plan.method,
        plan.subsample_ratio,
        plan.rows,
        plan.cols,
        records,
    )
}
