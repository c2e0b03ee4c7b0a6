//! Estimator benchmark: accuracy and speed of both shift methods across
//! subsample ratios, on one shared set of rendered frames so every cell
//! sees identical inputs.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crosstalk;
use crate::error::{Error, Result};
use crate::image::ColorFrame;
use crate::optics::{render_multiplexed, shift_per_micron, OpticsConfig};
use crate::phantom::{self, PhantomParams, PhantomStyle, MIN_PHANTOM_DIM};
use crate::rng;
use crate::shift::{estimate_shift, Method};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Number of frames, each with its own phantom and random defocus.
    pub frames: usize,
    pub ratios: Vec<usize>,
    /// Defocus drawn uniformly from +/- this range, µm.
    pub defocus_range_um: f64,
    pub width: usize,
    pub height: usize,
    pub style: PhantomStyle,
    pub blur_px: u32,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            frames: 594,
            ratios: vec![1, 3, 5, 7],
            defocus_range_um: 4.0,
            width: 256,
            height: 256,
            style: PhantomStyle::Tissue,
            blur_px: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::InvalidConfig("bench needs at least one frame".into()));
        }
        if self.ratios.is_empty() || self.ratios.iter().any(|&r| r == 0) {
            return Err(Error::InvalidConfig("subsample ratios must be positive".into()));
        }
        if self.width < MIN_PHANTOM_DIM || self.height < MIN_PHANTOM_DIM {
            return Err(Error::InvalidConfig(format!(
                "bench frames must be at least {MIN_PHANTOM_DIM} px on each side"
            )));
        }
        if !(self.defocus_range_um > 0.0) || !self.defocus_range_um.is_finite() {
            return Err(Error::InvalidConfig("defocus range must be positive".into()));
        }
        Ok(())
    }
}

/// One estimate of one frame by one (method, ratio) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Method,
    pub subsample_ratio: usize,
    pub tile_id: usize,
    pub shift_px: f64,
    pub defocus_um: f64,
    pub error_um: f64,
    /// Measured wall time; excluded from determinism guarantees.
    pub elapsed_s: f64,
}

/// Aggregate over all frames for one (method, ratio) cell.
#[derive(Debug, Clone, Serialize)]
pub struct BenchCell {
    pub method: Method,
    pub subsample_ratio: usize,
    pub tiles: usize,
    pub mean_abs_shift_px: f64,
    pub mean_abs_defocus_um: f64,
    pub mae_px: f64,
    pub mae_um: f64,
    pub mean_time_s: f64,
    pub median_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub slope_px_per_um: f64,
    pub rows: Vec<BenchRow>,
    pub cells: Vec<BenchCell>,
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Render the shared frame set, then sweep every method and ratio over it.
pub fn run_bench(bench: &BenchConfig, optics: &OpticsConfig, seed: u64) -> Result<BenchReport> {
    bench.validate()?;
    optics.validate()?;
    let slope = shift_per_micron(optics);
    let params = PhantomParams {
        width: bench.width,
        height: bench.height,
        style: bench.style,
        ..PhantomParams::default()
    };

    let mut dz = rng::stream_label(seed, "bench.defocus");
    let mut frames: Vec<(f64, ColorFrame)> = Vec::with_capacity(bench.frames);
    for i in 0..bench.frames {
        let defocus = (dz.random::<f64>() * 2.0 - 1.0) * bench.defocus_range_um;
        let obj = phantom::generate(
            &params,
            rng::mix_label(rng::mix(seed, i as u64), "bench.tile"),
        )?;
        let frame = render_multiplexed(
            &obj,
            defocus,
            bench.blur_px,
            &optics.with_seed(rng::mix_label(rng::mix(seed, i as u64), "bench.frame")),
        )?;
        frames.push((defocus, crosstalk::correct(&frame, optics.crosstalk)?));
    }

    let mut rows = Vec::with_capacity(2 * bench.ratios.len() * bench.frames);
    let mut cells = Vec::new();
    for method in [Method::Xcorr, Method::MutualInfo] {
        for &ratio in &bench.ratios {
            let mut abs_err_px = Vec::with_capacity(bench.frames);
            let mut times = Vec::with_capacity(bench.frames);
            let mut abs_shift = 0.0;
            let mut abs_defocus = 0.0;
            for (i, (defocus, frame)) in frames.iter().enumerate() {
                let est = estimate_shift(frame, method, ratio)?;
                let err_px = est.shift_y - defocus * slope;
                rows.push(BenchRow {
                    method,
                    subsample_ratio: ratio,
                    tile_id: i,
                    shift_px: est.shift_y,
                    defocus_um: *defocus,
                    error_um: err_px.abs() / slope,
                    elapsed_s: est.elapsed,
                });
                abs_err_px.push(err_px.abs());
                times.push(est.elapsed);
                abs_shift += est.shift_y.abs();
                abs_defocus += defocus.abs();
            }
            let n = bench.frames as f64;
            let mae_px = abs_err_px.iter().sum::<f64>() / n;
            cells.push(BenchCell {
                method,
                subsample_ratio: ratio,
                tiles: bench.frames,
                mean_abs_shift_px: abs_shift / n,
                mean_abs_defocus_um: abs_defocus / n,
                mae_px,
                mae_um: mae_px / slope,
                mean_time_s: times.iter().sum::<f64>() / n,
                median_time_s: median(&mut times),
            });
        }
    }
    Ok(BenchReport {
        slope_px_per_um: slope,
        rows,
        cells,
    })
}

/// One row per (method, ratio) cell: the tile_id column carries the number
/// of tiles aggregated, the value columns the cell's mean absolute shift,
/// mean absolute defocus, mean absolute error, and median time.
pub fn bench_csv(report: &BenchReport) -> String {
    let mut out =
        String::from("method,subsample_ratio,tile_id,shift_px,defocus_um,error_um,elapsed_s\n");
    for c in &report.cells {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.9}\n",
            c.method,
            c.subsample_ratio,
            c.tiles,
            c.mean_abs_shift_px,
            c.mean_abs_defocus_um,
            c.mae_um,
            c.median_time_s
        ));
    }
    out
}

pub fn write_bench_csv(report: &BenchReport, path: &Path) -> Result<()> {
    fs::write(path, bench_csv(report))?;
    Ok(())
}

/// Fixed-width comparison table over the aggregate cells.
pub fn format_bench(report: &BenchReport) -> String {
    let mut out = format!(
        "{:<12}  {:>5}  {:>10}  {:>10}  {:>12}  {:>12}\n",
        "method", "ratio", "mae_px", "mae_um", "mean_time_s", "median_time_s"
    );
    for c in &report.cells {
        out.push_str(&format!(
            "{:<12}  {:>5}  {:>10.4}  {:>10.4}  {:>12.6}  {:>12.6}\n",
            c.method.to_string(),
            c.subsample_ratio,
            c.mae_px,
            c.mae_um,
            c.mean_time_s,
            c.median_time_s
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> BenchConfig {
        BenchConfig {
            frames: 3,
            ratios: vec![1, 3],
            width: 96,
            height: 96,
            defocus_range_um: 2.0,
            ..BenchConfig::default()
        }
    }

    #[test]
    fn median_handles_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&mut []), 0.0);
    }

    #[test]
    fn sweep_covers_every_cell_and_frame() {
        let report = run_bench(&tiny(), &OpticsConfig::default(), 5).unwrap();
        assert_eq!(report.rows.len(), 2 * 2 * 3);
        assert_eq!(report.cells.len(), 4);
        for cell in &report.cells {
            assert!(cell.mae_px.is_finite());
            assert!(cell.mae_px < 3.0, "{} r{} mae {}", cell.method, cell.subsample_ratio, cell.mae_px);
        }
    }

    #[test]
    fn estimates_are_deterministic_across_runs() {
        let cfg = OpticsConfig::default();
        let a = run_bench(&tiny(), &cfg, 9).unwrap();
        let b = run_bench(&tiny(), &cfg, 9).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.shift_px.to_bits(), rb.shift_px.to_bits());
            assert_eq!(ra.defocus_um.to_bits(), rb.defocus_um.to_bits());
        }
    }

    #[test]
    fn csv_is_one_row_per_cell_under_the_contract_header() {
        let report = run_bench(&tiny(), &OpticsConfig::default(), 5).unwrap();
        let csv = bench_csv(&report);
        assert!(csv.starts_with(
            "method,subsample_ratio,tile_id,shift_px,defocus_um,error_um,elapsed_s\n"
        ));
        assert_eq!(csv.lines().count(), 5);
        let first = csv.lines().nth(1).unwrap();
        assert!(first.starts_with("xcorr,1,3,"));
        assert_eq!(first.split(',').count(), 7);
        let table = format_bench(&report);
        assert_eq!(table.lines().count(), 5);
    }

    #[test]
    fn degenerate_configs_are_rejected() {
        let mut b = tiny();
        b.frames = 0;
        assert!(b.validate().is_err());
        let mut b = tiny();
        b.ratios = vec![];
        assert!(b.validate().is_err());
        let mut b = tiny();
        b.defocus_range_um = 0.0;
        assert!(b.validate().is_err());
    }
}
