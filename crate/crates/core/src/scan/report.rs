use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shift::Method;

/// Depth of field used for the "in focus" verdict, µm.
pub const DOF_UM: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TileFlag {
    /// First tile, captured at the deliberate start error.
    Start,
    /// Height set by a successful shift estimate.
    Ok,
    /// Estimator failed in transit; previous height carried over.
    Fail,
}

impl fmt::Display for TileFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TileFlag::Start => "start",
            TileFlag::Ok => "ok",
            TileFlag::Fail => "fail",
        })
    }
}

/// One scanned tile. Heights are absolute, errors are |applied - true|.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TileRecord {
    pub tile_id: usize,
    pub row: usize,
    pub col: usize,
    pub true_z_um: f64,
    /// Shift estimate that set this tile's height (0 for the start tile).
    pub shift_px: f64,
    /// Defocus correction derived from that shift.
    pub pred_z_um: f64,
    pub applied_z_um: f64,
    pub err_um: f64,
    /// Modeled schedule segment charged to this tile.
    pub t_total_s: f64,
    pub flag: TileFlag,
    /// Measured estimator wall time; excluded from serialized output.
    #[serde(skip)]
    pub t_estimate_s: f64,
}

/// Differential focus map: each cell holds the applied-height step from the
/// previous tile in scan order (the start tile holds 0). Row-major grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FocusMap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    /// Absolute applied height of the start tile.
    pub initial_z_um: f64,
}

impl FocusMap {
    fn from_records(rows: usize, cols: usize, records: &[TileRecord]) -> Result<Self> {
        if records.len() != rows * cols {
            return Err(Error::InvalidConfig(format!(
                "{} records do not fill a {rows}x{cols} grid",
                records.len()
            )));
        }
        let mut values = vec![0.0; rows * cols];
        for (i, rec) in records.iter().enumerate() {
            let step = if i == 0 {
                0.0
            } else {
                rec.applied_z_um - records[i - 1].applied_z_um
            };
            values[rec.row * cols + rec.col] = step;
        }
        Ok(Self {
            rows,
            cols,
            values,
            initial_z_um: records[0].applied_z_um,
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    /// Integrate the differential map back into absolute applied heights,
    /// one per tile in scan order.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut z = self.initial_z_um;
        super::scan_order(self.rows, self.cols)
            .into_iter()
            .enumerate()
            .map(|(i, (r, c))| {
                if i > 0 {
                    z += self.get(r, c);
                }
                z
            })
            .collect()
    }
}

/// Everything a scan produces: per-tile records, summary statistics over
/// the residual focus errors, the modeled wall time, and the focus map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanReport {
    pub sample: String,
    pub method: Method,
    pub subsample_ratio: usize,
    pub rows: usize,
    pub cols: usize,
    pub records: Vec<TileRecord>,
    pub mean_error_um: f64,
    pub std_error_um: f64,
    /// Fraction of tiles with |error| within [`DOF_UM`].
    pub within_dof_fraction: f64,
    pub total_time_s: f64,
    pub focus_map: FocusMap,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    if n == 0 {
        return (0.0, 0.0, 0);
    }
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt(), n)
}

impl ScanReport {
    pub fn from_records(
        sample: String,
        method: Method,
        subsample_ratio: usize,
        rows: usize,
        cols: usize,
        records: Vec<TileRecord>,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyReport);
        }
        let (mean, std, _) = mean_std(records.iter().map(|r| r.err_um));
        let within = records.iter().filter(|r| r.err_um <= DOF_UM).count() as f64
            / records.len() as f64;
        let total = records.iter().map(|r| r.t_total_s).sum();
        let focus_map = FocusMap::from_records(rows, cols, &records)?;
        Ok(Self {
            sample,
            method,
            subsample_ratio,
            rows,
            cols,
            records,
            mean_error_um: mean,
            std_error_um: std,
            within_dof_fraction: within,
            total_time_s: total,
            focus_map,
        })
    }

    /// Recompute every derived statistic from the records and confirm the
    /// stored values match to within 1e-12.
    pub fn self_check(&self) -> Result<()> {
        let fresh = Self::from_records(
            self.sample.clone(),
            self.method,
            self.subsample_ratio,
            self.rows,
            self.cols,
            self.records.clone(),
        )?;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        if !close(fresh.mean_error_um, self.mean_error_um)
            || !close(fresh.std_error_um, self.std_error_um)
            || !close(fresh.within_dof_fraction, self.within_dof_fraction)
            || !close(fresh.total_time_s, self.total_time_s)
        {
            return Err(Error::InvalidConfig(
                "stored scan statistics disagree with records".into(),
            ));
        }
        Ok(())
    }
}

/// Render the per-tile records in the scan CSV layout.
pub fn tile_csv(report: &ScanReport) -> String {
    let mut out = String::from(
        "tile_id,row,col,true_z_um,shift_px,pred_z_um,applied_z_um,err_um,t_total_s,flag\n",
    );
    for r in &report.records {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            r.tile_id,
            r.row,
            r.col,
            r.true_z_um,
            r.shift_px,
            r.pred_z_um,
            r.applied_z_um,
            r.err_um,
            r.t_total_s,
            r.flag
        ));
    }
    out
}

pub fn write_tile_csv(report: &ScanReport, path: &Path) -> Result<()> {
    fs::write(path, tile_csv(report))?;
    Ok(())
}

/// Write the focus map as a CSV grid and an 8-bit grayscale PNG with the
/// value range mapped linearly onto [0, 255].
pub fn export_focus_map(map: &FocusMap, csv_path: &Path, png_path: &Path) -> Result<()> {
    let mut csv = String::new();
    for r in 0..map.rows {
        for c in 0..map.cols {
            if c > 0 {
                csv.push(',');
            }
            csv.push_str(&format!("{:.6}", map.get(r, c)));
        }
        csv.push('\n');
    }
    fs::write(csv_path, csv)?;

    let (lo, hi) = map
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    let img = image::ImageBuffer::from_fn(map.cols as u32, map.rows as u32, |x, y| {
        let v = map.get(y as usize, x as usize);
        let g = if span > 0.0 {
            ((v - lo) / span * 255.0).round() as u8
        } else {
            0
        };
        image::Luma([g])
    });
    img.save(png_path)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Method,
    SubsampleRatio,
    Sample,
}

impl FromStr for GroupBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "method" => Ok(GroupBy::Method),
            "ratio" | "subsample_ratio" => Ok(GroupBy::SubsampleRatio),
            "sample" => Ok(GroupBy::Sample),
            other => Err(Error::InvalidConfig(format!(
                "unknown grouping '{other}' (expected method, ratio, or sample)"
            ))),
        }
    }
}

/// One line of a cross-report summary.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub key: String,
    pub tiles: usize,
    pub mean_err_um: f64,
    pub std_err_um: f64,
    /// Mean measured estimator time over successfully estimated tiles.
    pub mean_estimate_s: f64,
}

/// Pool tile records across reports and aggregate per group key.
pub fn summarize(reports: &[ScanReport], group: GroupBy) -> Result<Vec<SummaryRow>> {
    let mut groups: BTreeMap<String, Vec<&TileRecord>> = BTreeMap::new();
    for report in reports {
        let key = match group {
            GroupBy::Method => report.method.to_string(),
            GroupBy::SubsampleRatio => format!("{}", report.subsample_ratio),
            GroupBy::Sample => report.sample.clone(),
        };
        groups.entry(key).or_default().extend(report.records.iter());
    }
    if groups.values().all(|v| v.is_empty()) {
        return Err(Error::EmptyReport);
    }
    Ok(groups
        .into_iter()
        .map(|(key, recs)| {
            let (mean, std, n) = mean_std(recs.iter().map(|r| r.err_um));
            let (est_mean, _, est_n) = mean_std(
                recs.iter()
                    .filter(|r| r.flag == TileFlag::Ok)
                    .map(|r| r.t_estimate_s),
            );
            SummaryRow {
                key,
                tiles: n,
                mean_err_um: mean,
                std_err_um: std,
                mean_estimate_s: if est_n == 0 { 0.0 } else { est_mean },
            }
        })
        .collect())
}

/// Fixed-width text table for terminal output.
pub fn format_summary(rows: &[SummaryRow], group: GroupBy) -> String {
    let header = match group {
        GroupBy::Method => "method",
        GroupBy::SubsampleRatio => "ratio",
        GroupBy::Sample => "sample",
    };
    let key_w = rows
        .iter()
        .map(|r| r.key.len())
        .chain([header.len()])
        .max()
        .unwrap_or(6);
    let mut out = format!(
        "{header:<key_w$}  {:>6}  {:>12}  {:>12}  {:>12}\n",
        "tiles", "mean_err_um", "std_err_um", "mean_est_s"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<key_w$}  {:>6}  {:>12.4}  {:>12.4}  {:>12.6}\n",
            r.key, r.tiles, r.mean_err_um, r.std_err_um, r.mean_estimate_s
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(i: usize, row: usize, col: usize, err: f64) -> TileRecord {
        TileRecord {
            tile_id: i,
            row,
            col,
            true_z_um: 1.0 + i as f64,
            shift_px: 0.5 * i as f64,
            pred_z_um: 0.1,
            applied_z_um: 1.0 + i as f64 + err,
            err_um: err,
            t_total_s: 0.24,
            flag: if i == 0 { TileFlag::Start } else { TileFlag::Ok },
            t_estimate_s: 0.01,
        }
    }

    fn small_report() -> ScanReport {
        let recs = vec![
            record(0, 0, 0, 1.0),
            record(1, 0, 1, 0.2),
            record(2, 1, 1, 0.1),
            record(3, 1, 0, 0.3),
        ];
        ScanReport::from_records("tissue".into(), Method::Xcorr, 3, 2, 2, recs).unwrap()
    }

    #[test]
    fn statistics_match_hand_computation() {
        let rep = small_report();
        assert!((rep.mean_error_um - 0.4).abs() < 1e-12);
        let var = (0.6f64.powi(2) + 0.2f64.powi(2) + 0.3f64.powi(2) + 0.1f64.powi(2)) / 4.0;
        assert!((rep.std_error_um - var.sqrt()).abs() < 1e-12);
        assert!((rep.within_dof_fraction - 0.75).abs() < 1e-12);
        assert!((rep.total_time_s - 0.96).abs() < 1e-12);
        rep.self_check().unwrap();
    }

    #[test]
    fn focus_map_reconstructs_applied_heights() {
        let rep = small_report();
        let zs = rep.focus_map.reconstruct();
        // Scan order for 2x2: (0,0) (0,1) (1,1) (1,0).
        let expect: Vec<f64> = rep.records.iter().map(|r| r.applied_z_um).collect();
        assert_eq!(zs.len(), expect.len());
        for (a, b) in zs.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(rep.focus_map.get(0, 0), 0.0);
    }

    #[test]
    fn empty_reports_are_rejected() {
        let err =
            ScanReport::from_records("x".into(), Method::Xcorr, 1, 1, 1, Vec::new()).unwrap_err();
        assert!(matches!(err, Error::EmptyReport));
        assert!(matches!(summarize(&[], GroupBy::Method), Err(Error::EmptyReport)));
    }

    #[test]
    fn wrong_grid_size_is_rejected() {
        let recs = vec![record(0, 0, 0, 0.1)];
        assert!(ScanReport::from_records("x".into(), Method::Xcorr, 1, 2, 2, recs).is_err());
    }

    #[test]
    fn pooled_summary_equals_weighted_mean() {
        let a = small_report();
        let mut recs = vec![
            record(0, 0, 0, 0.5),
            record(1, 0, 1, 0.5),
            record(2, 1, 1, 0.5),
            record(3, 1, 0, 0.5),
        ];
        for r in &mut recs {
            r.applied_z_um = r.true_z_um + 0.5;
        }
        let b = ScanReport::from_records("tissue".into(), Method::Xcorr, 3, 2, 2, recs).unwrap();
        let rows = summarize(&[a.clone(), b.clone()], GroupBy::Method).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].tiles, 8);
        let pooled = (a.mean_error_um * 4.0 + b.mean_error_um * 4.0) / 8.0;
        assert!((rows[0].mean_err_um - pooled).abs() < 1e-12);
    }

    #[test]
    fn grouping_keys_split_reports() {
        let mut b = small_report();
        b.method = Method::MutualInfo;
        let rows = summarize(&[small_report(), b], GroupBy::Method).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].key, "mutual_info");
        assert_eq!(rows[1].key, "xcorr");
        let table = format_summary(&rows, GroupBy::Method);
        assert!(table.starts_with("method"));
        assert_eq!(table.lines().count(), 3);
    }

    #[test]
    fn group_strings_parse() {
        assert_eq!("method".parse::<GroupBy>().unwrap(), GroupBy::Method);
        assert_eq!("ratio".parse::<GroupBy>().unwrap(), GroupBy::SubsampleRatio);
        assert_eq!("sample".parse::<GroupBy>().unwrap(), GroupBy::Sample);
        assert!("tile".parse::<GroupBy>().is_err());
    }

    #[test]
    fn csv_layout_is_stable() {
        let rep = small_report();
        let csv = tile_csv(&rep);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "tile_id,row,col,true_z_um,shift_px,pred_z_um,applied_z_um,err_um,t_total_s,flag"
        );
        let first = lines.next().unwrap();
        assert_eq!(
            first,
            "0,0,0,1.000000,0.000000,0.100000,2.000000,1.000000,0.240000,start"
        );
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn focus_map_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rep = small_report();
        let csv_path = dir.path().join("map.csv");
        let png_path = dir.path().join("map.png");
        export_focus_map(&rep.focus_map, &csv_path, &png_path).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 2);
        let img = image::open(&png_path).unwrap().into_luma8();
        assert_eq!(img.dimensions(), (2, 2));
        // Linear scaling puts the extremes at 0 and 255.
        let pixels: Vec<u8> = img.pixels().map(|p| p.0[0]).collect();
        assert!(pixels.contains(&0) && pixels.contains(&255));
    }
}
