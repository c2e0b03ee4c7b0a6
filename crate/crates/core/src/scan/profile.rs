use serde::{Deserialize, Serialize};

use crate::rng;

/// True focus height z(row, col) over the slide: a planar tilt plus smooth
/// seeded undulation, riding on an arbitrary absolute offset `base_um`.
///
/// The tracking loop works entirely in base-relative space, so every
/// tracking result is exactly independent of `base_um`: the stage needs no
/// positional repeatability between scans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FocusProfile {
    pub base_um: f64,
    /// Tilt in µm per tile step along the grid row index.
    pub tilt_row_um: f64,
    /// Tilt in µm per tile step along the grid column index.
    pub tilt_col_um: f64,
    /// Peak undulation amplitude in µm.
    pub amplitude_um: f64,
    /// Undulation wavelength in tiles.
    pub wavelength_tiles: f64,
    pub seed: u64,
}

impl Default for FocusProfile {
    fn default() -> Self {
        Self {
            base_um: 0.0,
            tilt_row_um: 0.05,
            tilt_col_um: 0.08,
            amplitude_um: 2.0,
            wavelength_tiles: 8.0,
            seed: 0,
        }
    }
}

#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

impl FocusProfile {
    /// A perfectly level slide at the given absolute height.
    pub fn flat(base_um: f64) -> Self {
        Self {
            base_um,
            tilt_row_um: 0.0,
            tilt_col_um: 0.0,
            amplitude_um: 0.0,
            ..Self::default()
        }
    }

    pub fn with_base(&self, base_um: f64) -> Self {
        Self {
            base_um,
            ..self.clone()
        }
    }

    /// Focus height above `base_um`. This is what the controller sees.
    pub fn relative_z(&self, row: usize, col: usize) -> f64 {
        let mut z = self.tilt_row_um * row as f64 + self.tilt_col_um * col as f64;
        if self.amplitude_um != 0.0 {
            let u = col as f64 / self.wavelength_tiles;
            let v = row as f64 / self.wavelength_tiles;
            let i0 = u.floor() as i64;
            let j0 = v.floor() as i64;
            let fx = fade(u - i0 as f64);
            let fy = fade(v - j0 as f64);
            let corner = |di: i64, dj: i64| rng::lattice_unit(self.seed, i0 + di, j0 + dj);
            let top = corner(0, 0) + fx * (corner(1, 0) - corner(0, 0));
            let bottom = corner(0, 1) + fx * (corner(1, 1) - corner(0, 1));
            z += self.amplitude_um * (top + fy * (bottom - top));
        }
        z
    }

    /// Absolute focus height.
    pub fn z(&self, row: usize, col: usize) -> f64 {
        self.base_um + self.relative_z(row, col)
    }

    /// Largest |Δz| between consecutive tiles in serpentine scan order;
    /// smooth-profile claims in tests are checked against this.
    pub fn max_scan_step(&self, rows: usize, cols: usize) -> f64 {
        let order = super::scan_order(rows, cols);
        order
            .windows(2)
            .map(|w| {
                (self.relative_z(w[1].0, w[1].1) - self.relative_z(w[0].0, w[0].1)).abs()
            })
            .fold(0.0, f64::max)
    }
}
