use crate::error::{Error, Result};

/// A single-channel intensity image, row-major f64.
///
/// Simulator outputs keep values in [0, 1]; crosstalk-corrected planes may
/// leave that range and are clamped only for display or file export.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ImagePlane {
    /// All-zero plane.
    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "empty plane");
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    /// Constant-valued plane.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        let mut p = Self::zeros(width, height);
        p.values.fill(value);
        p
    }

    /// Build from a row-major buffer; rejects size mismatches and non-finite
    /// values.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::BufferSizeMismatch {
                len: values.len(),
                width,
                height,
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(i));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[f64] {
        &self.values[y * self.width..(y + 1) * self.width]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn mean(&self) -> f64 {
        // Per-row partials summed in order: deterministic and accurate enough
        // for the tolerances used here.
        let row_sums: f64 = (0..self.height)
            .map(|y| self.row(y).iter().sum::<f64>())
            .sum();
        row_sums / self.values.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Keep every `n`-th pixel along both axes, starting at (0, 0).
    pub fn subsample(&self, n: usize) -> ImagePlane {
        assert!(n >= 1);
        if n == 1 {
            return self.clone();
        }
        let w = self.width.div_ceil(n);
        let h = self.height.div_ceil(n);
        let mut values = Vec::with_capacity(w * h);
        for y in (0..self.height).step_by(n) {
            let row = self.row(y);
            values.extend(row.iter().step_by(n));
        }
        ImagePlane {
            width: w,
            height: h,
            values,
        }
    }

    /// Clamp all values into [lo, hi] in place.
    pub fn clamp_in_place(&mut self, lo: f64, hi: f64) {
        for v in &mut self.values {
            *v = v.clamp(lo, hi);
        }
    }

    pub(crate) fn same_dims(&self, other: &ImagePlane) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }
}

/// Pearson correlation between two planes of equal dimensions.
pub fn correlation(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    a.same_dims(b)?;
    let ma = a.mean();
    let mb = b.mean();
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        let u = x - ma;
        let v = y - mb;
        num += u * v;
        da += u * u;
        db += v * v;
    }
    if da <= 0.0 || db <= 0.0 {
        return Err(Error::FlatImage);
    }
    Ok(num / (da * db).sqrt())
}

/// Clean per-channel object images: the simulation ground truth.
#[derive(Debug, Clone)]
pub struct GroundTruthPair {
    pub red: ImagePlane,
    pub green: ImagePlane,
}

impl GroundTruthPair {
    pub fn new(red: ImagePlane, green: ImagePlane) -> Result<Self> {
        red.same_dims(&green)?;
        Ok(Self { red, green })
    }

    pub fn width(&self) -> usize {
        self.red.width()
    }

    pub fn height(&self) -> usize {
        self.red.height()
    }
}

/// The red and green channels of one captured multiplexed frame.
#[derive(Debug, Clone)]
pub struct ColorFrame {
    pub red: ImagePlane,
    pub green: ImagePlane,
}

impl ColorFrame {
    pub fn new(red: ImagePlane, green: ImagePlane) -> Result<Self> {
        red.same_dims(&green)?;
        Ok(Self { red, green })
    }

    pub fn width(&self) -> usize {
        self.red.width()
    }

    pub fn height(&self) -> usize {
        self.red.height()
    }
}
