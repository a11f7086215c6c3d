//! The scan-point selection operator `A` and its adjoint.
//!
//! `A` gathers pixels at sampled scan points in row-major order; `Aᵀ` scatters
//! a measurement vector back onto a zero image. The skip pattern samples every
//! even row and even column, a quarter of the scan for even dimensions.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image2D;
use crate::io::write_bytes;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingMask {
    rows: usize,
    cols: usize,
    pattern: Vec<bool>,
    indices: Vec<usize>,
}

impl SamplingMask {
    /// Arbitrary boolean pattern, row-major, `true` = sampled.
    pub fn from_pattern(rows: usize, cols: usize, pattern: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("mask dimensions must be positive"));
        }
        if pattern.len() != rows * cols {
            return Err(Error::invalid(format!(
                "pattern length {} does not match {rows}x{cols}",
                pattern.len()
            )));
        }
        let indices = pattern
            .iter()
            .enumerate()
            .filter_map(|(k, &s)| s.then_some(k))
            .collect();
        Ok(Self {
            rows,
            cols,
            pattern,
            indices,
        })
    }

    /// Every scan point sampled (`A = I`).
    pub fn full(rows: usize, cols: usize) -> Result<Self> {
        Self::from_pattern(rows, cols, vec![true; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_sampled(&self, i: usize, j: usize) -> bool {
        self.pattern[i * self.cols + j]
    }

    pub fn pattern(&self) -> &[bool] {
        &self.pattern
    }

    /// Row-major flat indices of the sampled points.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Number of measurements `M`.
    pub fn sampled_count(&self) -> usize {
        self.indices.len()
    }

    /// Plain PBM (P1). Sampled points are white (0), skipped ones black (1).
    pub fn to_pbm(&self) -> String {
        let mut s = format!("P1\n{} {}\n", self.cols, self.rows);
        for i in 0..self.rows {
            let line: Vec<&str> = (0..self.cols)
                .map(|j| if self.is_sampled(i, j) { "0" } else { "1" })
                .collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn write_pbm(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bytes(path.as_ref(), self.to_pbm().as_bytes())
    }
}

/// Samples `(i, j)` iff both indices are even.
pub fn make_skip_mask(rows: usize, cols: usize) -> Result<SamplingMask> {
    let pattern = (0..rows * cols)
        .map(|k| (k / cols).is_multiple_of(2) && (k % cols).is_multiple_of(2))
        .collect();
    SamplingMask::from_pattern(rows, cols, pattern)
}

/// Measurements `y` together with the pixel pitch of the scan they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector {
    pub values: Vec<f64>,
    pub pixel_size_nm: f64,
}

impl MeasurementVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            pixel_size_nm: self.pixel_size_nm,
        }
    }
}

/// `y = A x`.
pub fn apply_a(mask: &SamplingMask, img: &Image2D) -> Result<MeasurementVector> {
    if img.shape() != (mask.rows, mask.cols) {
        return Err(Error::invalid(format!(
            "image is {:?}, mask is {}x{}",
            img.shape(),
            mask.rows,
            mask.cols
        )));
    }
    let data = img.data();
    Ok(MeasurementVector {
        values: mask.indices.iter().map(|&k| data[k]).collect(),
        pixel_size_nm: img.pixel_size_nm(),
    })
}

/// `x = Aᵀ y`: measurements at sampled points, zeros elsewhere.
pub fn apply_a_adjoint(mask: &SamplingMask, y: &MeasurementVector) -> Result<Image2D> {
    if y.len() != mask.sampled_count() {
        return Err(Error::invalid(format!(
            "measurement length {} does not match {} sampled points",
            y.len(),
            mask.sampled_count()
        )));
    }
    let mut data = vec![0.0; mask.rows * mask.cols];
    for (&k, &v) in mask.indices.iter().zip(&y.values) {
        data[k] = v;
    }
    Image2D::from_vec(mask.rows, mask.cols, y.pixel_size_nm, data)
}

// Slice-level gather/scatter used inside the solver loop.
pub(crate) fn gather(mask: &SamplingMask, x: &[f64], out: &mut [f64]) {
    for (o, &k) in out.iter_mut().zip(&mask.indices) {
        *o = x[k];
    }
}

pub(crate) fn scatter_add(mask: &SamplingMask, y: &[f64], scale: f64, out: &mut [f64]) {
    for (&v, &k) in y.iter().zip(&mask.indices) {
        out[k] += scale * v;
    }
}
