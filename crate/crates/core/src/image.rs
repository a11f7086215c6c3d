//! Dense rasters and detector-element image stacks.

use crate::error::{Error, Result};
use crate::psf::DetectorGeometry;

/// Row-major 2D raster with a physical pixel pitch.
///
/// Index `(i, j)` is `(row, col)`. Values are finite; constructors reject
/// NaN and infinities.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    rows: usize,
    cols: usize,
    pixel_size_nm: f64,
    data: Vec<f64>,
}

fn check_dims(rows: usize, cols: usize, pixel_size_nm: f64) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!(
            "image dimensions must be positive, got {rows}x{cols}"
        )));
    }
    if !(pixel_size_nm.is_finite() && pixel_size_nm > 0.0) {
        return Err(Error::invalid(format!(
            "pixel size must be positive, got {pixel_size_nm}"
        )));
    }
    Ok(())
}

impl Image2D {
    pub fn new(rows: usize, cols: usize, pixel_size_nm: f64, fill: f64) -> Result<Self> {
        check_dims(rows, cols, pixel_size_nm)?;
        if !fill.is_finite() {
            return Err(Error::invalid("fill value must be finite"));
        }
        Ok(Self {
            rows,
            cols,
            pixel_size_nm,
            data: vec![fill; rows * cols],
        })
    }

    pub fn zeros(rows: usize, cols: usize, pixel_size_nm: f64) -> Result<Self> {
        Self::new(rows, cols, pixel_size_nm, 0.0)
    }

    pub fn from_vec(rows: usize, cols: usize, pixel_size_nm: f64, data: Vec<f64>) -> Result<Self> {
        check_dims(rows, cols, pixel_size_nm)?;
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at index {k}")));
        }
        Ok(Self {
            rows,
            cols,
            pixel_size_nm,
            data,
        })
    }

    /// Builds from nested rows, mostly handy in tests.
    pub fn from_rows(pixel_size_nm: f64, rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_vec(rows.len(), cols, pixel_size_nm, data)
    }

    /// Same shape and pitch as `self`, new payload. Caller guarantees the length.
    pub(crate) fn with_data(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            rows: self.rows,
            cols: self.cols,
            pixel_size_nm: self.pixel_size_nm,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixel_size_nm(&self) -> f64 {
        self.pixel_size_nm
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn same_shape(&self, other: &Image2D) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// First `(row, col)` holding the maximum value.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = k;
            }
        }
        (best / self.cols, best % self.cols)
    }

    pub fn scaled(&self, factor: f64) -> Image2D {
        self.with_data(self.data.iter().map(|v| v * factor).collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }
}

/// `sqrt(sum x_ij^2)`.
pub fn frobenius_norm(img: &Image2D) -> f64 {
    // Scaled accumulation keeps very large or tiny values from over/underflowing.
    let scale = img.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let ss: f64 = img.data.iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * ss.sqrt()
}

/// One scanned image per detector element, row-major over the array.
#[derive(Debug, Clone, PartialEq)]
pub struct IsmDataset {
    elements: Vec<Image2D>,
    geometry: DetectorGeometry,
}

impl IsmDataset {
    pub fn new(elements: Vec<Image2D>, geometry: DetectorGeometry) -> Result<Self> {
        if elements.len() != geometry.element_count() {
            return Err(Error::invalid(format!(
                "dataset has {} images but the detector has {} elements",
                elements.len(),
                geometry.element_count()
            )));
        }
        let first = &elements[0];
        for (k, e) in elements.iter().enumerate().skip(1) {
            if !e.same_shape(first) || e.pixel_size_nm() != first.pixel_size_nm() {
                return Err(Error::invalid(format!(
                    "element {k} differs in shape or pixel size from element 0"
                )));
            }
        }
        Ok(Self { elements, geometry })
    }

    pub fn elements(&self) -> &[Image2D] {
        &self.elements
    }

    pub fn into_elements(self) -> Vec<Image2D> {
        self.elements
    }

    pub fn geometry(&self) -> &DetectorGeometry {
        &self.geometry
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, row: usize, col: usize) -> &Image2D {
        &self.elements[row * self.geometry.array_cols + col]
    }

    pub fn central(&self) -> &Image2D {
        &self.elements[self.geometry.central_index()]
    }

    pub fn shape(&self) -> (usize, usize) {
        self.elements[0].shape()
    }

    pub fn pixel_size_nm(&self) -> f64 {
        self.elements[0].pixel_size_nm()
    }
}
