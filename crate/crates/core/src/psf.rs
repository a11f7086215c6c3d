//! Per-element point spread functions of a SPAD-array scanning microscope.
//!
//! Element `k` of the detector sees
//!
//! ```text
//! h_k(r) = h_exc(r) · (h_em ⊛ P)(r − d_k)
//! ```
//!
//! with Gaussian excitation and emission spots (FWHM = 0.51·λ/NA), a square
//! pinhole `P` the size of one detector element and `d_k` the element's
//! displacement from the array center, all in sample-space nanometers. The
//! pinhole integral is evaluated in closed form with error functions.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{Image2D, IsmDataset};

/// Converts a Gaussian FWHM to its standard deviation.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Maximum PSF mass allowed in the outermost pixel ring of the support.
pub const RING_MASS_LIMIT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorGeometry {
    pub array_rows: usize,
    pub array_cols: usize,
    /// Side of one element, projected to the sample plane.
    pub element_size_nm: f64,
    /// Center-to-center element spacing, projected to the sample plane.
    pub element_pitch_nm: f64,
    /// Total magnification. Metadata only; lengths above are already in sample space.
    pub magnification: f64,
}

impl Default for DetectorGeometry {
    fn default() -> Self {
        Self {
            array_rows: 5,
            array_cols: 5,
            element_size_nm: 50.0,
            element_pitch_nm: 75.0,
            magnification: 500.0,
        }
    }
}

impl DetectorGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.array_rows == 0 || self.array_cols == 0 {
            return Err(Error::config("array dims must be positive"));
        }
        if self.array_rows.is_multiple_of(2) || self.array_cols.is_multiple_of(2) {
            return Err(Error::config("array dims must be odd"));
        }
        if !(self.element_size_nm > 0.0 && self.element_size_nm.is_finite()) {
            return Err(Error::config("element_size_nm must be positive"));
        }
        if !(self.element_pitch_nm.is_finite() && self.element_pitch_nm >= self.element_size_nm) {
            return Err(Error::config("element_pitch_nm must be at least element_size_nm"));
        }
        if !(self.magnification > 0.0 && self.magnification.is_finite()) {
            return Err(Error::config("magnification must be positive"));
        }
        Ok(())
    }

    pub fn element_count(&self) -> usize {
        self.array_rows * self.array_cols
    }

    pub fn center(&self) -> (usize, usize) {
        (self.array_rows / 2, self.array_cols / 2)
    }

    pub fn central_index(&self) -> usize {
        let (r, c) = self.center();
        r * self.array_cols + c
    }

    /// `(row, col)` of element `k` in row-major order.
    pub fn element_position(&self, k: usize) -> (usize, usize) {
        (k / self.array_cols, k % self.array_cols)
    }
}

/// Displacement `((row − center_row)·pitch, (col − center_col)·pitch)` in nm.
pub fn element_displacement(geometry: &DetectorGeometry, row: usize, col: usize) -> Result<[f64; 2]> {
    if row >= geometry.array_rows || col >= geometry.array_cols {
        return Err(Error::invalid(format!(
            "element ({row}, {col}) outside a {}x{} array",
            geometry.array_rows, geometry.array_cols
        )));
    }
    let (cr, cc) = geometry.center();
    Ok([
        (row as f64 - cr as f64) * geometry.element_pitch_nm,
        (col as f64 - cc as f64) * geometry.element_pitch_nm,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalConfig {
    pub wavelength_exc_nm: f64,
    pub wavelength_em_nm: f64,
    pub numerical_aperture: f64,
    /// Odd side length of the sampled PSF, in pixels.
    pub psf_support_px: usize,
}

impl Default for OpticalConfig {
    fn default() -> Self {
        Self {
            wavelength_exc_nm: 640.0,
            wavelength_em_nm: 660.0,
            numerical_aperture: 1.4,
            psf_support_px: 65,
        }
    }
}

impl OpticalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength_exc_nm > 0.0 && self.wavelength_exc_nm.is_finite()) {
            return Err(Error::config("wavelength_exc_nm must be positive"));
        }
        if !(self.wavelength_em_nm.is_finite() && self.wavelength_em_nm >= self.wavelength_exc_nm) {
            return Err(Error::config(
                "wavelength_em_nm must be at least wavelength_exc_nm",
            ));
        }
        if !(self.numerical_aperture > 0.0 && self.numerical_aperture <= 1.6) {
            return Err(Error::config("numerical_aperture must lie in (0, 1.6]"));
        }
        if self.psf_support_px.is_multiple_of(2) {
            return Err(Error::config("psf_support_px must be odd"));
        }
        Ok(())
    }

    pub fn excitation_fwhm_nm(&self) -> f64 {
        gaussian_fwhm_nm(self.wavelength_exc_nm, self.numerical_aperture)
    }

    pub fn emission_fwhm_nm(&self) -> f64 {
        gaussian_fwhm_nm(self.wavelength_em_nm, self.numerical_aperture)
    }
}

/// `0.51·λ/NA`.
pub fn gaussian_fwhm_nm(wavelength_nm: f64, numerical_aperture: f64) -> f64 {
    0.51 * wavelength_nm / numerical_aperture
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsfStack {
    pub psfs: IsmDataset,
    /// Per-element `(dy, dx)` displacement in nm, row-major over the array.
    pub displacements_nm: Vec<[f64; 2]>,
}

impl PsfStack {
    pub fn geometry(&self) -> &DetectorGeometry {
        self.psfs.geometry()
    }

    pub fn central(&self) -> &Image2D {
        self.psfs.central()
    }
}

struct PsfModel {
    sigma_exc: f64,
    sigma_em: f64,
    pinhole_nm: f64,
    pixel_size_nm: f64,
}

impl PsfModel {
    /// Unnormalized PSF samples on a `support x support` grid centered on the
    /// middle pixel.
    fn sample(&self, support: usize, d: [f64; 2]) -> Vec<f64> {
        let half = (support / 2) as f64;
        let coord = |k: usize| (k as f64 - half) * self.pixel_size_nm;
        let em_y: Vec<f64> = (0..support).map(|i| self.pinhole_1d(coord(i) - d[0])).collect();
        let em_x: Vec<f64> = (0..support).map(|j| self.pinhole_1d(coord(j) - d[1])).collect();
        let exc: Vec<f64> = (0..support)
            .map(|k| {
                let u = coord(k) / self.sigma_exc;
                (-0.5 * u * u).exp()
            })
            .collect();
        let mut out = Vec::with_capacity(support * support);
        for i in 0..support {
            for j in 0..support {
                out.push(exc[i] * exc[j] * em_y[i] * em_x[j]);
            }
        }
        out
    }

    /// One axis of the emission Gaussian integrated over the pinhole width:
    /// `Φ((u + s/2)/σ) − Φ((u − s/2)/σ)`.
    fn pinhole_1d(&self, u: f64) -> f64 {
        let k = 1.0 / (self.sigma_em * std::f64::consts::SQRT_2);
        let h = 0.5 * self.pinhole_nm;
        0.5 * (libm::erf((u + h) * k) - libm::erf((u - h) * k))
    }
}

fn outer_ring_fraction(values: &[f64], support: usize) -> f64 {
    let total: f64 = values.iter().sum();
    let last = support - 1;
    let mut ring = 0.0;
    for i in 0..support {
        for j in 0..support {
            if i == 0 || j == 0 || i == last || j == last {
                ring += values[i * support + j];
            }
        }
    }
    ring / total
}

/// Samples and unit-normalizes the PSF of every detector element.
pub fn generate_psf_stack(
    geometry: &DetectorGeometry,
    optics: &OpticalConfig,
    pixel_size_nm: f64,
) -> Result<PsfStack> {
    geometry.validate()?;
    optics.validate()?;
    if !(pixel_size_nm > 0.0 && pixel_size_nm.is_finite()) {
        return Err(Error::config("pixel_size_nm must be positive"));
    }
    let model = PsfModel {
        sigma_exc: optics.excitation_fwhm_nm() / FWHM_PER_SIGMA,
        sigma_em: optics.emission_fwhm_nm() / FWHM_PER_SIGMA,
        pinhole_nm: geometry.element_size_nm,
        pixel_size_nm,
    };
    let displacements: Vec<[f64; 2]> = (0..geometry.element_count())
        .map(|k| {
            let (r, c) = geometry.element_position(k);
            element_displacement(geometry, r, c)
        })
        .collect::<Result<_>>()?;

    let support = optics.psf_support_px;
    let ring_ok = |support: usize| {
        displacements.iter().all(|&d| {
            let v = model.sample(support, d);
            let total: f64 = v.iter().sum();
            total > 0.0 && total.is_finite() && outer_ring_fraction(&v, support) <= RING_MASS_LIMIT
        })
    };
    if !ring_ok(support) {
        let mut required = support + 2;
        while !ring_ok(required) {
            required += 2;
            if required > 16_385 {
                return Err(Error::config(
                    "PSF support requirement exceeds 16385 px; check optics and pixel size",
                ));
            }
        }
        return Err(Error::config(format!(
            "psf_support_px = {support} leaves more than {RING_MASS_LIMIT} of the PSF mass in \
             the outer ring; at least {required} px required"
        )));
    }

    let psfs: Vec<Image2D> = displacements
        .par_iter()
        .map(|&d| {
            let mut v = model.sample(support, d);
            let total: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= total);
            Image2D::from_vec(support, support, pixel_size_nm, v)
        })
        .collect::<Result<_>>()?;

    Ok(PsfStack {
        psfs: IsmDataset::new(psfs, *geometry)?,
        displacements_nm: displacements,
    })
}

/// Key/value description of a PSF stack for the sidecar next to its CISMS file.
pub fn header_pairs(
    geometry: &DetectorGeometry,
    optics: &OpticalConfig,
    pixel_size_nm: f64,
) -> Vec<(String, String)> {
    vec![
        ("array_rows".into(), geometry.array_rows.to_string()),
        ("array_cols".into(), geometry.array_cols.to_string()),
        ("element_size_nm".into(), geometry.element_size_nm.to_string()),
        ("element_pitch_nm".into(), geometry.element_pitch_nm.to_string()),
        ("magnification".into(), geometry.magnification.to_string()),
        ("wavelength_exc_nm".into(), optics.wavelength_exc_nm.to_string()),
        ("wavelength_em_nm".into(), optics.wavelength_em_nm.to_string()),
        ("numerical_aperture".into(), optics.numerical_aperture.to_string()),
        ("psf_support_px".into(), optics.psf_support_px.to_string()),
        ("pixel_size_nm".into(), pixel_size_nm.to_string()),
    ]
}
