//! Adaptive pixel reassignment.
//!
//! Each element image is registered to the central element by normalized
//! cross-correlation (FFT, integer peak, 3×3 paraboloid refinement), shifted
//! back by a Fourier phase ramp and summed.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{signed_freq, to_complex, Fft2d};
use crate::image::{Image2D, IsmDataset};
use crate::psf::DetectorGeometry;

pub const DEFAULT_MAX_SHIFT_PX: f64 = 10.0;

/// Per-element reassignment shifts `(dy, dx)` in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftEstimate {
    pub geometry: DetectorGeometry,
    pub shifts: Vec<[f64; 2]>,
    /// Peak normalized cross-correlation with the central image, in [−1, 1].
    pub correlation_peak: Vec<f64>,
    /// Elements whose image had zero variance; their shift was forced to zero.
    pub flat: Vec<bool>,
}

impl ShiftEstimate {
    pub fn zeros(geometry: DetectorGeometry) -> Self {
        let n = geometry.element_count();
        Self {
            geometry,
            shifts: vec![[0.0; 2]; n],
            correlation_peak: vec![1.0; n],
            flat: vec![false; n],
        }
    }

    /// `element_row,element_col,shift_y_px,shift_x_px,correlation_peak`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("element_row,element_col,shift_y_px,shift_x_px,correlation_peak\n");
        for (k, (sh, c)) in self.shifts.iter().zip(&self.correlation_peak).enumerate() {
            let (r, col) = self.geometry.element_position(k);
            s.push_str(&format!("{r},{col},{},{},{}\n", sh[0], sh[1], c));
        }
        s
    }
}

/// Translates `img` by `shift = (dy, dx)` pixels: `out(r) = img(r − shift)`,
/// circular at the borders.
///
/// The Nyquist bin of an even-length axis is multiplied by `cos(π·s)` rather
/// than `exp(−iπ·s)`, which keeps the output real. Integer shifts are exact;
/// non-integer shifts attenuate that single bin.
pub fn shift_image(img: &Image2D, shift: [f64; 2]) -> Result<Image2D> {
    let (rows, cols) = img.shape();
    if !(shift[0].is_finite() && shift[1].is_finite())
        || shift[0].abs() > rows as f64 / 4.0
        || shift[1].abs() > cols as f64 / 4.0
    {
        return Err(Error::invalid(format!(
            "shift ({}, {}) exceeds a quarter of the {rows}x{cols} image",
            shift[0], shift[1]
        )));
    }
    if shift == [0.0, 0.0] {
        return Ok(img.clone());
    }
    let ramp_y = phase_ramp(rows, shift[0]);
    let ramp_x = phase_ramp(cols, shift[1]);
    let fft = Fft2d::new(rows, cols);
    let mut buf = to_complex(img.data());
    fft.forward(&mut buf);
    for i in 0..rows {
        for j in 0..cols {
            buf[i * cols + j] *= ramp_y[i] * ramp_x[j];
        }
    }
    fft.inverse(&mut buf);

    let scale = img.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let worst_imag = buf.iter().fold(0.0f64, |m, c| m.max(c.im.abs()));
    if worst_imag > 1e-9 * scale {
        return Err(Error::Numerical(format!(
            "phase-ramp shift left an imaginary residue of {worst_imag}"
        )));
    }
    Ok(img.with_data(buf.into_iter().map(|c| c.re).collect()))
}

fn phase_ramp(n: usize, s: f64) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            if n.is_multiple_of(2) && k == n / 2 {
                Complex64::new((std::f64::consts::PI * s).cos(), 0.0)
            } else {
                let phi = -2.0 * std::f64::consts::PI * signed_freq(k, n) * s / n as f64;
                Complex64::from_polar(1.0, phi)
            }
        })
        .collect()
}

/// Mean-removed spectrum and norm of the mean-removed image; `None` when flat.
fn centered_spectrum(img: &Image2D, fft: &Fft2d) -> Option<(Vec<Complex64>, f64)> {
    let mean = img.sum() / img.len() as f64;
    let centered: Vec<f64> = img.data().iter().map(|v| v - mean).collect();
    let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 1e-12 * mean.abs().max(f64::MIN_POSITIVE) || norm == 0.0 {
        return None;
    }
    let mut buf = to_complex(&centered);
    fft.forward(&mut buf);
    Some((buf, norm))
}

/// Estimates, for every element, the shift that best aligns it with the
/// central element.
pub fn estimate_shifts(dataset: &IsmDataset, max_shift_px: f64) -> Result<ShiftEstimate> {
    if dataset.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    if !(max_shift_px >= 0.0 && max_shift_px.is_finite()) {
        return Err(Error::invalid("max_shift_px must be non-negative"));
    }
    let geometry = *dataset.geometry();
    let central_index = geometry.central_index();
    let (rows, cols) = dataset.shape();
    let fft = Fft2d::new(rows, cols);
    let Some((reference, ref_norm)) = centered_spectrum(dataset.central(), &fft) else {
        let n = geometry.element_count();
        return Ok(ShiftEstimate {
            geometry,
            shifts: vec![[0.0; 2]; n],
            correlation_peak: vec![0.0; n],
            flat: vec![true; n],
        });
    };

    let per_element: Vec<([f64; 2], f64, bool)> = dataset
        .elements()
        .par_iter()
        .enumerate()
        .map(|(k, img)| {
            if k == central_index {
                return ([0.0, 0.0], 1.0, false);
            }
            let fft = Fft2d::new(rows, cols);
            match centered_spectrum(img, &fft) {
                None => ([0.0, 0.0], 0.0, true),
                Some((spec, norm)) => {
                    let mut corr: Vec<Complex64> =
                        spec.iter().zip(&reference).map(|(a, b)| a.conj() * b).collect();
                    fft.inverse(&mut corr);
                    let denom = norm * ref_norm;
                    let surface: Vec<f64> = corr.iter().map(|c| c.re / denom).collect();
                    let (shift, peak) = locate_peak(&surface, rows, cols, max_shift_px);
                    (shift, peak, false)
                }
            }
        })
        .collect();

    Ok(ShiftEstimate {
        geometry,
        shifts: per_element.iter().map(|e| e.0).collect(),
        correlation_peak: per_element.iter().map(|e| e.1.clamp(-1.0, 1.0)).collect(),
        flat: per_element.iter().map(|e| e.2).collect(),
    })
}

/// Integer argmax of a circular correlation surface within `max_shift` of the
/// origin, refined by a least-squares paraboloid over the 3×3 neighborhood.
fn locate_peak(surface: &[f64], rows: usize, cols: usize, max_shift: f64) -> ([f64; 2], f64) {
    let reach_y = (max_shift.floor() as i64).min(rows as i64 / 2);
    let reach_x = (max_shift.floor() as i64).min(cols as i64 / 2);
    let at = |dy: i64, dx: i64| {
        let i = dy.rem_euclid(rows as i64) as usize;
        let j = dx.rem_euclid(cols as i64) as usize;
        surface[i * cols + j]
    };
    let mut best = (0i64, 0i64);
    let mut best_val = at(0, 0);
    for dy in -reach_y..=reach_y {
        for dx in -reach_x..=reach_x {
            if ((dy * dy + dx * dx) as f64) > max_shift * max_shift {
                continue;
            }
            let v = at(dy, dx);
            if v > best_val {
                best_val = v;
                best = (dy, dx);
            }
        }
    }

    let mut f = [[0.0; 3]; 3];
    for (a, row) in f.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            *v = at(best.0 + a as i64 - 1, best.1 + b as i64 - 1);
        }
    }
    let offset = paraboloid_vertex(&f);
    let mut shift = [best.0 as f64 + offset[0], best.1 as f64 + offset[1]];
    let len = shift[0].hypot(shift[1]);
    if len > max_shift {
        let k = if len > 0.0 { max_shift / len } else { 0.0 };
        shift = [shift[0] * k, shift[1] * k];
    }
    (shift, best_val)
}

/// Vertex `(dy, dx)` of the least-squares quadratic through a 3×3 patch
/// (`f[1][1]` at the origin), limited to one pixel per axis.
fn paraboloid_vertex(f: &[[f64; 3]; 3]) -> [f64; 2] {
    let (mut cy, mut cx, mut cyy, mut cxx, mut cxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, row) in f.iter().enumerate() {
        for (b, &v) in row.iter().enumerate() {
            let y = a as f64 - 1.0;
            let x = b as f64 - 1.0;
            cy += y * v / 6.0;
            cx += x * v / 6.0;
            cyy += (y * y - 2.0 / 3.0) * v / 2.0;
            cxx += (x * x - 2.0 / 3.0) * v / 2.0;
            cxy += x * y * v / 4.0;
        }
    }
    // Stationary point of cy·y + cx·x + cyy·y² + cxx·x² + cxy·x·y.
    let det = 4.0 * cyy * cxx - cxy * cxy;
    let vertex = if cyy < 0.0 && det > 0.0 {
        [
            (-2.0 * cxx * cy + cxy * cx) / det,
            (-2.0 * cyy * cx + cxy * cy) / det,
        ]
    } else {
        // Separable fallback through the center row and column.
        let axis = |m: f64, c: f64, p: f64| {
            let d = m - 2.0 * c + p;
            if d < 0.0 {
                0.5 * (m - p) / d
            } else {
                0.0
            }
        };
        [axis(f[0][1], f[1][1], f[2][1]), axis(f[1][0], f[1][1], f[1][2])]
    };
    [vertex[0].clamp(-1.0, 1.0), vertex[1].clamp(-1.0, 1.0)]
}

/// Shift-and-sum of all elements, accumulated in element order.
pub fn fuse(dataset: &IsmDataset, shifts: &ShiftEstimate) -> Result<Image2D> {
    if shifts.shifts.len() != dataset.len() || shifts.geometry != *dataset.geometry() {
        return Err(Error::invalid(format!(
            "{} shifts for a dataset of {} elements",
            shifts.shifts.len(),
            dataset.len()
        )));
    }
    let shifted: Vec<Image2D> = dataset
        .elements()
        .par_iter()
        .zip(&shifts.shifts)
        .map(|(img, &s)| shift_image(img, s))
        .collect::<Result<_>>()?;
    let mut acc = vec![0.0; shifted[0].len()];
    for img in &shifted {
        for (a, v) in acc.iter_mut().zip(img.data()) {
            *a += v;
        }
    }
    Ok(shifted[0].with_data(acc))
}
