//! Tubulin-like filament phantoms.
//!
//! Each filament is a random walk with a slowly wandering heading. Walk points
//! are splatted bilinearly, the deposit is blurred by a disc-truncated Gaussian
//! and the result rescaled so its brightest pixel equals `intensity_peak`.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::Image2D;
use crate::rng::RandomSeed;

/// Blur kernel cut-off radius in units of `linewidth_sigma_px`.
const BLUR_RADIUS_SIGMAS: f64 = 2.5;

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomConfig {
    pub rows: usize,
    pub cols: usize,
    pub pixel_size_nm: f64,
    pub n_filaments: usize,
    pub step_px: f64,
    pub curvature_sigma_rad: f64,
    pub intensity_peak: f64,
    pub linewidth_sigma_px: f64,
    pub seed: RandomSeed,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            rows: 256,
            cols: 256,
            pixel_size_nm: 25.0,
            n_filaments: 15,
            step_px: 1.0,
            curvature_sigma_rad: 0.08,
            intensity_peak: 1.0,
            linewidth_sigma_px: 1.0,
            seed: RandomSeed(0),
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::config("phantom dimensions must be positive"));
        }
        if !(self.pixel_size_nm > 0.0 && self.pixel_size_nm.is_finite()) {
            return Err(Error::config("pixel_size_nm must be positive"));
        }
        if self.n_filaments == 0 {
            return Err(Error::config("n_filaments must be at least 1"));
        }
        if !(self.step_px > 0.0 && self.step_px.is_finite()) {
            return Err(Error::config("step_px must be positive"));
        }
        if !(self.curvature_sigma_rad >= 0.0 && self.curvature_sigma_rad.is_finite()) {
            return Err(Error::config("curvature_sigma_rad must be non-negative"));
        }
        if !(self.intensity_peak > 0.0 && self.intensity_peak.is_finite()) {
            return Err(Error::config("intensity_peak must be positive"));
        }
        if !(self.linewidth_sigma_px > 0.0 && self.linewidth_sigma_px.is_finite()) {
            return Err(Error::config("linewidth_sigma_px must be positive"));
        }
        Ok(())
    }

    pub fn key_values(&self) -> Vec<(String, String)> {
        vec![
            ("rows".into(), self.rows.to_string()),
            ("cols".into(), self.cols.to_string()),
            ("pixel_size_nm".into(), self.pixel_size_nm.to_string()),
            ("n_filaments".into(), self.n_filaments.to_string()),
            ("step_px".into(), self.step_px.to_string()),
            ("curvature_sigma_rad".into(), self.curvature_sigma_rad.to_string()),
            ("intensity_peak".into(), self.intensity_peak.to_string()),
            ("linewidth_sigma_px".into(), self.linewidth_sigma_px.to_string()),
            ("seed".into(), self.seed.value().to_string()),
        ]
    }
}

pub fn generate_phantom(cfg: &PhantomConfig) -> Result<Image2D> {
    cfg.validate()?;
    let (rows, cols) = (cfg.rows, cfg.cols);
    let mut rng = cfg.seed.stream(0);
    let curvature = Normal::new(0.0, cfg.curvature_sigma_rad)
        .map_err(|e| Error::config(format!("curvature_sigma_rad: {e}")))?;

    let mut deposit = vec![0.0; rows * cols];
    // A walk that keeps circling inside the frame is cut off here.
    let max_steps = (8.0 * (rows + cols) as f64 / cfg.step_px).ceil() as usize;

    for _ in 0..cfg.n_filaments {
        let mut y = rng.random::<f64>() * rows as f64 - 0.5;
        let mut x = rng.random::<f64>() * cols as f64 - 0.5;
        let mut heading = rng.random::<f64>() * TAU;
        for _ in 0..max_steps {
            splat(&mut deposit, rows, cols, y, x);
            y += cfg.step_px * heading.sin();
            x += cfg.step_px * heading.cos();
            if y < -0.5 || x < -0.5 || y > rows as f64 - 0.5 || x > cols as f64 - 0.5 {
                break;
            }
            heading += curvature.sample(&mut rng);
        }
    }

    let blurred = disc_gaussian_blur(&deposit, rows, cols, cfg.linewidth_sigma_px);
    let peak = blurred.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::Numerical("phantom rendered empty".into()));
    }
    let scale = cfg.intensity_peak / peak;
    let data = blurred.into_iter().map(|v| v * scale).collect();
    Image2D::from_vec(rows, cols, cfg.pixel_size_nm, data)
}

/// Bilinear deposit of unit mass at `(y, x)` (pixel centers at integers).
fn splat(buf: &mut [f64], rows: usize, cols: usize, y: f64, x: f64) {
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
            let (i, j) = (y0 as i64 + dy, x0 as i64 + dx);
            let w = wy * wx;
            if w > 0.0 && i >= 0 && j >= 0 && (i as usize) < rows && (j as usize) < cols {
                buf[i as usize * cols + j as usize] += w;
            }
        }
    }
}

fn disc_gaussian_blur(src: &[f64], rows: usize, cols: usize, sigma: f64) -> Vec<f64> {
    let radius = BLUR_RADIUS_SIGMAS * sigma;
    let r = radius.floor() as i64;
    let mut taps = Vec::new();
    for a in -r..=r {
        for b in -r..=r {
            let d2 = (a * a + b * b) as f64;
            if d2 <= radius * radius {
                taps.push((a, b, (-0.5 * d2 / (sigma * sigma)).exp()));
            }
        }
    }
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let v = src[i * cols + j];
            if v == 0.0 {
                continue;
            }
            for &(a, b, w) in &taps {
                let (ii, jj) = (i as i64 + a, j as i64 + b);
                if ii >= 0 && jj >= 0 && (ii as usize) < rows && (jj as usize) < cols {
                    out[ii as usize * cols + jj as usize] += v * w;
                }
            }
        }
    }
    out
}
