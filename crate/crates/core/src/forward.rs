//! Simulated ISM acquisition: blur by each element's PSF, then shot noise.

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::Fft2d;
use crate::image::{Image2D, IsmDataset};
use crate::psf::PsfStack;
use crate::rng::RandomSeed;

/// Kernels at or below this many taps are convolved directly.
const DIRECT_MAX_TAPS: usize = 81;

fn check_kernel(img: &Image2D, kernel: &Image2D) -> Result<()> {
    if kernel.rows().is_multiple_of(2) || kernel.cols().is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "kernel must be odd-sized, got {}x{}",
            kernel.rows(),
            kernel.cols()
        )));
    }
    if img.pixel_size_nm() != kernel.pixel_size_nm() {
        return Err(Error::invalid(format!(
            "pixel size mismatch: image {} nm, kernel {} nm",
            img.pixel_size_nm(),
            kernel.pixel_size_nm()
        )));
    }
    Ok(())
}

/// Linear convolution with replicate (edge-clamp) boundary; output has the
/// image's shape.
pub fn convolve2d(img: &Image2D, kernel: &Image2D) -> Result<Image2D> {
    if kernel.len() <= DIRECT_MAX_TAPS {
        convolve2d_direct(img, kernel)
    } else {
        convolve2d_fft(img, kernel)
    }
}

pub fn convolve2d_direct(img: &Image2D, kernel: &Image2D) -> Result<Image2D> {
    check_kernel(img, kernel)?;
    let (rows, cols) = img.shape();
    let (kr, kc) = kernel.shape();
    let (hr, hc) = ((kr / 2) as i64, (kc / 2) as i64);
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = 0.0;
            for a in 0..kr {
                let si = clamp(i as i64 - (a as i64 - hr), rows);
                for b in 0..kc {
                    let sj = clamp(j as i64 - (b as i64 - hc), cols);
                    acc += kernel.get(a, b) * img.get(si, sj);
                }
            }
            out[i * cols + j] = acc;
        }
    }
    Ok(img.with_data(out))
}

/// Frequency-domain path: replicate-pad by the kernel half-size, zero-pad to
/// the full linear-convolution size, multiply spectra, crop.
pub fn convolve2d_fft(img: &Image2D, kernel: &Image2D) -> Result<Image2D> {
    check_kernel(img, kernel)?;
    let (rows, cols) = img.shape();
    let (kr, kc) = kernel.shape();
    let (hr, hc) = (kr / 2, kc / 2);
    let (pr, pc) = (rows + 2 * hr, cols + 2 * hc);
    let (fr, fc) = (pr + kr - 1, pc + kc - 1);

    let mut a = vec![Complex64::new(0.0, 0.0); fr * fc];
    for i in 0..pr {
        let si = (i as i64 - hr as i64).clamp(0, rows as i64 - 1) as usize;
        for j in 0..pc {
            let sj = (j as i64 - hc as i64).clamp(0, cols as i64 - 1) as usize;
            a[i * fc + j].re = img.get(si, sj);
        }
    }
    let mut k = vec![Complex64::new(0.0, 0.0); fr * fc];
    for i in 0..kr {
        for j in 0..kc {
            k[i * fc + j].re = kernel.get(i, j);
        }
    }
    let fft = Fft2d::new(fr, fc);
    fft.forward(&mut a);
    fft.forward(&mut k);
    for (x, y) in a.iter_mut().zip(&k) {
        *x *= y;
    }
    fft.inverse(&mut a);

    // Full convolution index of padded pixel p is p + half; padded pixel p is
    // image pixel p - half, so image pixel i sits at i + 2·half.
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(a[(i + 2 * hr) * fc + (j + 2 * hc)].re);
        }
    }
    Ok(img.with_data(out))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionConfig {
    /// Expected photon count at the brightest pixel of the central noiseless image.
    pub photon_budget: f64,
    pub seed: RandomSeed,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            photon_budget: 100.0,
            seed: RandomSeed(0),
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.photon_budget > 0.0 && self.photon_budget.is_finite()) {
            return Err(Error::config("photon_budget must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Acquisition {
    pub noisy: IsmDataset,
    pub noiseless: IsmDataset,
}

/// Draws `Poisson(mean)` independently per pixel from substream `stream`.
pub fn poisson_noise(mean: &Image2D, seed: RandomSeed, stream: u64) -> Result<Image2D> {
    let mut rng = seed.stream(stream);
    let mut out = Vec::with_capacity(mean.len());
    for &m in mean.data() {
        if m < 0.0 {
            return Err(Error::invalid(format!("negative Poisson mean {m}")));
        }
        let v = if m == 0.0 {
            0.0
        } else {
            Poisson::new(m)
                .map_err(|e| Error::Numerical(format!("Poisson({m}): {e}")))?
                .sample(&mut rng)
        };
        out.push(v);
    }
    Ok(mean.with_data(out))
}

pub fn acquire(phantom: &Image2D, psfs: &PsfStack, cfg: &AcquisitionConfig) -> Result<Acquisition> {
    cfg.validate()?;
    if phantom.pixel_size_nm() != psfs.psfs.pixel_size_nm() {
        return Err(Error::invalid(format!(
            "phantom pixel size {} nm differs from PSF pixel size {} nm",
            phantom.pixel_size_nm(),
            psfs.psfs.pixel_size_nm()
        )));
    }
    let blurred: Vec<Image2D> = psfs
        .psfs
        .elements()
        .par_iter()
        .map(|psf| {
            // The true convolution of non-negative inputs is non-negative;
            // clip FFT round-off.
            convolve2d(phantom, psf).map(|img| {
                let data = img.data().iter().map(|v| v.max(0.0)).collect();
                img.with_data(data)
            })
        })
        .collect::<Result<_>>()?;

    let central_max = blurred[psfs.geometry().central_index()].max();
    let scale = if central_max > 0.0 {
        cfg.photon_budget / central_max
    } else {
        1.0
    };
    let noiseless: Vec<Image2D> = blurred.iter().map(|img| img.scaled(scale)).collect();
    let noisy: Vec<Image2D> = noiseless
        .par_iter()
        .enumerate()
        .map(|(k, mean)| poisson_noise(mean, cfg.seed, k as u64))
        .collect::<Result<_>>()?;

    let geometry = *psfs.geometry();
    Ok(Acquisition {
        noisy: IsmDataset::new(noisy, geometry)?,
        noiseless: IsmDataset::new(noiseless, geometry)?,
    })
}

#[cfg(test)]
pub(crate) fn random_image(rows: usize, cols: usize, seed: u64) -> Image2D {
    use rand::Rng;
    let mut rng = RandomSeed(seed).stream(1000);
    let data = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
    Image2D::from_vec(rows, cols, 25.0, data).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psf::{generate_psf_stack, DetectorGeometry, OpticalConfig};

    fn gaussian_kernel(n: usize, sigma: f64) -> Image2D {
        let h = (n / 2) as f64;
        let mut v: Vec<f64> = (0..n * n)
            .map(|k| {
                let (i, j) = ((k / n) as f64 - h, (k % n) as f64 - h);
                (-(i * i + j * j) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
        Image2D::from_vec(n, n, 25.0, v).unwrap()
    }

    #[test]
    fn delta_reproduces_kernel() {
        let mut d = vec![0.0; 31 * 31];
        d[15 * 31 + 15] = 1.0;
        let delta = Image2D::from_vec(31, 31, 25.0, d).unwrap();
        let k = random_image(9, 7, 3);
        for out in [
            convolve2d_direct(&delta, &k).unwrap(),
            convolve2d_fft(&delta, &k).unwrap(),
        ] {
            for a in 0..9 {
                for b in 0..7 {
                    assert!((out.get(15 - 4 + a, 15 - 3 + b) - k.get(a, b)).abs() < 1e-10);
                }
            }
            assert!((out.sum() - k.sum()).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_preserved_by_unit_kernel() {
        let img = Image2D::new(20, 17, 25.0, 3.25).unwrap();
        let k = gaussian_kernel(11, 2.0);
        for out in [
            convolve2d_direct(&img, &k).unwrap(),
            convolve2d_fft(&img, &k).unwrap(),
        ] {
            assert!(out.data().iter().all(|v| (v - 3.25).abs() < 1e-9));
        }
    }

    #[test]
    fn scalar_kernel() {
        let img = Image2D::from_rows(25.0, &[&[1.0, 0.0], &[0.0, 0.0]]).unwrap();
        let k = Image2D::new(1, 1, 25.0, 2.0).unwrap();
        assert_eq!(convolve2d(&img, &k).unwrap().data(), &[2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn even_kernel_and_pixel_mismatch_rejected() {
        let img = random_image(8, 8, 1);
        let even = Image2D::new(2, 3, 25.0, 1.0).unwrap();
        assert!(matches!(convolve2d(&img, &even), Err(Error::InvalidArgument(_))));
        let other = Image2D::new(3, 3, 50.0, 1.0).unwrap();
        assert!(convolve2d(&img, &other).is_err());
    }

    #[test]
    fn direct_and_fft_agree_on_64() {
        let img = random_image(64, 64, 11);
        for (kr, kc, seed) in [(3, 3, 1), (9, 15, 2), (21, 21, 3)] {
            let k = random_image(kr, kc, seed);
            let a = convolve2d_direct(&img, &k).unwrap();
            let b = convolve2d_fft(&img, &k).unwrap();
            let scale = a.frobenius_norm();
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1e-9 * scale);
            }
        }
    }

    fn small_stack() -> PsfStack {
        let geometry = DetectorGeometry {
            array_rows: 3,
            array_cols: 3,
            ..Default::default()
        };
        generate_psf_stack(&geometry, &OpticalConfig::default(), 25.0).unwrap()
    }

    #[test]
    fn zero_phantom_stays_zero() {
        let stack = small_stack();
        let phantom = Image2D::zeros(32, 32, 25.0).unwrap();
        let acq = acquire(&phantom, &stack, &AcquisitionConfig::default()).unwrap();
        for (n, c) in acq.noisy.elements().iter().zip(acq.noiseless.elements()) {
            assert!(c.data().iter().all(|&v| v == 0.0));
            assert_eq!(n, c);
        }
    }

    #[test]
    fn budget_sets_central_peak_and_noise_is_reproducible() {
        let stack = small_stack();
        let phantom = random_image(40, 40, 4);
        let cfg = AcquisitionConfig {
            photon_budget: 1e6,
            seed: RandomSeed(8),
        };
        let a = acquire(&phantom, &stack, &cfg).unwrap();
        let b = acquire(&phantom, &stack, &cfg).unwrap();
        assert_eq!(a.noisy, b.noisy);
        let central = a.noiseless.central();
        assert!((central.max() - 1e6).abs() < 1e-6);
        let (r, c) = central.argmax();
        let noisy = a.noisy.central().get(r, c);
        assert!(((noisy - 1e6) / 1e6).abs() < 0.01);
        assert!(AcquisitionConfig {
            photon_budget: 0.0,
            seed: RandomSeed(0)
        }
        .validate()
        .is_err());
    }

    #[test]
    fn element_sums_match_for_interior_phantoms() {
        let stack = small_stack();
        let mut data = vec![0.0; 96 * 96];
        for i in 40..56 {
            for j in 30..70 {
                data[i * 96 + j] = 1.0 + ((i * j) % 7) as f64;
            }
        }
        let phantom = Image2D::from_vec(96, 96, 25.0, data).unwrap();
        let acq = acquire(&phantom, &stack, &AcquisitionConfig::default()).unwrap();
        let reference = acq.noiseless.central().sum();
        for e in acq.noiseless.elements() {
            assert!((e.sum() - reference).abs() <= 1e-6 * reference);
        }
    }

    #[test]
    fn poisson_mean_and_dispersion() {
        for mean in [3.0, 40.0] {
            let m = Image2D::new(100, 120, 25.0, mean).unwrap();
            let draws = poisson_noise(&m, RandomSeed(3), 0).unwrap();
            let n = draws.len() as f64;
            let avg = draws.sum() / n;
            let var = draws.data().iter().map(|v| (v - avg).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((avg - mean).abs() < 4.0 * (mean / n).sqrt(), "mean {avg}");
            let ratio = var / avg;
            assert!((0.9..=1.1).contains(&ratio), "var/mean {ratio}");
        }
    }
}
