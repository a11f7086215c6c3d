//! Forward differences, their adjoint, the TV norm and shrinkage.
//!
//! `dv(i, j) = x(i+1, j) − x(i, j)` and `dh(i, j) = x(i, j+1) − x(i, j)`;
//! differences that would leave the grid are zero (last row of `dv`, last
//! column of `dh`).

use crate::image::Image2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TvVariant {
    #[default]
    Anisotropic,
    Isotropic,
}

impl TvVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            TvVariant::Anisotropic => "anisotropic",
            TvVariant::Isotropic => "isotropic",
        }
    }
}

impl std::str::FromStr for TvVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "anisotropic" => Ok(TvVariant::Anisotropic),
            "isotropic" => Ok(TvVariant::Isotropic),
            other => Err(format!("unknown tv variant `{other}`")),
        }
    }
}

pub(crate) fn grad_into(x: &[f64], rows: usize, cols: usize, dv: &mut [f64], dh: &mut [f64]) {
    for i in 0..rows {
        let row = i * cols;
        for j in 0..cols {
            let k = row + j;
            dv[k] = if i + 1 < rows { x[k + cols] - x[k] } else { 0.0 };
            dh[k] = if j + 1 < cols { x[k + 1] - x[k] } else { 0.0 };
        }
    }
}

/// `out = Dᵀ (pv, ph)`.
pub(crate) fn grad_adjoint_into(pv: &[f64], ph: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    for i in 0..rows {
        let row = i * cols;
        for j in 0..cols {
            let k = row + j;
            let mut acc = 0.0;
            if i + 1 < rows {
                acc -= pv[k];
            }
            if i > 0 {
                acc += pv[k - cols];
            }
            if j + 1 < cols {
                acc -= ph[k];
            }
            if j > 0 {
                acc += ph[k - 1];
            }
            out[k] = acc;
        }
    }
}

/// Vertical and horizontal forward differences.
pub fn gradient(img: &Image2D) -> (Image2D, Image2D) {
    let (rows, cols) = img.shape();
    let mut dv = vec![0.0; img.len()];
    let mut dh = vec![0.0; img.len()];
    grad_into(img.data(), rows, cols, &mut dv, &mut dh);
    (img.with_data(dv), img.with_data(dh))
}

/// `Dᵀ (pv, ph)`.
pub fn gradient_adjoint(pv: &Image2D, ph: &Image2D) -> Image2D {
    assert!(pv.same_shape(ph), "gradient fields differ in shape");
    let (rows, cols) = pv.shape();
    let mut out = vec![0.0; pv.len()];
    grad_adjoint_into(pv.data(), ph.data(), rows, cols, &mut out);
    pv.with_data(out)
}

/// Discrete divergence, the negative adjoint of [`gradient`].
pub fn divergence(pv: &Image2D, ph: &Image2D) -> Image2D {
    gradient_adjoint(pv, ph).scaled(-1.0)
}

pub fn tv_norm(img: &Image2D, variant: TvVariant) -> f64 {
    let (dv, dh) = gradient(img);
    let pairs = dv.data().iter().zip(dh.data());
    match variant {
        TvVariant::Anisotropic => pairs.map(|(a, b)| a.abs() + b.abs()).sum(),
        TvVariant::Isotropic => pairs.map(|(a, b)| a.hypot(*b)).sum(),
    }
}

/// Soft threshold `sign(z)·max(|z| − t, 0)`.
#[inline]
pub fn shrink_scalar(z: f64, threshold: f64) -> f64 {
    let m = z.abs() - threshold;
    if m > 0.0 {
        m.copysign(z)
    } else {
        0.0
    }
}

/// Vector shrinkage `max(‖z‖ − t, 0)·z/‖z‖`, zero at `z = 0`.
#[inline]
pub fn shrink_pair(z: [f64; 2], threshold: f64) -> [f64; 2] {
    let n = z[0].hypot(z[1]);
    if n <= threshold || n == 0.0 {
        [0.0, 0.0]
    } else {
        let f = (n - threshold) / n;
        [f * z[0], f * z[1]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::random_image;

    #[test]
    fn tv_examples() {
        let c = Image2D::new(5, 4, 25.0, 2.5).unwrap();
        assert_eq!(tv_norm(&c, TvVariant::Anisotropic), 0.0);
        assert_eq!(tv_norm(&c, TvVariant::Isotropic), 0.0);
        let x = Image2D::from_rows(25.0, &[&[0.0, 1.0], &[2.0, 3.0]]).unwrap();
        assert!((tv_norm(&x, TvVariant::Anisotropic) - 6.0).abs() < 1e-15);
        // Pairs (dv, dh): (2,1), (2,0), (0,1), (0,0).
        let iso = 5f64.sqrt() + 2.0 + 1.0;
        assert!((tv_norm(&x, TvVariant::Isotropic) - iso).abs() < 1e-15);
    }

    #[test]
    fn gradient_examples() {
        let c = Image2D::new(3, 3, 25.0, 7.0).unwrap();
        let (dv, dh) = gradient(&c);
        assert!(dv.data().iter().chain(dh.data()).all(|&v| v == 0.0));
        let row = Image2D::from_rows(25.0, &[&[0.0, 1.0]]).unwrap();
        let (dv, dh) = gradient(&row);
        assert_eq!(dh.data(), &[1.0, 0.0]);
        assert_eq!(dv.data(), &[0.0, 0.0]);
    }

    #[test]
    fn adjoint_identity() {
        for seed in 0..5 {
            let x = random_image(8, 8, seed);
            let pv = random_image(8, 8, seed + 100);
            let ph = random_image(8, 8, seed + 200);
            let (dv, dh) = gradient(&x);
            let lhs: f64 = dv
                .data()
                .iter()
                .zip(pv.data())
                .chain(dh.data().iter().zip(ph.data()))
                .map(|(a, b)| a * b)
                .sum();
            let adj = gradient_adjoint(&pv, &ph);
            let rhs: f64 = x.data().iter().zip(adj.data()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12);
            let div = divergence(&pv, &ph);
            assert!(div.data().iter().zip(adj.data()).all(|(a, b)| *a == -b));
        }
    }

    #[test]
    fn shrink_examples() {
        assert_eq!(shrink_scalar(3.0, 1.0), 2.0);
        assert_eq!(shrink_scalar(-0.5, 1.0), 0.0);
        assert_eq!(shrink_scalar(-3.0, 1.0), -2.0);
        assert_eq!(shrink_pair([3.0, 4.0], 5.0), [0.0, 0.0]);
        assert_eq!(shrink_pair([0.0, 0.0], 0.0), [0.0, 0.0]);
        let s = shrink_pair([3.0, 4.0], 2.5);
        assert!((s[0] - 1.5).abs() < 1e-15 && (s[1] - 2.0).abs() < 1e-15);
    }

    /// `|w| + β/2 (w − z)²` perturbed around the shrinkage solution never drops.
    #[test]
    fn shrinkage_solves_its_subproblem() {
        let beta = 3.0;
        let obj_scalar = |w: f64, z: f64| w.abs() + 0.5 * beta * (w - z).powi(2);
        let obj_pair = |w: [f64; 2], z: [f64; 2]| {
            w[0].hypot(w[1]) + 0.5 * beta * ((w[0] - z[0]).powi(2) + (w[1] - z[1]).powi(2))
        };
        for k in -40..=40 {
            let z = k as f64 * 0.05;
            let w = shrink_scalar(z, 1.0 / beta);
            for eps in [1e-4, -1e-4] {
                assert!(obj_scalar(w + eps, z) >= obj_scalar(w, z));
            }
            let zp = [z, 0.7 - 0.3 * z];
            let wp = shrink_pair(zp, 1.0 / beta);
            for e in [[1e-4, 0.0], [-1e-4, 0.0], [0.0, 1e-4], [0.0, -1e-4]] {
                assert!(obj_pair([wp[0] + e[0], wp[1] + e[1]], zp) >= obj_pair(wp, zp) - 1e-15);
            }
        }
    }
}
