//! Reconstruction quality and resolution measures.

use std::fmt;

use crate::error::{Error, Result};
use crate::image::{frobenius_norm, Image2D};

/// `‖reference − estimate‖_F / ‖reference‖_F`.
pub fn relative_error(reference: &Image2D, estimate: &Image2D) -> Result<f64> {
    if !reference.same_shape(estimate) {
        return Err(Error::invalid(format!(
            "shape mismatch: {:?} vs {:?}",
            reference.shape(),
            estimate.shape()
        )));
    }
    let denom = frobenius_norm(reference);
    if denom == 0.0 {
        return Err(Error::Measurement(
            "relative error undefined for an all-zero reference".into(),
        ));
    }
    let diff: Vec<f64> = reference
        .data()
        .iter()
        .zip(estimate.data())
        .map(|(a, b)| a - b)
        .collect();
    Ok(frobenius_norm(&reference.with_data(diff)) / denom)
}

/// Per-sample errors with their mean and sample standard deviation (n − 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentStats {
    pub errors: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

pub fn aggregate(errors: &[f64]) -> Result<ExperimentStats> {
    if errors.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 samples for a standard deviation, got {}",
            errors.len()
        )));
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(ExperimentStats {
        errors: errors.to_vec(),
        mean,
        std: var.sqrt(),
    })
}

impl ExperimentStats {
    /// `mean±std %` with two decimals, errors expressed in percent.
    pub fn percent_string(&self) -> String {
        format!("{:.2}±{:.2} %", 100.0 * self.mean, 100.0 * self.std)
    }
}

impl fmt::Display for ExperimentStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.percent_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Along a row (varying column).
    Horizontal,
    /// Along a column (varying row).
    Vertical,
}

/// FWHM in pixels of the profile through the global maximum along `axis`.
pub fn fwhm(img: &Image2D, axis: Axis) -> Result<f64> {
    let (r, c) = img.argmax();
    let profile: Vec<f64> = match axis {
        Axis::Horizontal => (0..img.cols()).map(|j| img.get(r, j)).collect(),
        Axis::Vertical => (0..img.rows()).map(|i| img.get(i, c)).collect(),
    };
    fwhm_profile(&profile)
}

/// FWHM of a 1D profile around its maximum, with linear interpolation of the
/// two half-maximum crossings.
pub fn fwhm_profile(profile: &[f64]) -> Result<f64> {
    let mut peak = 0;
    for (k, &v) in profile.iter().enumerate() {
        if v > profile[peak] {
            peak = k;
        }
    }
    if peak == 0 || peak + 1 == profile.len() {
        return Err(Error::Measurement("maximum lies on the boundary".into()));
    }
    let half = 0.5 * profile[peak];
    let left = (0..peak)
        .rev()
        .find(|&k| profile[k] <= half)
        .map(|k| crossing(k as f64, profile[k], profile[k + 1], half))
        .ok_or_else(|| Error::Measurement("no half-maximum crossing left of peak".into()))?;
    let right = (peak + 1..profile.len())
        .find(|&k| profile[k] <= half)
        .map(|k| crossing((k - 1) as f64, profile[k - 1], profile[k], half))
        .ok_or_else(|| Error::Measurement("no half-maximum crossing right of peak".into()))?;
    Ok(right - left)
}

/// Position between `x` and `x + 1` where the segment `a → b` meets `level`.
fn crossing(x: f64, a: f64, b: f64, level: f64) -> f64 {
    if a == b {
        x
    } else {
        x + (level - a) / (b - a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn relative_error_examples() {
        let a = Image2D::from_rows(25.0, &[&[3.0, 4.0], &[0.0, 0.0]]).unwrap();
        let b = Image2D::from_rows(25.0, &[&[0.0, 4.0], &[0.0, 0.0]]).unwrap();
        assert_eq!(relative_error(&a, &a).unwrap(), 0.0);
        let zero = Image2D::zeros(2, 2, 25.0).unwrap();
        assert!((relative_error(&a, &zero).unwrap() - 1.0).abs() < 1e-15);
        assert!((relative_error(&a, &b).unwrap() - 0.6).abs() < 1e-15);
        assert!(matches!(relative_error(&zero, &a), Err(Error::Measurement(_))));
        let other = Image2D::zeros(3, 2, 25.0).unwrap();
        assert!(relative_error(&a, &other).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate(&[0.1, 0.1, 0.1]).unwrap();
        assert!((s.mean - 0.1).abs() < 1e-15);
        assert!(s.std.abs() < 1e-15);
        let s = aggregate(&[0.0, 0.2]).unwrap();
        assert!((s.mean - 0.1).abs() < 1e-15);
        assert!((s.std - 0.141_421_356_237_309_5).abs() < 1e-12);
        assert!(aggregate(&[0.3]).is_err());
    }

    #[test]
    fn table_formatting() {
        let s = ExperimentStats {
            errors: vec![],
            mean: 0.1465,
            std: 0.0267,
        };
        assert_eq!(s.percent_string(), "14.65±2.67 %");
    }

    #[test]
    fn fwhm_examples() {
        assert!((fwhm_profile(&[0.0, 1.0, 2.0, 1.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!((fwhm_profile(&[0.0, 1.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);

        let sigma = 4.0;
        let g: Vec<f64> = (0..61)
            .map(|k| (-0.5 * ((k as f64 - 30.0) / sigma).powi(2)).exp())
            .collect();
        let w = fwhm_profile(&g).unwrap();
        let expected = 2.0 * (2.0 * 2f64.ln()).sqrt() * sigma;
        assert!((w - expected).abs() / expected < 0.02, "{w} vs {expected}");

        let img = Image2D::from_vec(1, 61, 25.0, g).unwrap();
        assert_eq!(fwhm(&img, Axis::Horizontal).unwrap(), w);
    }

    #[test]
    fn fwhm_errors() {
        assert!(matches!(
            fwhm_profile(&[3.0, 1.0, 0.0]),
            Err(Error::Measurement(_))
        ));
        assert!(matches!(
            fwhm_profile(&[0.9, 1.0, 0.8]),
            Err(Error::Measurement(_))
        ));
    }

    proptest! {
        #[test]
        fn scaled_copy_error_is_distance_from_one(
            data in proptest::collection::vec(0.01f64..10.0, 16),
            a in 0.0f64..5.0,
        ) {
            let img = Image2D::from_vec(4, 4, 25.0, data).unwrap();
            let e = relative_error(&img, &img.scaled(a)).unwrap();
            prop_assert!((e - (1.0 - a).abs()).abs() < 1e-12);
        }

        #[test]
        fn joint_scaling_invariance(
            a in proptest::collection::vec(0.01f64..10.0, 9),
            b in proptest::collection::vec(0.0f64..10.0, 9),
            s in 0.01f64..100.0,
        ) {
            let x = Image2D::from_vec(3, 3, 25.0, a).unwrap();
            let y = Image2D::from_vec(3, 3, 25.0, b).unwrap();
            let e1 = relative_error(&x, &y).unwrap();
            let e2 = relative_error(&x.scaled(s), &y.scaled(s)).unwrap();
            prop_assert!((e1 - e2).abs() <= 1e-12 * e1.max(1.0));
        }

        #[test]
        fn mean_within_range(errors in proptest::collection::vec(0.0f64..1.0, 2..40)) {
            let s = aggregate(&errors).unwrap();
            let lo = errors.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s.mean >= lo - 1e-15 && s.mean <= hi + 1e-15);
            let n = errors.len() as f64;
            let m2 = errors.iter().sum::<f64>() / n;
            prop_assert!((m2 - s.mean).abs() < 1e-12);
        }
    }
}
