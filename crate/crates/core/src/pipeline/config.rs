//! Flat `key = value` run configuration.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::apr::DEFAULT_MAX_SHIFT_PX;
use crate::error::{Error, Result};
use crate::forward::AcquisitionConfig;
use crate::phantom::PhantomConfig;
use crate::psf::{DetectorGeometry, OpticalConfig};
use crate::rng::RandomSeed;
use crate::solver::{SolverConfig, TvVariant};

/// Every parameter of a run. The phantom and acquisition seeds inside the
/// module configs are ignored; per-sample seeds are derived from `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub phantom: PhantomConfig,
    pub geometry: DetectorGeometry,
    pub optics: OpticalConfig,
    pub acquisition: AcquisitionConfig,
    pub solver: SolverConfig,
    pub max_shift_px: f64,
    /// Fuse compressive data with the shifts estimated on fully sampled data
    /// instead of re-estimating them from the reconstructions.
    pub reuse_reference_shifts: bool,
    /// Sample every scan point (`A = I`) instead of the skip pattern.
    pub full_mask: bool,
    pub seed: u64,
    pub n_samples: usize,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            phantom: PhantomConfig::default(),
            geometry: DetectorGeometry::default(),
            optics: OpticalConfig::default(),
            acquisition: AcquisitionConfig::default(),
            solver: SolverConfig::default(),
            max_shift_px: DEFAULT_MAX_SHIFT_PX,
            reuse_reference_shifts: false,
            full_mask: false,
            seed: 0,
            n_samples: 25,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::config(format!(
            "invalid value `{value}` for `{key}` (expected true or false)"
        ))),
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.phantom.validate()?;
        self.geometry.validate()?;
        self.optics.validate()?;
        self.acquisition.validate()?;
        self.solver.validate()?;
        if !(self.max_shift_px > 0.0 && self.max_shift_px.is_finite()) {
            return Err(Error::config("max_shift_px must be positive"));
        }
        if self.n_samples == 0 {
            return Err(Error::config("n_samples must be at least 1"));
        }
        Ok(())
    }

    /// Phantom settings for experiment sample `sample`.
    pub fn phantom_for(&self, sample: usize) -> PhantomConfig {
        PhantomConfig {
            seed: RandomSeed(self.seed).derive(2 * sample as u64),
            ..self.phantom.clone()
        }
    }

    /// Acquisition settings for experiment sample `sample`.
    pub fn acquisition_for(&self, sample: usize) -> AcquisitionConfig {
        AcquisitionConfig {
            seed: RandomSeed(self.seed).derive(2 * sample as u64 + 1),
            ..self.acquisition
        }
    }

    /// Parses the text form. Unknown and repeated keys are errors; missing
    /// keys keep their defaults. The result is validated.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::config(format!("line {}: duplicate key `{key}`", n + 1)));
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "rows" => self.phantom.rows = parse(key, v)?,
            "cols" => self.phantom.cols = parse(key, v)?,
            "pixel_size_nm" => self.phantom.pixel_size_nm = parse(key, v)?,
            "n_filaments" => self.phantom.n_filaments = parse(key, v)?,
            "step_px" => self.phantom.step_px = parse(key, v)?,
            "curvature_sigma_rad" => self.phantom.curvature_sigma_rad = parse(key, v)?,
            "intensity_peak" => self.phantom.intensity_peak = parse(key, v)?,
            "linewidth_sigma_px" => self.phantom.linewidth_sigma_px = parse(key, v)?,
            "array_rows" => self.geometry.array_rows = parse(key, v)?,
            "array_cols" => self.geometry.array_cols = parse(key, v)?,
            "element_size_nm" => self.geometry.element_size_nm = parse(key, v)?,
            "element_pitch_nm" => self.geometry.element_pitch_nm = parse(key, v)?,
            "magnification" => self.geometry.magnification = parse(key, v)?,
            "wavelength_exc_nm" => self.optics.wavelength_exc_nm = parse(key, v)?,
            "wavelength_em_nm" => self.optics.wavelength_em_nm = parse(key, v)?,
            "numerical_aperture" => self.optics.numerical_aperture = parse(key, v)?,
            "psf_support_px" => self.optics.psf_support_px = parse(key, v)?,
            "photon_budget" => self.acquisition.photon_budget = parse(key, v)?,
            "beta_init" => self.solver.beta_init = parse(key, v)?,
            "mu_init" => self.solver.mu_init = parse(key, v)?,
            "beta_max" => self.solver.beta_max = parse(key, v)?,
            "mu_max" => self.solver.mu_max = parse(key, v)?,
            "continuation_factor" => self.solver.continuation_factor = parse(key, v)?,
            "tol_rel_change" => self.solver.tol_rel_change = parse(key, v)?,
            "tol_constraint" => self.solver.tol_constraint = parse(key, v)?,
            "max_outer" => self.solver.max_outer = parse(key, v)?,
            "max_inner" => self.solver.max_inner = parse(key, v)?,
            "tv_variant" => {
                self.solver.tv_variant = v.parse::<TvVariant>().map_err(Error::Config)?;
            }
            "nonneg" => self.solver.nonneg = parse_bool(key, v)?,
            "max_shift_px" => self.max_shift_px = parse(key, v)?,
            "reuse_reference_shifts" => self.reuse_reference_shifts = parse_bool(key, v)?,
            "full_mask" => self.full_mask = parse_bool(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "n_samples" => self.n_samples = parse(key, v)?,
            "output_dir" => {
                if v.is_empty() {
                    return Err(Error::config("output_dir must not be empty"));
                }
                self.output_dir = PathBuf::from(v);
            }
            other => return Err(Error::config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Text form with every key; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let p = &self.phantom;
        let g = &self.geometry;
        let o = &self.optics;
        let s = &self.solver;
        let sections: [(&str, Vec<(&str, String)>); 7] = [
            (
                "image",
                vec![
                    ("rows", p.rows.to_string()),
                    ("cols", p.cols.to_string()),
                    ("pixel_size_nm", p.pixel_size_nm.to_string()),
                ],
            ),
            (
                "phantom",
                vec![
                    ("n_filaments", p.n_filaments.to_string()),
                    ("step_px", p.step_px.to_string()),
                    ("curvature_sigma_rad", p.curvature_sigma_rad.to_string()),
                    ("intensity_peak", p.intensity_peak.to_string()),
                    ("linewidth_sigma_px", p.linewidth_sigma_px.to_string()),
                ],
            ),
            (
                "detector",
                vec![
                    ("array_rows", g.array_rows.to_string()),
                    ("array_cols", g.array_cols.to_string()),
                    ("element_size_nm", g.element_size_nm.to_string()),
                    ("element_pitch_nm", g.element_pitch_nm.to_string()),
                    ("magnification", g.magnification.to_string()),
                ],
            ),
            (
                "optics",
                vec![
                    ("wavelength_exc_nm", o.wavelength_exc_nm.to_string()),
                    ("wavelength_em_nm", o.wavelength_em_nm.to_string()),
                    ("numerical_aperture", o.numerical_aperture.to_string()),
                    ("psf_support_px", o.psf_support_px.to_string()),
                ],
            ),
            (
                "acquisition",
                vec![("photon_budget", self.acquisition.photon_budget.to_string())],
            ),
            (
                "solver",
                vec![
                    ("beta_init", s.beta_init.to_string()),
                    ("mu_init", s.mu_init.to_string()),
                    ("beta_max", s.beta_max.to_string()),
                    ("mu_max", s.mu_max.to_string()),
                    ("continuation_factor", s.continuation_factor.to_string()),
                    ("tol_rel_change", s.tol_rel_change.to_string()),
                    ("tol_constraint", s.tol_constraint.to_string()),
                    ("max_outer", s.max_outer.to_string()),
                    ("max_inner", s.max_inner.to_string()),
                    ("tv_variant", s.tv_variant.as_str().to_string()),
                    ("nonneg", s.nonneg.to_string()),
                ],
            ),
            (
                "run",
                vec![
                    ("max_shift_px", self.max_shift_px.to_string()),
                    ("reuse_reference_shifts", self.reuse_reference_shifts.to_string()),
                    ("full_mask", self.full_mask.to_string()),
                    ("seed", self.seed.to_string()),
                    ("n_samples", self.n_samples.to_string()),
                    ("output_dir", self.output_dir.display().to_string()),
                ],
            ),
        ];
        let mut out = String::new();
        for (i, (name, pairs)) in sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&format!("# {name}\n"));
            for (k, v) in pairs {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}
