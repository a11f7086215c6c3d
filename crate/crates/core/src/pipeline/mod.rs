//! Configuration and end-to-end commands.
//!
//! Every command writes into an output directory that it creates on demand,
//! along with a copy of the configuration it ran with (`config.txt`). Work is
//! spread with rayon; callers pick the pool size by running a command inside
//! `ThreadPool::install`.

mod config;

pub use config::PipelineConfig;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::apr::{estimate_shifts, fuse, ShiftEstimate};
use crate::error::{Error, Result};
use crate::forward::acquire;
use crate::image::{Image2D, IsmDataset};
use crate::io::{export_png16, read_stack, write_bytes, write_key_values, write_raster, write_stack};
use crate::metrics::{aggregate, relative_error, ExperimentStats};
use crate::phantom::generate_phantom;
use crate::psf::{generate_psf_stack, header_pairs, DetectorGeometry, PsfStack};
use crate::sampling::{apply_a, make_skip_mask, SamplingMask};
use crate::solver::{solve_tv, SolverReport};

const DONE_MARKER: &str = "done";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_config_copy(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    write_bytes(&out.join("config.txt"), cfg.to_text().as_bytes())
}

fn psf_stack(cfg: &PipelineConfig) -> Result<PsfStack> {
    generate_psf_stack(&cfg.geometry, &cfg.optics, cfg.phantom.pixel_size_nm)
}

/// The skip pattern, or every scan point when `full_mask` is set.
pub fn sampling_mask(cfg: &PipelineConfig, rows: usize, cols: usize) -> Result<SamplingMask> {
    if cfg.full_mask {
        SamplingMask::full(rows, cols)
    } else {
        make_skip_mask(rows, cols)
    }
}

/// Writes `psf.cisms` and its `psf.txt` sidecar.
pub fn cmd_psf(cfg: &PipelineConfig, out: &Path) -> Result<PsfStack> {
    cfg.validate()?;
    let stack = psf_stack(cfg)?;
    write_config_copy(cfg, out)?;
    write_stack(stack.psfs.elements(), out.join("psf.cisms"))?;
    let mut header = header_pairs(&cfg.geometry, &cfg.optics, cfg.phantom.pixel_size_nm);
    header.push(("element_count".into(), stack.psfs.len().to_string()));
    write_key_values(out.join("psf.txt"), &header)?;
    Ok(stack)
}

/// A simulated acquisition with its ground truth.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub phantom: Image2D,
    pub noiseless: IsmDataset,
    pub noisy: IsmDataset,
}

/// Phantom and acquisition of experiment sample `sample`.
pub fn simulate_sample(cfg: &PipelineConfig, psfs: &PsfStack, sample: usize) -> Result<Simulation> {
    let phantom = generate_phantom(&cfg.phantom_for(sample))?;
    let acq = acquire(&phantom, psfs, &cfg.acquisition_for(sample))?;
    Ok(Simulation {
        phantom,
        noiseless: acq.noiseless,
        noisy: acq.noisy,
    })
}

/// Writes `phantom.cism`, `noiseless.cisms` and `noisy.cisms` for sample 0
/// of the configured seed.
pub fn cmd_simulate(cfg: &PipelineConfig, out: &Path) -> Result<Simulation> {
    cfg.validate()?;
    let psfs = psf_stack(cfg)?;
    let sim = simulate_sample(cfg, &psfs, 0)?;
    write_config_copy(cfg, out)?;
    write_raster(&sim.phantom, out.join("phantom.cism"))?;
    write_stack(sim.noiseless.elements(), out.join("noiseless.cisms"))?;
    write_stack(sim.noisy.elements(), out.join("noisy.cisms"))?;
    let mut meta = cfg.phantom_for(0).key_values();
    meta.push((
        "acquisition_seed".into(),
        cfg.acquisition_for(0).seed.value().to_string(),
    ));
    meta.push(("photon_budget".into(), cfg.acquisition.photon_budget.to_string()));
    write_key_values(out.join("simulation.txt"), &meta)?;
    Ok(sim)
}

/// Reads a CISMS stack as a dataset laid out by the configured detector.
pub fn load_dataset(cfg: &PipelineConfig, path: &Path) -> Result<IsmDataset> {
    let elements = read_stack(path)?;
    if elements.len() != cfg.geometry.element_count() {
        return Err(Error::invalid(format!(
            "{} holds {} images but the detector has {} elements",
            path.display(),
            elements.len(),
            cfg.geometry.element_count()
        )));
    }
    IsmDataset::new(elements, cfg.geometry)
}

/// Samples every element with `mask` and reconstructs it independently.
pub fn reconstruct_dataset(
    cfg: &PipelineConfig,
    dataset: &IsmDataset,
    mask: &SamplingMask,
) -> Result<(IsmDataset, Vec<SolverReport>)> {
    let solved: Vec<(Image2D, SolverReport)> = dataset
        .elements()
        .par_iter()
        .map(|img| {
            let y = apply_a(mask, img)?;
            solve_tv(mask, &y, &cfg.solver, None)
        })
        .collect::<Result<_>>()?;
    let (images, reports): (Vec<_>, Vec<_>) = solved.into_iter().unzip();
    Ok((IsmDataset::new(images, *dataset.geometry())?, reports))
}

fn element_tag(geometry: &DetectorGeometry, k: usize) -> String {
    let (r, c) = geometry.element_position(k);
    format!("element_{r}_{c}")
}

/// One row per element: `element_row,element_col,outer_iterations,
/// final_constraint_residual,final_rel_change,converged`.
pub fn reports_csv(geometry: &DetectorGeometry, reports: &[SolverReport]) -> String {
    let mut s = String::from(
        "element_row,element_col,outer_iterations,final_constraint_residual,final_rel_change,converged\n",
    );
    for (k, r) in reports.iter().enumerate() {
        let (row, col) = geometry.element_position(k);
        s.push_str(&format!(
            "{row},{col},{},{:e},{:e},{}\n",
            r.outer_iterations, r.final_constraint_residual, r.final_rel_change, r.converged
        ));
    }
    s
}

/// Writes `reconstructed.cisms`, `mask.pbm`, `solver_reports.csv` and a
/// key-value report plus objective trace per element under `reports/`.
pub fn cmd_reconstruct(
    cfg: &PipelineConfig,
    dataset_path: &Path,
    out: &Path,
) -> Result<(IsmDataset, Vec<SolverReport>)> {
    cfg.validate()?;
    let dataset = load_dataset(cfg, dataset_path)?;
    let (rows, cols) = dataset.shape();
    let mask = sampling_mask(cfg, rows, cols)?;
    let (recon, reports) = reconstruct_dataset(cfg, &dataset, &mask)?;

    write_config_copy(cfg, out)?;
    write_stack(recon.elements(), out.join("reconstructed.cisms"))?;
    mask.write_pbm(out.join("mask.pbm"))?;
    write_bytes(
        &out.join("solver_reports.csv"),
        reports_csv(recon.geometry(), &reports).as_bytes(),
    )?;
    let dir = out.join("reports");
    ensure_dir(&dir)?;
    for (k, r) in reports.iter().enumerate() {
        let tag = element_tag(recon.geometry(), k);
        let mut kv = r.key_values();
        kv.push(("measurements".into(), mask.sampled_count().to_string()));
        write_key_values(dir.join(format!("{tag}.txt")), &kv)?;
        write_bytes(&dir.join(format!("{tag}_trace.csv")), r.trace_csv().as_bytes())?;
    }
    Ok((recon, reports))
}

/// Confocal image (central element), APR-fused ISM image and the shifts used.
#[derive(Debug, Clone)]
pub struct Fusion {
    pub confocal: Image2D,
    pub ism: Image2D,
    pub shifts: ShiftEstimate,
}

pub fn fuse_dataset(dataset: &IsmDataset, max_shift_px: f64) -> Result<Fusion> {
    let shifts = estimate_shifts(dataset, max_shift_px)?;
    fuse_with(dataset, shifts)
}

fn fuse_with(dataset: &IsmDataset, shifts: ShiftEstimate) -> Result<Fusion> {
    let ism = fuse(dataset, &shifts)?;
    Ok(Fusion {
        confocal: dataset.central().clone(),
        ism,
        shifts,
    })
}

/// Writes `confocal.cism`, `ism.cism`, their PNG previews and `shifts.csv`.
pub fn cmd_fuse(cfg: &PipelineConfig, dataset_path: &Path, out: &Path) -> Result<Fusion> {
    cfg.validate()?;
    let dataset = load_dataset(cfg, dataset_path)?;
    let fusion = fuse_dataset(&dataset, cfg.max_shift_px)?;
    write_config_copy(cfg, out)?;
    write_raster(&fusion.confocal, out.join("confocal.cism"))?;
    write_raster(&fusion.ism, out.join("ism.cism"))?;
    export_png16(&fusion.confocal, out.join("confocal.png"))?;
    export_png16(&fusion.ism, out.join("ism.png"))?;
    write_bytes(&out.join("shifts.csv"), fusion.shifts.to_csv().as_bytes())?;
    Ok(fusion)
}

/// The four panels of one experiment sample.
#[derive(Debug, Clone)]
pub struct Panels {
    pub confocal_full: Image2D,
    pub ism_full: Image2D,
    pub confocal_compressive: Image2D,
    pub ism_compressive: Image2D,
}

const PANEL_FILES: [&str; 4] = [
    "a_confocal_full",
    "b_ism_full",
    "c_confocal_compressive",
    "d_ism_compressive",
];

impl Panels {
    fn images(&self) -> [&Image2D; 4] {
        [
            &self.confocal_full,
            &self.ism_full,
            &self.confocal_compressive,
            &self.ism_compressive,
        ]
    }
}

/// Errors of one experiment sample, compressive against fully sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub sample_id: usize,
    pub err_confocal: f64,
    pub err_ism: f64,
    pub converged: usize,
    pub reconstructions: usize,
}

impl SampleRecord {
    fn key_values(&self) -> Vec<(String, String)> {
        vec![
            ("sample_id".into(), self.sample_id.to_string()),
            ("err_confocal".into(), self.err_confocal.to_string()),
            ("err_ism".into(), self.err_ism.to_string()),
            ("converged".into(), self.converged.to_string()),
            ("reconstructions".into(), self.reconstructions.to_string()),
        ]
    }

    fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let get = |key: &'static str| -> Result<String> {
            text.lines()
                .filter_map(|l| l.split_once('='))
                .find(|(k, _)| k.trim() == key)
                .map(|(_, v)| v.trim().to_string())
                .ok_or_else(|| Error::format(key, format!("missing in {}", path.display())))
        };
        let num = |key: &'static str, v: String| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::format(key, format!("`{v}` is not a number")))
        };
        Ok(Self {
            sample_id: num("sample_id", get("sample_id")?)? as usize,
            err_confocal: num("err_confocal", get("err_confocal")?)?,
            err_ism: num("err_ism", get("err_ism")?)?,
            converged: num("converged", get("converged")?)? as usize,
            reconstructions: num("reconstructions", get("reconstructions")?)? as usize,
        })
    }
}

/// Runs one experiment sample end to end.
pub fn run_sample(
    cfg: &PipelineConfig,
    psfs: &PsfStack,
    mask: &SamplingMask,
    sample: usize,
) -> Result<(SampleRecord, Panels, [Fusion; 2], Vec<SolverReport>)> {
    let sim = simulate_sample(cfg, psfs, sample)?;
    let full = fuse_dataset(&sim.noisy, cfg.max_shift_px)?;
    let (recon, reports) = reconstruct_dataset(cfg, &sim.noisy, mask)?;
    let compressive = if cfg.reuse_reference_shifts {
        fuse_with(&recon, full.shifts.clone())?
    } else {
        fuse_dataset(&recon, cfg.max_shift_px)?
    };
    let record = SampleRecord {
        sample_id: sample,
        err_confocal: relative_error(&full.confocal, &compressive.confocal)?,
        err_ism: relative_error(&full.ism, &compressive.ism)?,
        converged: reports.iter().filter(|r| r.converged).count(),
        reconstructions: reports.len(),
    };
    let panels = Panels {
        confocal_full: full.confocal.clone(),
        ism_full: full.ism.clone(),
        confocal_compressive: compressive.confocal.clone(),
        ism_compressive: compressive.ism.clone(),
    };
    Ok((record, panels, [full, compressive], reports))
}

fn sample_dir(out: &Path, sample: usize) -> PathBuf {
    out.join(format!("sample_{sample:03}"))
}

fn run_and_store_sample(
    cfg: &PipelineConfig,
    psfs: &PsfStack,
    mask: &SamplingMask,
    out: &Path,
    sample: usize,
) -> Result<SampleRecord> {
    let dir = sample_dir(out, sample);
    let marker = dir.join(DONE_MARKER);
    if marker.exists() {
        return SampleRecord::read(&dir.join("errors.txt"));
    }
    let (record, panels, [full, compressive], reports) = run_sample(cfg, psfs, mask, sample)?;
    ensure_dir(&dir)?;
    for (img, name) in panels.images().into_iter().zip(PANEL_FILES) {
        write_raster(img, dir.join(format!("{name}.cism")))?;
    }
    write_bytes(&dir.join("shifts_full.csv"), full.shifts.to_csv().as_bytes())?;
    write_bytes(
        &dir.join("shifts_compressive.csv"),
        compressive.shifts.to_csv().as_bytes(),
    )?;
    write_bytes(
        &dir.join("solver_reports.csv"),
        reports_csv(&cfg.geometry, &reports).as_bytes(),
    )?;
    write_key_values(dir.join("errors.txt"), &record.key_values())?;
    // Written last: its presence means the directory is complete.
    write_bytes(&marker, b"")?;
    Ok(record)
}

/// Outcome of the full experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub records: Vec<SampleRecord>,
    pub confocal: ExperimentStats,
    pub ism: ExperimentStats,
}

impl ExperimentSummary {
    /// `sample_id,err_confocal,err_ism` in percent, plus a `mean±std` row.
    pub fn table_csv(&self) -> String {
        let mut s = String::from("sample_id,err_confocal,err_ism\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{:.6},{:.6}\n",
                r.sample_id,
                100.0 * r.err_confocal,
                100.0 * r.err_ism
            ));
        }
        s.push_str(&format!(
            "mean±std,{},{}\n",
            self.confocal.percent_string(),
            self.ism.percent_string()
        ));
        s
    }

    pub fn converged(&self) -> (usize, usize) {
        self.records
            .iter()
            .fold((0, 0), |(c, n), r| (c + r.converged, n + r.reconstructions))
    }
}

/// Runs `n_samples` seeded samples (skipping completed sample directories),
/// then writes `table.csv`, `summary.txt`, `mask.pbm` and the four panels of
/// sample 0 as `fig4_*.cism` / `fig4_*.png`.
///
/// `progress` is called once per finished sample, from worker threads.
pub fn cmd_experiment(
    cfg: &PipelineConfig,
    out: &Path,
    progress: &(dyn Fn(&SampleRecord) + Sync),
) -> Result<ExperimentSummary> {
    cfg.validate()?;
    if cfg.n_samples < 2 {
        return Err(Error::invalid(format!(
            "the experiment aggregates mean and std and needs at least 2 samples, got {}",
            cfg.n_samples
        )));
    }
    let psfs = psf_stack(cfg)?;
    let mask = sampling_mask(cfg, cfg.phantom.rows, cfg.phantom.cols)?;
    write_config_copy(cfg, out)?;
    mask.write_pbm(out.join("mask.pbm"))?;

    let records: Vec<SampleRecord> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|s| {
            let r = run_and_store_sample(cfg, &psfs, &mask, out, s)?;
            progress(&r);
            Ok(r)
        })
        .collect::<Result<_>>()?;

    let confocal = aggregate(&records.iter().map(|r| r.err_confocal).collect::<Vec<_>>())?;
    let ism = aggregate(&records.iter().map(|r| r.err_ism).collect::<Vec<_>>())?;
    let summary = ExperimentSummary {
        records,
        confocal,
        ism,
    };
    write_bytes(&out.join("table.csv"), summary.table_csv().as_bytes())?;
    let (conv, total) = summary.converged();
    write_key_values(
        out.join("summary.txt"),
        &[
            ("n_samples".into(), cfg.n_samples.to_string()),
            ("confocal_mean".into(), summary.confocal.mean.to_string()),
            ("confocal_std".into(), summary.confocal.std.to_string()),
            ("ism_mean".into(), summary.ism.mean.to_string()),
            ("ism_std".into(), summary.ism.std.to_string()),
            ("confocal".into(), summary.confocal.percent_string()),
            ("ism".into(), summary.ism.percent_string()),
            ("converged_reconstructions".into(), format!("{conv}/{total}")),
        ],
    )?;
    let first = sample_dir(out, 0);
    for name in PANEL_FILES {
        let img = crate::io::read_raster(first.join(format!("{name}.cism")))?;
        write_raster(&img, out.join(format!("fig4_{name}.cism")))?;
        export_png16(&img, out.join(format!("fig4_{name}.png")))?;
    }
    Ok(summary)
}
