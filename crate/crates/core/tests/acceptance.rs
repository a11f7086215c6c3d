//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 7 and 9 run the default 25-sample experiment twice, which takes
//! tens of minutes on a single core.

mod common;

use std::fs;
use std::time::Instant;

use cism::apr::{estimate_shifts, fuse, shift_image, DEFAULT_MAX_SHIFT_PX};
use cism::forward::{acquire, convolve2d, AcquisitionConfig};
use cism::metrics::{fwhm, Axis};
use cism::phantom::{generate_phantom, PhantomConfig};
use cism::pipeline::{cmd_experiment, PipelineConfig};
use cism::psf::{generate_psf_stack, DetectorGeometry, OpticalConfig};
use cism::rng::RandomSeed;
use cism::sampling::{apply_a, make_skip_mask, SamplingMask};
use cism::solver::{solve_tv, tv_norm, SolverConfig, TvVariant};
use cism::{Image2D, IsmDataset};
use common::{compare_with_oracle, piecewise_constant, tight_config, tv_brute};
use rand::Rng;

type Check = (usize, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn compression() -> Outcome {
    let m = make_skip_mask(256, 256).unwrap().sampled_count();
    outcome(
        m == 16384 && 4 * m == 256 * 256,
        format!("M = {m} of {}", 256 * 256),
    )
}

fn oracle_equivalence() -> Outcome {
    let cfg = tight_config();
    let (mut worst_gap, mut worst_res) = (0.0f64, 0.0f64);
    for seed in 0..20 {
        let truth = piecewise_constant(12, 12, 1000 + seed);
        let c = compare_with_oracle(&truth, &cfg);
        worst_gap = worst_gap.max((c.solver_tv - c.oracle_tv).abs() / c.oracle_tv.max(1e-12));
        worst_res = worst_res.max(c.solver_residual);
    }
    outcome(
        worst_gap <= 0.01 && worst_res < 1e-6,
        format!("20 instances, worst TV gap {worst_gap:.2e}, worst residual {worst_res:.2e}"),
    )
}

fn rel_diff(a: &Image2D, b: &Image2D) -> f64 {
    let num: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
    (num / b.data().iter().map(|y| y * y).sum::<f64>()).sqrt()
}

fn full_mask_identity() -> Outcome {
    let img = piecewise_constant(64, 64, 7);
    let mask = SamplingMask::full(64, 64).unwrap();
    let y = apply_a(&mask, &img).unwrap();
    let (x, report) = solve_tv(&mask, &y, &SolverConfig::default(), None).unwrap();
    let err = rel_diff(&x, &img);
    outcome(
        err < 1e-6,
        format!("relative difference {err:.2e}, converged {}", report.converged),
    )
}

fn tv_brute_isotropic(img: &Image2D) -> f64 {
    let (rows, cols) = img.shape();
    let mut total = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let dv = if i + 1 < rows {
                img.get(i + 1, j) - img.get(i, j)
            } else {
                0.0
            };
            let dh = if j + 1 < cols {
                img.get(i, j + 1) - img.get(i, j)
            } else {
                0.0
            };
            total += (dv * dv + dh * dh).sqrt();
        }
    }
    total
}

fn tv_oracle() -> Outcome {
    let mut rng = RandomSeed(4).stream(0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let data: Vec<f64> = (0..36).map(|_| rng.random_range(-10.0..10.0)).collect();
        let img = Image2D::from_vec(6, 6, 25.0, data).unwrap();
        worst = worst
            .max((tv_norm(&img, TvVariant::Anisotropic) - tv_brute(&img)).abs())
            .max((tv_norm(&img, TvVariant::Isotropic) - tv_brute_isotropic(&img)).abs());
    }
    outcome(
        worst <= 1e-12,
        format!("100 images, worst difference {worst:.1e}"),
    )
}

/// A realistic test image: a filament phantom blurred by the central PSF.
fn blurred_phantom() -> Image2D {
    let phantom = generate_phantom(&PhantomConfig {
        rows: 64,
        cols: 64,
        ..Default::default()
    })
    .unwrap();
    let psfs = generate_psf_stack(&DetectorGeometry::default(), &OpticalConfig::default(), 25.0).unwrap();
    convolve2d(&phantom, psfs.central()).unwrap()
}

fn pair_geometry() -> DetectorGeometry {
    DetectorGeometry {
        array_rows: 3,
        array_cols: 1,
        ..Default::default()
    }
}

/// Worst error of the shift that re-aligns `img` translated by each of `shifts`.
fn worst_shift_error(img: &Image2D, shifts: &[[f64; 2]]) -> f64 {
    let mut worst = 0.0f64;
    for &s in shifts {
        let moved = shift_image(img, s).unwrap();
        let ds = IsmDataset::new(vec![moved, img.clone(), img.clone()], pair_geometry()).unwrap();
        let est = estimate_shifts(&ds, DEFAULT_MAX_SHIFT_PX).unwrap();
        let e = est.shifts[0];
        worst = worst.max((e[0] + s[0]).abs()).max((e[1] + s[1]).abs());
    }
    worst
}

fn shift_recovery() -> Outcome {
    let img = blurred_phantom();
    let mut integer = Vec::new();
    for dy in -3..=3 {
        for dx in -3..=3 {
            integer.push([dy as f64, dx as f64]);
        }
    }
    let half = [[0.5, 0.0], [0.0, -0.5], [-0.5, 0.5], [0.5, 0.5], [2.5, -1.5]];
    let e_int = worst_shift_error(&img, &integer);
    let e_half = worst_shift_error(&img, &half);
    outcome(
        e_int <= 0.05 && e_half <= 0.1,
        format!("integer worst {e_int:.4} px (tol 0.05), half-pixel worst {e_half:.4} px (tol 0.1)"),
    )
}

fn resolution_gain() -> Outcome {
    let geometry = DetectorGeometry::default();
    let psfs = generate_psf_stack(&geometry, &OpticalConfig::default(), 25.0).unwrap();
    let mut data = vec![0.0; 64 * 64];
    data[32 * 64 + 32] = 1.0;
    let delta = Image2D::from_vec(64, 64, 25.0, data).unwrap();
    let ds = acquire(&delta, &psfs, &AcquisitionConfig::default())
        .unwrap()
        .noiseless;
    let shifts = estimate_shifts(&ds, DEFAULT_MAX_SHIFT_PX).unwrap();
    let fused = fuse(&ds, &shifts).unwrap();
    let open = fuse(&ds, &cism::apr::ShiftEstimate::zeros(geometry)).unwrap();
    let central = fwhm(ds.central(), Axis::Horizontal).unwrap();
    let f = fwhm(&fused, Axis::Horizontal).unwrap();
    let o = fwhm(&open, Axis::Horizontal).unwrap();
    outcome(
        f <= 0.95 * central,
        format!(
            "FWHM central {central:.4} px, fused {f:.4} px, ratio {:.4} (needs <= 0.95); \
             unshifted sum {o:.4} px, fused/unshifted {:.4}",
            f / central,
            f / o
        ),
    )
}

fn poisson_statistics() -> Outcome {
    let phantom = Image2D::new(128, 128, 25.0, 1.0).unwrap();
    let psfs = generate_psf_stack(&DetectorGeometry::default(), &OpticalConfig::default(), 25.0).unwrap();
    let acq = acquire(&phantom, &psfs, &AcquisitionConfig::default()).unwrap();
    let truth = acq.noiseless.central().get(64, 64);
    let flat = acq
        .noiseless
        .central()
        .data()
        .iter()
        .all(|&v| (v - truth).abs() <= 1e-9 * truth);
    let px = acq.noisy.central().data();
    let n = px.len() as f64;
    let mean = px.iter().sum::<f64>() / n;
    let var = px.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sigma = (truth / n).sqrt();
    let ratio = var / mean;
    let z = (mean - truth) / sigma;
    outcome(
        flat && (0.9..=1.1).contains(&ratio) && z.abs() <= 4.0,
        format!(
            "{} px at mean {truth}, variance/mean {ratio:.4}, mean offset {z:.2} sigma",
            px.len()
        ),
    )
}

fn run_experiment(dir: &std::path::Path) -> cism::pipeline::ExperimentSummary {
    let cfg = PipelineConfig::default();
    let started = Instant::now();
    cmd_experiment(&cfg, dir, &|r| {
        eprintln!(
            "  sample {:03}: confocal {:.2}%, ism {:.2}% ({:.0} s)",
            r.sample_id,
            100.0 * r.err_confocal,
            100.0 * r.err_ism,
            started.elapsed().as_secs_f64()
        )
    })
    .unwrap()
}

fn table_trend(summary: &cism::pipeline::ExperimentSummary) -> Outcome {
    let (c, i) = (&summary.confocal, &summary.ism);
    let band = |m: f64| (0.06..=0.25).contains(&m);
    let (conv, total) = summary.converged();
    outcome(
        i.mean <= c.mean - 0.01 && i.std < c.std && band(c.mean) && band(i.mean),
        format!(
            "{} samples, confocal {}, ism {}, {conv}/{total} reconstructions converged",
            summary.records.len(),
            c.percent_string(),
            i.percent_string()
        ),
    )
}

fn reproducibility(first: &std::path::Path, second: &std::path::Path) -> Outcome {
    let a = fs::read(first.join("table.csv")).unwrap();
    let b = fs::read(second.join("table.csv")).unwrap();
    let sa = fs::read(first.join("summary.txt")).unwrap();
    let sb = fs::read(second.join("summary.txt")).unwrap();
    outcome(
        a == b && sa == sb,
        format!(
            "table.csv {} bytes, identical {}; summary.txt identical {}",
            a.len(),
            a == b,
            sa == sb
        ),
    )
}

fn report(n: usize, name: &str, started: Instant, o: &Outcome) {
    println!(
        "criterion {n} {name:<22} {} ({:.1} s) {}",
        if o.pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64(),
        o.detail
    );
}

fn main() {
    let mut failed = Vec::new();
    let quick: [Check; 6] = [
        (1, "compression factor", compression),
        (2, "solver oracle", oracle_equivalence),
        (3, "full-mask identity", full_mask_identity),
        (4, "tv-norm oracle", tv_oracle),
        (5, "shift recovery", shift_recovery),
        (6, "resolution gain", resolution_gain),
    ];
    for (n, name, check) in quick {
        let t = Instant::now();
        let o = check();
        report(n, name, t, &o);
        if !o.pass {
            failed.push(n);
        }
    }

    let tmp = tempfile::tempdir().unwrap();
    let (first, second) = (tmp.path().join("first"), tmp.path().join("second"));
    let t = Instant::now();
    let summary = run_experiment(&first);
    let o = table_trend(&summary);
    report(7, "error trend", t, &o);
    if !o.pass {
        failed.push(7);
    }

    let t = Instant::now();
    let o = poisson_statistics();
    report(8, "poisson statistics", t, &o);
    if !o.pass {
        failed.push(8);
    }

    let t = Instant::now();
    run_experiment(&second);
    let o = reproducibility(&first, &second);
    report(9, "reproducibility", t, &o);
    if !o.pass {
        failed.push(9);
    }

    if failed.is_empty() {
        println!("acceptance: all 9 criteria PASS");
    } else {
        println!("acceptance: FAIL for criteria {failed:?}");
        std::process::exit(1);
    }
}
