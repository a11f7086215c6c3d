//! Test-only helpers shared by the integration suites.
#![allow(dead_code)]

use cism::rng::RandomSeed;
use cism::sampling::{apply_a, make_skip_mask, SamplingMask};
use cism::solver::{solve_tv, SolverConfig};
use cism::Image2D;
use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus, ZeroConeT,
};
use rand::Rng;

/// Anisotropic-TV minimization `min Σ|x_q − x_p| s.t. x = y on even/even
/// pixels` written as an LP and handed to a generic interior-point solver.
/// Returns the minimizer and its TV.
pub fn tv_lp_oracle(rows: usize, cols: usize, img_sampled: &Image2D, nonneg: bool) -> (Vec<f64>, f64) {
    let n = rows * cols;
    let mut edges = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if i + 1 < rows {
                edges.push((i * cols + j, (i + 1) * cols + j));
            }
            if j + 1 < cols {
                edges.push((i * cols + j, i * cols + j + 1));
            }
        }
    }
    let e = edges.len();
    let nvar = n + e;

    // Triplets (row, col, value); constraint rows: equalities first.
    let mut trip: Vec<(usize, usize, f64)> = Vec::new();
    let mut b = Vec::new();
    for i in (0..rows).step_by(2) {
        for j in (0..cols).step_by(2) {
            let r = b.len();
            trip.push((r, i * cols + j, 1.0));
            b.push(img_sampled.get(i, j));
        }
    }
    let n_eq = b.len();
    for (k, &(p, q)) in edges.iter().enumerate() {
        let r = b.len();
        trip.push((r, q, 1.0));
        trip.push((r, p, -1.0));
        trip.push((r, n + k, -1.0));
        b.push(0.0);
        let r = b.len();
        trip.push((r, q, -1.0));
        trip.push((r, p, 1.0));
        trip.push((r, n + k, -1.0));
        b.push(0.0);
    }
    if nonneg {
        for v in 0..n {
            let r = b.len();
            trip.push((r, v, -1.0));
            b.push(0.0);
        }
    }
    let m = b.len();
    trip.sort_by_key(|&(r, c, _)| (c, r));
    let mut colptr = vec![0usize; nvar + 1];
    for &(_, c, _) in &trip {
        colptr[c + 1] += 1;
    }
    for c in 0..nvar {
        colptr[c + 1] += colptr[c];
    }
    let rowval = trip.iter().map(|t| t.0).collect();
    let nzval = trip.iter().map(|t| t.2).collect();
    let a = CscMatrix::new(m, nvar, colptr, rowval, nzval);
    let p = CscMatrix::<f64>::zeros((nvar, nvar));
    let mut q = vec![0.0; nvar];
    q[n..].iter_mut().for_each(|v| *v = 1.0);
    let cones = [ZeroConeT(n_eq), NonnegativeConeT(m - n_eq)];
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(1e-10)
        .tol_gap_rel(1e-10)
        .tol_feas(1e-10)
        .build()
        .unwrap();
    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings).unwrap();
    solver.solve();
    assert!(
        matches!(
            solver.solution.status,
            SolverStatus::Solved | SolverStatus::AlmostSolved
        ),
        "oracle status {:?}",
        solver.solution.status
    );
    let x = solver.solution.x[..n].to_vec();
    let tv = edges.iter().map(|&(p, q)| (x[q] - x[p]).abs()).sum();
    (x, tv)
}

/// Brute-force anisotropic TV with out-of-grid terms omitted.
pub fn tv_brute(img: &Image2D) -> f64 {
    let (rows, cols) = img.shape();
    let mut total = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            if i + 1 < rows {
                total += (img.get(i + 1, j) - img.get(i, j)).abs();
            }
            if j + 1 < cols {
                total += (img.get(i, j + 1) - img.get(i, j)).abs();
            }
        }
    }
    total
}

/// Sum of 2–4 random axis-aligned rectangles with levels in (0, 1].
pub fn piecewise_constant(rows: usize, cols: usize, seed: u64) -> Image2D {
    let mut rng = RandomSeed(seed).stream(77);
    let mut data = vec![0.0; rows * cols];
    let count = rng.random_range(2..=4);
    for _ in 0..count {
        let (r0, c0) = (rng.random_range(0..rows - 2), rng.random_range(0..cols - 2));
        let (r1, c1) = (rng.random_range(r0 + 2..=rows), rng.random_range(c0 + 2..=cols));
        let level = rng.random_range(0.1..1.0);
        for i in r0..r1 {
            for j in c0..c1 {
                data[i * cols + j] += level;
            }
        }
    }
    Image2D::from_vec(rows, cols, 25.0, data).unwrap()
}

/// Solver settings for oracle comparisons: same scheme, tighter stopping.
pub fn tight_config() -> SolverConfig {
    SolverConfig {
        tol_rel_change: 1e-7,
        tol_constraint: 1e-8,
        max_outer: 400,
        max_inner: 40,
        ..SolverConfig::default()
    }
}

pub struct OracleComparison {
    pub solver_tv: f64,
    pub oracle_tv: f64,
    pub solver_residual: f64,
    pub oracle_residual: f64,
    pub solver_x: Image2D,
    pub oracle_x: Vec<f64>,
}

pub fn compare_with_oracle(truth: &Image2D, cfg: &SolverConfig) -> OracleComparison {
    let (rows, cols) = truth.shape();
    let mask: SamplingMask = make_skip_mask(rows, cols).unwrap();
    let y = apply_a(&mask, truth).unwrap();
    let (x, _report) = solve_tv(&mask, &y, cfg, None).unwrap();
    let (ox, otv) = tv_lp_oracle(rows, cols, truth, cfg.nonneg);
    let rel = |v: &[f64]| {
        let num: f64 = mask
            .indices()
            .iter()
            .zip(&y.values)
            .map(|(&k, &t)| (v[k] - t).powi(2))
            .sum();
        num.sqrt() / y.norm()
    };
    OracleComparison {
        solver_tv: tv_brute(&x),
        oracle_tv: otv,
        solver_residual: rel(x.data()),
        oracle_residual: rel(&ox),
        solver_x: x,
        oracle_x: ox,
    }
}
