//! Equality-constrained total-variation reconstruction.
//!
//! Solves `min TV(x) s.t. Ax = y` with an alternating-direction augmented
//! Lagrangian scheme in the style of TVAL3. With the splitting `w = Dx`,
//!
//! ```text
//! L(w, x) = Σ φ(w) − νᵀ(Dx − w) + β/2 ‖Dx − w‖² − λᵀ(Ax − y) + μ/2 ‖Ax − y‖²
//! ```
//!
//! The inner loop alternates a closed-form shrinkage step for `w` with a short
//! run of projected gradient steps on the `x`-subproblem (Barzilai-Borwein
//! length, nonmonotone Zhang-Hager backtracking). The outer loop updates the multipliers `ν`, `λ`
//! and raises the penalties `β`, `μ` geometrically.
//!
//! The measurements are divided by `max |y|` before solving and the result
//! multiplied back, so the solver is positively homogeneous in `y`.

mod operators;

pub use operators::{divergence, gradient, gradient_adjoint, shrink_pair, shrink_scalar, tv_norm, TvVariant};

use operators::{grad_adjoint_into, grad_into};

use crate::error::{Error, Result};
use crate::image::Image2D;
use crate::sampling::{apply_a_adjoint, gather, scatter_add, MeasurementVector, SamplingMask};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub beta_init: f64,
    pub mu_init: f64,
    pub beta_max: f64,
    pub mu_max: f64,
    pub continuation_factor: f64,
    pub tol_rel_change: f64,
    pub tol_constraint: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub tv_variant: TvVariant,
    pub nonneg: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            beta_init: 32.0,
            mu_init: 256.0,
            beta_max: 32.0,
            mu_max: 32768.0,
            continuation_factor: 2.0,
            tol_rel_change: 1e-4,
            tol_constraint: 1e-5,
            max_outer: 40,
            max_inner: 20,
            tv_variant: TvVariant::Anisotropic,
            nonneg: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beta_init", self.beta_init),
            ("mu_init", self.mu_init),
            ("beta_max", self.beta_max),
            ("mu_max", self.mu_max),
            ("tol_rel_change", self.tol_rel_change),
            ("tol_constraint", self.tol_constraint),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.beta_init > self.beta_max {
            return Err(Error::config("beta_init exceeds beta_max"));
        }
        if self.mu_init > self.mu_max {
            return Err(Error::config("mu_init exceeds mu_max"));
        }
        if !(self.continuation_factor > 1.0 && self.continuation_factor.is_finite()) {
            return Err(Error::config("continuation_factor must be > 1"));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::config("iteration caps must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverReport {
    pub outer_iterations: usize,
    /// `‖Ax − y‖ / ‖y‖` of the returned image.
    pub final_constraint_residual: f64,
    /// Relative change of `x` over the last outer iteration.
    pub final_rel_change: f64,
    /// TV of the iterate after each outer iteration.
    pub objective_trace: Vec<f64>,
    /// Relative constraint residual after each outer iteration.
    pub residual_trace: Vec<f64>,
    pub converged: bool,
}

impl SolverReport {
    pub fn key_values(&self) -> Vec<(String, String)> {
        vec![
            ("outer_iterations".into(), self.outer_iterations.to_string()),
            (
                "final_constraint_residual".into(),
                format!("{:e}", self.final_constraint_residual),
            ),
            ("final_rel_change".into(), format!("{:e}", self.final_rel_change)),
            ("converged".into(), self.converged.to_string()),
        ]
    }

    /// `iteration,objective,constraint_residual` rows with a header.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iteration,objective,constraint_residual\n");
        for (k, (o, r)) in self.objective_trace.iter().zip(&self.residual_trace).enumerate() {
            s.push_str(&format!("{},{:e},{:e}\n", k + 1, o, r));
        }
        s
    }
}

/// Nonmonotone line-search constants.
const LS_SUFFICIENT_DECREASE: f64 = 1e-5;
const LS_SHRINK: f64 = 0.5;
const LS_MAX_TRIES: usize = 30;
const ZH_ETA: f64 = 0.995;

/// Gradient steps per x-update: at most `X_STEPS`, fewer once the step
/// length has shrunk by `X_STEP_REDUCTION` relative to the first.
const X_STEPS: usize = 10;
const X_STEP_REDUCTION: f64 = 0.1;

struct Problem<'a> {
    mask: &'a SamplingMask,
    y: Vec<f64>,
    rows: usize,
    cols: usize,
    variant: TvVariant,
    nonneg: bool,
}

/// Multipliers, penalties and scratch space of one solve.
struct State {
    x: Vec<f64>,
    nu_v: Vec<f64>,
    nu_h: Vec<f64>,
    lambda: Vec<f64>,
    beta: f64,
    mu: f64,
    w_v: Vec<f64>,
    w_h: Vec<f64>,
    dv: Vec<f64>,
    dh: Vec<f64>,
    ax: Vec<f64>,
    g: Vec<f64>,
    pv: Vec<f64>,
    ph: Vec<f64>,
    resid: Vec<f64>,
}

impl Problem<'_> {
    fn shrink_w(&self, s: &mut State) {
        let t = 1.0 / s.beta;
        match self.variant {
            TvVariant::Anisotropic => {
                for k in 0..s.x.len() {
                    s.w_v[k] = shrink_scalar(s.dv[k] - s.nu_v[k] / s.beta, t);
                    s.w_h[k] = shrink_scalar(s.dh[k] - s.nu_h[k] / s.beta, t);
                }
            }
            TvVariant::Isotropic => {
                for k in 0..s.x.len() {
                    let w = shrink_pair([s.dv[k] - s.nu_v[k] / s.beta, s.dh[k] - s.nu_h[k] / s.beta], t);
                    s.w_v[k] = w[0];
                    s.w_h[k] = w[1];
                }
            }
        }
    }

    fn tv_of_w(&self, s: &State) -> f64 {
        match self.variant {
            TvVariant::Anisotropic => s.w_v.iter().zip(&s.w_h).map(|(a, b)| a.abs() + b.abs()).sum(),
            TvVariant::Isotropic => s.w_v.iter().zip(&s.w_h).map(|(a, b)| a.hypot(*b)).sum(),
        }
    }

    /// Augmented Lagrangian at `x` for the current `w`, using the difference
    /// and gather buffers already filled for `x`.
    fn lagrangian(&self, s: &State, dv: &[f64], dh: &[f64], ax: &[f64]) -> f64 {
        let mut val = self.tv_of_w(s);
        for k in 0..dv.len() {
            let rv = dv[k] - s.w_v[k];
            let rh = dh[k] - s.w_h[k];
            val += -s.nu_v[k] * rv - s.nu_h[k] * rh + 0.5 * s.beta * (rv * rv + rh * rh);
        }
        for ((a, y), l) in ax.iter().zip(&self.y).zip(&s.lambda) {
            let r = a - y;
            val += -l * r + 0.5 * s.mu * r * r;
        }
        val
    }

    /// `g = Dᵀ(β(Dx − w) − ν) + Aᵀ(μ(Ax − y) − λ)` at the buffered `x`.
    fn gradient(&self, s: &mut State) {
        for k in 0..s.x.len() {
            s.pv[k] = s.beta * (s.dv[k] - s.w_v[k]) - s.nu_v[k];
            s.ph[k] = s.beta * (s.dh[k] - s.w_h[k]) - s.nu_h[k];
        }
        grad_adjoint_into(&s.pv, &s.ph, self.rows, self.cols, &mut s.g);
        for m in 0..s.ax.len() {
            s.resid[m] = s.mu * (s.ax[m] - self.y[m]) - s.lambda[m];
        }
        scatter_add(self.mask, &s.resid, 1.0, &mut s.g);
    }

    fn refresh(&self, s: &mut State) {
        grad_into(&s.x, self.rows, self.cols, &mut s.dv, &mut s.dh);
        gather(self.mask, &s.x, &mut s.ax);
    }

    fn residual(&self, s: &State) -> f64 {
        let num: f64 = s.ax.iter().zip(&self.y).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = self.y.iter().map(|v| v * v).sum();
        (num / den).sqrt()
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

fn update_multipliers(problem: &Problem, s: &mut State) {
    for k in 0..s.x.len() {
        s.nu_v[k] -= s.beta * (s.dv[k] - s.w_v[k]);
        s.nu_h[k] -= s.beta * (s.dh[k] - s.w_h[k]);
    }
    for j in 0..s.ax.len() {
        s.lambda[j] -= s.mu * (s.ax[j] - problem.y[j]);
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Reconstructs `x` with minimal TV subject to `Ax = y`.
///
/// `init` defaults to the zero-filled back-projection `Aᵀy`. Hitting the
/// iteration cap is not an error: the report then has `converged = false`.
pub fn solve_tv(
    mask: &SamplingMask,
    y: &MeasurementVector,
    cfg: &SolverConfig,
    init: Option<&Image2D>,
) -> Result<(Image2D, SolverReport)> {
    cfg.validate()?;
    if y.is_empty() {
        return Err(Error::invalid("empty measurement vector"));
    }
    if y.len() != mask.sampled_count() {
        return Err(Error::invalid(format!(
            "measurement length {} does not match {} sampled points",
            y.len(),
            mask.sampled_count()
        )));
    }
    if let Some(x0) = init {
        if x0.shape() != (mask.rows(), mask.cols()) {
            return Err(Error::invalid("initial image does not match the mask"));
        }
    }
    if let Some(v) = y.values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite measurement {v}")));
    }

    let template = apply_a_adjoint(mask, y)?;
    let scale = y.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        let zero = template.with_data(vec![0.0; template.len()]);
        let report = SolverReport {
            outer_iterations: 0,
            converged: true,
            ..Default::default()
        };
        return Ok((zero, report));
    }

    let problem = Problem {
        mask,
        y: y.values.iter().map(|v| v / scale).collect(),
        rows: mask.rows(),
        cols: mask.cols(),
        variant: cfg.tv_variant,
        nonneg: cfg.nonneg,
    };
    let n = template.len();
    let m = y.len();
    let x0: Vec<f64> = match init {
        Some(img) => img.data().iter().map(|v| v / scale).collect(),
        None => template.data().iter().map(|v| v / scale).collect(),
    };
    let mut s = State {
        x: x0,
        nu_v: vec![0.0; n],
        nu_h: vec![0.0; n],
        lambda: vec![0.0; m],
        beta: cfg.beta_init,
        mu: cfg.mu_init,
        w_v: vec![0.0; n],
        w_h: vec![0.0; n],
        dv: vec![0.0; n],
        dh: vec![0.0; n],
        ax: vec![0.0; m],
        g: vec![0.0; n],
        pv: vec![0.0; n],
        ph: vec![0.0; n],
        resid: vec![0.0; m],
    };
    if problem.nonneg {
        s.x.iter_mut().for_each(|v| *v = v.max(0.0));
    }

    let mut trial = vec![0.0; n];
    let mut t_dv = vec![0.0; n];
    let mut t_dh = vec![0.0; n];
    let mut t_ax = vec![0.0; m];
    let mut prev_x = vec![0.0; n];
    let mut prev_g = vec![0.0; n];

    let mut report = SolverReport::default();
    let mut best: Option<(f64, Vec<f64>)> = None;

    for outer in 0..cfg.max_outer {
        let x_outer_start = s.x.clone();
        let lipschitz = 8.0 * s.beta + s.mu;
        problem.refresh(&mut s);

        for _inner in 0..cfg.max_inner {
            let x_inner_start = s.x.clone();
            problem.shrink_w(&mut s);
            let mut c_ref = problem.lagrangian(&s, &s.dv, &s.dh, &s.ax);
            let mut q = 1.0;
            let mut alpha = 1.0 / lipschitz;
            let mut first_step = 0.0;
            for step_no in 0..X_STEPS {
                problem.gradient(&mut s);
                if step_no > 0 {
                    let mut ss = 0.0;
                    let mut sy = 0.0;
                    for k in 0..n {
                        let dx = s.x[k] - prev_x[k];
                        ss += dx * dx;
                        sy += dx * (s.g[k] - prev_g[k]);
                    }
                    alpha = if sy > 0.0 && ss > 0.0 {
                        ss / sy
                    } else {
                        1.0 / lipschitz
                    };
                }
                let mut l_trial = 0.0;
                for attempt in 0..LS_MAX_TRIES {
                    let mut gd = 0.0;
                    for ((t, x), g) in trial.iter_mut().zip(&s.x).zip(&s.g) {
                        let mut v = x - alpha * g;
                        if problem.nonneg && v < 0.0 {
                            v = 0.0;
                        }
                        *t = v;
                        gd += g * (v - x);
                    }
                    grad_into(&trial, problem.rows, problem.cols, &mut t_dv, &mut t_dh);
                    gather(mask, &trial, &mut t_ax);
                    l_trial = problem.lagrangian(&s, &t_dv, &t_dh, &t_ax);
                    // A step no longer than 1/L always decreases the quadratic.
                    if l_trial <= c_ref + LS_SUFFICIENT_DECREASE * gd
                        || alpha <= 1.0 / lipschitz
                        || attempt + 1 == LS_MAX_TRIES
                    {
                        break;
                    }
                    alpha = (alpha * LS_SHRINK).max(1.0 / lipschitz);
                }
                let x_norm = norm(&s.x).max(f64::MIN_POSITIVE);
                let step = dist(&s.x, &trial);
                prev_x.copy_from_slice(&s.x);
                prev_g.copy_from_slice(&s.g);
                s.x.copy_from_slice(&trial);
                s.dv.copy_from_slice(&t_dv);
                s.dh.copy_from_slice(&t_dh);
                s.ax.copy_from_slice(&t_ax);
                let q_next = ZH_ETA * q + 1.0;
                c_ref = (ZH_ETA * q * c_ref + l_trial) / q_next;
                q = q_next;
                if step_no == 0 {
                    first_step = step;
                }
                if step <= X_STEP_REDUCTION * first_step || step / x_norm < 1e-2 * cfg.tol_rel_change {
                    break;
                }
            }
            if dist(&s.x, &x_inner_start) / norm(&x_inner_start).max(f64::MIN_POSITIVE) < cfg.tol_rel_change {
                break;
            }
        }

        problem.shrink_w(&mut s);
        update_multipliers(&problem, &mut s);
        s.beta = (s.beta * cfg.continuation_factor).min(cfg.beta_max);
        s.mu = (s.mu * cfg.continuation_factor).min(cfg.mu_max);

        let residual = problem.residual(&s);
        let change = dist(&s.x, &x_outer_start) / norm(&x_outer_start).max(f64::MIN_POSITIVE);
        let tv = match problem.variant {
            TvVariant::Anisotropic => {
                s.dv.iter()
                    .zip(&s.dh)
                    .map(|(a, b)| a.abs() + b.abs())
                    .sum::<f64>()
            }
            TvVariant::Isotropic => s.dv.iter().zip(&s.dh).map(|(a, b)| a.hypot(*b)).sum::<f64>(),
        };
        report.objective_trace.push(tv * scale);
        report.residual_trace.push(residual);
        report.outer_iterations = outer + 1;
        report.final_rel_change = change;
        report.final_constraint_residual = residual;

        if !residual.is_finite() || s.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "TV solver diverged at outer iteration {}",
                outer + 1
            )));
        }
        if best.as_ref().is_none_or(|(r, _)| residual <= *r) {
            best = Some((residual, s.x.clone()));
        }
        if change < cfg.tol_rel_change && residual < cfg.tol_constraint {
            report.converged = true;
            break;
        }
    }

    let x = if report.converged {
        s.x
    } else {
        let (r, x) = best.expect("at least one outer iteration");
        report.final_constraint_residual = r;
        x
    };
    let data = x.into_iter().map(|v| v * scale).collect();
    Ok((template.with_data(data), report))
}
