//! Least-squares matching of the integral predictor to data.
//!
//! The optimizer works in user-chosen coordinates `z` related to the model's
//! `lambda` through a [`ParameterMap`]. Gradients are central finite
//! differences evaluated concurrently; the search is BFGS with a strong-Wolfe
//! line search.

use std::io::Write;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::Predictor;

/// Cost reported when the predictor cannot be evaluated.
pub const SENTINEL_COST: f64 = 1e30;

/// Bijection between optimizer coordinates and model parameters.
pub trait ParameterMap: Send + Sync {
    fn to_model(&self, z: &[f64]) -> Result<Vec<f64>>;
    fn to_optimizer(&self, lambda: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityMap;

impl ParameterMap for IdentityMap {
    fn to_model(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(z.to_vec())
    }

    fn to_optimizer(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        Ok(lambda.to_vec())
    }
}

/// A scalar objective with a gradient.
pub trait Objective: Sync {
    fn value(&self, z: &[f64]) -> f64;

    /// Gradient at `z`; `f0` is `value(z)`.
    fn gradient(&self, z: &[f64], f0: f64) -> Result<Vec<f64>>;
}

/// Central differences with step `step * max(1, |z_i|)`. All `2 dim(z)`
/// stencil points run concurrently; the reduction order is fixed.
///
/// A sentinel value on one side falls back to the one-sided quotient against
/// `f0`; sentinels on both sides are an error.
pub fn central_gradient<F>(f: &F, z: &[f64], f0: f64, step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    let k = z.len();
    let h: Vec<f64> = z.iter().map(|v| step * v.abs().max(1.0)).collect();
    let values: Vec<f64> = (0..2 * k)
        .into_par_iter()
        .map(|s| {
            let (i, sign) = (s / 2, if s % 2 == 0 { 1.0 } else { -1.0 });
            let mut zp = z.to_vec();
            zp[i] += sign * h[i];
            f(&zp)
        })
        .collect();
    let ok = |v: f64| v.is_finite() && v < SENTINEL_COST;
    (0..k)
        .map(|i| {
            let (fp, fm) = (values[2 * i], values[2 * i + 1]);
            match (ok(fp), ok(fm)) {
                (true, true) => Ok((fp - fm) / (2.0 * h[i])),
                (true, false) if ok(f0) => Ok((fp - f0) / h[i]),
                (false, true) if ok(f0) => Ok((f0 - fm) / h[i]),
                _ => Err(Error::Eval {
                    t: f64::NAN,
                    reason: format!("cost not finite on either side of component {i}"),
                }),
            }
        })
        .collect()
}

/// Plain function objective with a finite-difference gradient.
pub struct FdObjective<F> {
    pub f: F,
    pub step: f64,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for FdObjective<F> {
    fn value(&self, z: &[f64]) -> f64 {
        (self.f)(z)
    }

    fn gradient(&self, z: &[f64], f0: f64) -> Result<Vec<f64>> {
        central_gradient(&self.f, z, f0, self.step)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    /// Initial guess in model coordinates.
    pub lambda0: Vec<f64>,
    pub max_iters: usize,
    /// Relative finite-difference step.
    pub grad_step: f64,
    /// Sufficient-decrease constant.
    pub wolfe_c1: f64,
    /// Curvature constant.
    pub wolfe_c2: f64,
    /// Converged when `|grad|_inf <= grad_tol (1 + |f|)`.
    pub grad_tol: f64,
    /// Converged when `|step|_inf <= step_tol (1 + |z|_inf)`.
    pub step_tol: f64,
    pub max_line_search: usize,
    /// Use every `sample_stride`-th sample in the cost.
    pub sample_stride: usize,
    /// Extra randomly perturbed starts (0 disables).
    pub multi_start: usize,
    /// Relative spread of the extra starts.
    pub multi_start_spread: f64,
    pub seed: u64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            lambda0: Vec::new(),
            max_iters: 12000,
            grad_step: 1e-6,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            grad_tol: 1e-8,
            step_tol: 1e-12,
            max_line_search: 40,
            sample_stride: 1,
            multi_start: 0,
            multi_start_spread: 0.1,
            seed: 0,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grad_step", self.grad_step),
            ("grad_tol", self.grad_tol),
            ("step_tol", self.step_tol),
            ("wolfe_c1", self.wolfe_c1),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err(Error::invalid("Wolfe constants must satisfy 0 < c1 < c2 < 1"));
        }
        if self.max_iters == 0 || self.max_line_search == 0 {
            return Err(Error::invalid("max_iters and max_line_search must be at least 1"));
        }
        if self.sample_stride == 0 {
            return Err(Error::invalid("sample_stride must be at least 1"));
        }
        if self.lambda0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("lambda0 must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    LineSearchFailure,
    PredictorError,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    pub gradient_norm: f64,
    pub z: Vec<f64>,
}

/// Outcome of a BFGS run in optimizer coordinates.
#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub z: Vec<f64>,
    pub cost: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub trace: Vec<IterationRecord>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct LinePoint {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    dphi: f64,
}

struct LineSearch<'a, O: Objective + ?Sized> {
    obj: &'a O,
    z: &'a [f64],
    p: &'a [f64],
    f0: f64,
    dphi0: f64,
    c1: f64,
    c2: f64,
    budget: usize,
}

impl<O: Objective + ?Sized> LineSearch<'_, O> {
    fn point(&self, alpha: f64) -> Vec<f64> {
        self.z.iter().zip(self.p).map(|(z, p)| z + alpha * p).collect()
    }

    fn value(&self, alpha: f64) -> f64 {
        let f = self.obj.value(&self.point(alpha));
        if f.is_finite() {
            f
        } else {
            SENTINEL_COST
        }
    }

    fn with_gradient(&self, alpha: f64, f: f64) -> Option<LinePoint> {
        let g = self.obj.gradient(&self.point(alpha), f).ok()?;
        let dphi = dot(&g, self.p);
        Some(LinePoint { alpha, f, g, dphi })
    }

    fn armijo(&self, alpha: f64, f: f64) -> bool {
        f <= self.f0 + self.c1 * alpha * self.dphi0
    }

    /// Strong-Wolfe bracketing search.
    fn run(&mut self, alpha_init: f64) -> Option<LinePoint> {
        let mut prev = LinePoint {
            alpha: 0.0,
            f: self.f0,
            g: Vec::new(),
            dphi: self.dphi0,
        };
        let mut alpha = alpha_init;
        for i in 0.. {
            if self.budget == 0 {
                return None;
            }
            self.budget -= 1;
            let f = self.value(alpha);
            if !self.armijo(alpha, f) || (i > 0 && f >= prev.f) {
                return self.zoom(prev, (alpha, f, None));
            }
            let cur = self.with_gradient(alpha, f)?;
            if cur.dphi.abs() <= -self.c2 * self.dphi0 {
                return Some(cur);
            }
            if cur.dphi >= 0.0 {
                let hi = (cur.alpha, cur.f, Some(cur.dphi));
                return self.zoom(cur, hi);
            }
            prev = cur;
            alpha *= 2.0;
        }
        None
    }

    fn zoom(&mut self, mut lo: LinePoint, mut hi: (f64, f64, Option<f64>)) -> Option<LinePoint> {
        while self.budget > 0 {
            self.budget -= 1;
            let (a_lo, a_hi) = (lo.alpha, hi.0);
            let width = (a_hi - a_lo).abs();
            if width < 1e-16 * a_lo.abs().max(a_hi.abs()).max(1e-300) {
                return None;
            }
            // quadratic through (lo.f, lo.dphi, hi.f), safeguarded into the interior
            let d = a_hi - a_lo;
            let denom = 2.0 * (hi.1 - lo.f - lo.dphi * d);
            let mut alpha = if hi.1 < SENTINEL_COST && denom > 0.0 {
                a_lo - lo.dphi * d * d / denom
            } else {
                a_lo + 0.5 * d
            };
            let (lo_b, hi_b) = (a_lo.min(a_hi), a_lo.max(a_hi));
            let margin = 0.1 * width;
            if !(alpha > lo_b + margin && alpha < hi_b - margin) {
                alpha = a_lo + 0.5 * d;
            }
            let f = self.value(alpha);
            if !self.armijo(alpha, f) || f >= lo.f {
                hi = (alpha, f, None);
                continue;
            }
            let cur = self.with_gradient(alpha, f)?;
            if cur.dphi.abs() <= -self.c2 * self.dphi0 {
                return Some(cur);
            }
            if cur.dphi * (a_hi - a_lo) >= 0.0 {
                hi = (lo.alpha, lo.f, Some(lo.dphi));
            }
            lo = cur;
        }
        // best Armijo point found so far is still a descent step
        if lo.alpha > 0.0 {
            Some(lo)
        } else {
            None
        }
    }
}

/// BFGS with inverse-Hessian updates.
///
/// Accepted iterates never increase the cost. A failed line search resets the
/// inverse Hessian once; a second consecutive failure terminates.
pub fn bfgs<O: Objective + ?Sized>(obj: &O, z0: &[f64], cfg: &EstimationConfig) -> Result<BfgsOutcome> {
    let k = z0.len();
    let mut z = z0.to_vec();
    let mut f = obj.value(&z);
    if !(f.is_finite() && f < SENTINEL_COST) {
        return Err(Error::invalid("cost is not finite at the initial point"));
    }
    let mut g = obj.gradient(&z, f)?;
    let identity = |n: usize| {
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
        h
    };
    let mut h = identity(k);
    let mut fresh = true;
    let mut trace = vec![IterationRecord {
        iteration: 0,
        cost: f,
        gradient_norm: norm_inf(&g),
        z: z.clone(),
    }];
    let mut termination = Termination::MaxIters;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        if norm_inf(&g) <= cfg.grad_tol * (1.0 + f.abs()) {
            termination = Termination::Converged;
            break;
        }
        let mut p: Vec<f64> = (0..k).map(|i| -(0..k).map(|j| h[i * k + j] * g[j]).sum::<f64>()).collect();
        let mut dphi0 = dot(&p, &g);
        if !(dphi0 < 0.0) {
            h = identity(k);
            fresh = true;
            p = g.iter().map(|v| -v).collect();
            dphi0 = dot(&p, &g);
        }
        let alpha_init = if fresh {
            (1e-2 * (1.0 + norm_inf(&z)) / norm_inf(&p)).min(1.0)
        } else {
            1.0
        };
        let mut ls = LineSearch {
            obj,
            z: &z,
            p: &p,
            f0: f,
            dphi0,
            c1: cfg.wolfe_c1,
            c2: cfg.wolfe_c2,
            budget: cfg.max_line_search,
        };
        let Some(pt) = ls.run(alpha_init) else {
            if fresh {
                termination = Termination::LineSearchFailure;
                break;
            }
            log::debug!("line search failed at iteration {iterations}; resetting curvature");
            h = identity(k);
            fresh = true;
            continue;
        };
        iterations += 1;
        let s: Vec<f64> = p.iter().map(|v| pt.alpha * v).collect();
        let yv: Vec<f64> = pt.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        z = z.iter().zip(&s).map(|(a, b)| a + b).collect();
        f = pt.f;
        g = pt.g;
        trace.push(IterationRecord {
            iteration: iterations,
            cost: f,
            gradient_norm: norm_inf(&g),
            z: z.clone(),
        });

        let sy = dot(&s, &yv);
        if sy > 1e-300 {
            if fresh {
                let scale = sy / dot(&yv, &yv);
                h.iter_mut().for_each(|v| *v *= scale);
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..k).map(|i| (0..k).map(|j| h[i * k + j] * yv[j]).sum()).collect();
            let yhy = dot(&yv, &hy);
            for i in 0..k {
                for j in 0..k {
                    h[i * k + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        if norm_inf(&s) <= cfg.step_tol * (1.0 + norm_inf(&z)) {
            termination = Termination::Converged;
            break;
        }
    }
    if termination == Termination::MaxIters && norm_inf(&g) <= cfg.grad_tol * (1.0 + f.abs()) {
        termination = Termination::Converged;
    }
    Ok(BfgsOutcome {
        z,
        cost: f,
        gradient: g,
        iterations,
        termination,
        trace,
    })
}

/// Immutable state shared by all cost evaluations of one estimation.
pub struct EstimationContext<'a> {
    predictor: &'a Predictor,
    map: &'a dyn ParameterMap,
    indices: Vec<usize>,
    grad_step: f64,
    last_error: Mutex<Option<Error>>,
}

impl<'a> EstimationContext<'a> {
    pub fn new(predictor: &'a Predictor, map: &'a dyn ParameterMap, sample_stride: usize) -> Self {
        let stride = sample_stride.max(1);
        Self {
            predictor,
            map,
            indices: (0..predictor.signal().len()).step_by(stride).collect(),
            grad_step: 1e-6,
            last_error: Mutex::new(None),
        }
    }

    pub fn with_grad_step(mut self, step: f64) -> Self {
        self.grad_step = step;
        self
    }

    pub fn predictor(&self) -> &Predictor {
        self.predictor
    }

    pub fn map(&self) -> &dyn ParameterMap {
        self.map
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Most recent predictor failure seen by [`cost`](Self::cost).
    pub fn last_error(&self) -> Option<Error> {
        self.last_error.lock().ok().and_then(|e| e.clone())
    }

    /// Sum of squared residuals at optimizer coordinates `z`, or
    /// [`SENTINEL_COST`] when the predictor fails.
    pub fn cost(&self, z: &[f64]) -> f64 {
        let res = self
            .map
            .to_model(z)
            .and_then(|lambda| self.predictor.residual_sum(&lambda, Some(&self.indices)));
        match res {
            Ok(c) if c.is_finite() => c,
            Ok(_) => SENTINEL_COST,
            Err(e) => {
                if let Ok(mut slot) = self.last_error.lock() {
                    *slot = Some(e);
                }
                SENTINEL_COST
            }
        }
    }

    /// Cost at model parameters `lambda`.
    pub fn cost_at_model(&self, lambda: &[f64]) -> f64 {
        match self.map.to_optimizer(lambda) {
            Ok(z) => self.cost(&z),
            Err(_) => SENTINEL_COST,
        }
    }

    pub fn gradient_fd(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.gradient_fd_with_step(z, self.grad_step)
    }

    pub fn gradient_fd_with_step(&self, z: &[f64], step: f64) -> Result<Vec<f64>> {
        let f0 = self.cost(z);
        central_gradient(&|v: &[f64]| self.cost(v), z, f0, step)
    }
}

impl Objective for EstimationContext<'_> {
    fn value(&self, z: &[f64]) -> f64 {
        self.cost(z)
    }

    fn gradient(&self, z: &[f64], f0: f64) -> Result<Vec<f64>> {
        central_gradient(&|v: &[f64]| self.cost(v), z, f0, self.grad_step)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationResult {
    pub lambda_hat: Vec<f64>,
    pub z_hat: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub x0_hat: Vec<f64>,
    pub final_cost: f64,
    pub cost_history: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub gradient_norm: f64,
    #[serde(skip)]
    pub trace: Vec<IterationRecord>,
    pub predictor_error: Option<String>,
}

/// Runs BFGS from `cfg.lambda0` (and optional perturbed replicas) and
/// reconstructs `(x0, theta)` at the best point.
pub fn minimize(cfg: &EstimationConfig, ctx: &EstimationContext<'_>) -> Result<EstimationResult> {
    cfg.validate()?;
    let z0 = ctx.map.to_optimizer(&cfg.lambda0)?;
    let f0 = ctx.cost(&z0);
    if f0 >= SENTINEL_COST {
        let reason = ctx
            .last_error()
            .map(|e| e.to_string())
            .unwrap_or_else(|| "cost is not finite".into());
        return Err(Error::invalid(format!("initial guess is not admissible: {reason}")));
    }
    let mut starts = vec![z0.clone()];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.multi_start {
        starts.push(
            z0.iter()
                .map(|v| v * (1.0 + cfg.multi_start_spread * rng.random_range(-1.0..=1.0)))
                .collect(),
        );
    }
    let ctx_run = EstimationContext {
        predictor: ctx.predictor,
        map: ctx.map,
        indices: ctx.indices.clone(),
        grad_step: cfg.grad_step,
        last_error: Mutex::new(None),
    };
    let runs: Vec<Result<BfgsOutcome>> = if starts.len() == 1 {
        vec![bfgs(&ctx_run, &starts[0], cfg)]
    } else {
        starts.par_iter().map(|s| bfgs(&ctx_run, s, cfg)).collect()
    };
    let mut best: Option<BfgsOutcome> = None;
    let mut first_err = None;
    for run in runs {
        match run {
            Ok(o) => {
                if best.as_ref().is_none_or(|b| o.cost < b.cost) {
                    best = Some(o);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some(best) = best else {
        return Err(first_err.unwrap_or_else(|| Error::invalid("no optimizer run completed")));
    };

    let lambda_hat = ctx.map.to_model(&best.z)?;
    let (termination, theta_hat, x0_hat, predictor_error) = match ctx.predictor.evaluate(&lambda_hat) {
        Ok(res) => (best.termination, res.theta_hat, res.x0_hat, None),
        Err(e) => (Termination::PredictorError, Vec::new(), Vec::new(), Some(e.to_string())),
    };
    let predictor_error = predictor_error.or_else(|| ctx_run.last_error().map(|e| e.to_string()));
    Ok(EstimationResult {
        lambda_hat,
        z_hat: best.z.clone(),
        theta_hat,
        x0_hat,
        final_cost: best.cost,
        cost_history: best.trace.iter().map(|r| r.cost).collect(),
        iterations: best.iterations,
        termination,
        gradient_norm: norm_inf(&best.gradient),
        trace: best.trace,
        predictor_error,
    })
}

/// Per-iteration CSV: `iteration,cost,gradient_norm,z0,z1,...`.
pub fn write_trace<W: Write>(trace: &[IterationRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let k = trace.first().map_or(0, |r| r.z.len());
    let mut header = vec!["iteration".to_string(), "cost".into(), "gradient_norm".into()];
    header.extend((0..k).map(|i| format!("z{i}")));
    w.write_record(&header)?;
    for r in trace {
        let mut row = vec![r.iteration.to_string(), r.cost.to_string(), r.gradient_norm.to_string()];
        row.extend(r.z.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(z: &[f64]) -> f64 {
        z.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum()
    }

    #[test]
    fn quadratic_gradient() {
        let c = [1.0, -2.0, 30.0];
        let f = |z: &[f64]| z.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let z = [0.5, 0.5, -4.0];
        let g = central_gradient(&f, &z, f(&z), 1e-6).unwrap();
        for i in 0..3 {
            let exact = 2.0 * (z[i] - c[i]);
            assert!((g[i] - exact).abs() <= 1e-6 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn one_sided_fallback_and_failure() {
        let f = |z: &[f64]| if z[0] > 1.0 { SENTINEL_COST } else { z[0] * z[0] };
        let g = central_gradient(&f, &[1.0], 1.0, 1e-6).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-5);
        let bad = |_z: &[f64]| SENTINEL_COST;
        assert!(central_gradient(&bad, &[1.0], 1.0, 1e-6).is_err());
    }

    #[test]
    fn rosenbrock_seven_dimensions() {
        let obj = FdObjective { f: rosenbrock, step: 1e-7 };
        let cfg = EstimationConfig {
            max_iters: 2000,
            ..Default::default()
        };
        let out = bfgs(&obj, &[0.0; 7], &cfg).unwrap();
        for v in &out.z {
            assert!((v - 1.0).abs() < 1e-6, "{:?} {:?}", out.z, out.termination);
        }
        for w in out.trace.windows(2) {
            assert!(w[1].cost <= w[0].cost);
        }
    }

    #[test]
    fn deterministic_iterates() {
        let obj = FdObjective { f: rosenbrock, step: 1e-7 };
        let cfg = EstimationConfig {
            max_iters: 50,
            ..Default::default()
        };
        let a = bfgs(&obj, &[0.3, -0.2, 0.1], &cfg).unwrap();
        let b = bfgs(&obj, &[0.3, -0.2, 0.1], &cfg).unwrap();
        let bits = |o: &BfgsOutcome| o.trace.iter().flat_map(|r| r.z.iter().map(|v| v.to_bits())).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn config_validation() {
        assert!(EstimationConfig::default().validate().is_ok());
        let bad = EstimationConfig {
            wolfe_c2: 1e-5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = EstimationConfig {
            sample_stride: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn trace_csv_header() {
        let trace = vec![IterationRecord {
            iteration: 0,
            cost: 1.5,
            gradient_norm: 0.25,
            z: vec![1.0, 2.0],
        }];
        let mut buf = Vec::new();
        write_trace(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,cost,gradient_norm,z0,z1\n0,1.5,0.25,1,2"));
    }
}
