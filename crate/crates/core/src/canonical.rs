//! Systems in adaptive-observer canonical form and closed-form elimination of
//! the auxiliary state.
//!
//! The measured part is
//!
//! ```text
//! x' = A0 x + b phi(y,t)^T theta + g(y, lambda, t, q)
//! y  = x_1
//! ```
//!
//! with `A0` the upper shift matrix and `b = (1, b_1, ..., b_{n-1})`. The
//! optional auxiliary state obeys the diagonal linear dynamics
//! `q_i' = alpha_i(y, lambda, t) q_i + w_i(y, lambda, t)`; for periodic `y`
//! it is replaced by its unique periodic solution.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::signal::{QuadratureGrid, SampledSignal};

/// `phi(y, t, out)`, `out.len() == r`.
pub type RegressorFn = dyn Fn(f64, f64, &mut [f64]) + Send + Sync;
/// `g(y, lambda, t, q, out)`, `out.len() == n`; `q` holds the auxiliary states at `t`.
pub type NonlinearityFn = dyn Fn(f64, &[f64], f64, &[f64], &mut [f64]) + Send + Sync;
/// `alpha(y, lambda, t, out)` or `w(y, lambda, t, out)`, `out.len() == d`.
pub type AuxFn = dyn Fn(f64, &[f64], f64, &mut [f64]) + Send + Sync;

pub const HURWITZ_EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct HurwitzCheck {
    pub stable: bool,
    pub roots: Vec<Complex<f64>>,
}

/// Roots of `s^{n-1} + b_1 s^{n-2} + ... + b_{n-1}` and whether all of them
/// have real part below `-HURWITZ_EPS`. The leading entry of `b` is ignored.
pub fn check_hurwitz(b: &[f64]) -> Result<HurwitzCheck> {
    if b.is_empty() {
        return Err(Error::invalid("b must have at least one entry"));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("b has non-finite coefficients"));
    }
    let deg = b.len() - 1;
    if deg == 0 {
        return Ok(HurwitzCheck {
            stable: true,
            roots: Vec::new(),
        });
    }
    // companion matrix of the monic polynomial
    let mut m = DMatrix::<f64>::zeros(deg, deg);
    for j in 0..deg {
        m[(0, j)] = -b[j + 1];
    }
    for i in 1..deg {
        m[(i, i - 1)] = 1.0;
    }
    let roots: Vec<Complex<f64>> = m.complex_eigenvalues().iter().copied().collect();
    let stable = roots.iter().all(|z| z.re < -HURWITZ_EPS);
    Ok(HurwitzCheck { stable, roots })
}

/// Diagonal auxiliary dynamics `q' = diag(alpha) q + w`.
#[derive(Clone)]
pub struct AuxStateSpec {
    pub d: usize,
    pub alpha: Arc<AuxFn>,
    pub w: Arc<AuxFn>,
}

impl fmt::Debug for AuxStateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AuxStateSpec").field("d", &self.d).finish_non_exhaustive()
    }
}

impl AuxStateSpec {
    pub fn new(
        d: usize,
        alpha: impl Fn(f64, &[f64], f64, &mut [f64]) + Send + Sync + 'static,
        w: impl Fn(f64, &[f64], f64, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            d,
            alpha: Arc::new(alpha),
            w: Arc::new(w),
        }
    }
}

#[derive(Clone)]
pub struct CanonicalForm {
    n: usize,
    r: usize,
    k_lambda: usize,
    b: Vec<f64>,
    regressor: Arc<RegressorFn>,
    nonlinearity: Arc<NonlinearityFn>,
    aux: Option<AuxStateSpec>,
}

impl fmt::Debug for CanonicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CanonicalForm")
            .field("n", &self.n)
            .field("r", &self.r)
            .field("k_lambda", &self.k_lambda)
            .field("b", &self.b)
            .field("aux", &self.aux)
            .finish_non_exhaustive()
    }
}

impl CanonicalForm {
    /// Validates `b` (leading 1, Hurwitz tail) and wraps the model maps.
    pub fn new(
        b: Vec<f64>,
        r: usize,
        k_lambda: usize,
        regressor: impl Fn(f64, f64, &mut [f64]) + Send + Sync + 'static,
        nonlinearity: impl Fn(f64, &[f64], f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        if b.is_empty() {
            return Err(Error::invalid("state dimension n must be at least 1"));
        }
        if b[0] != 1.0 {
            return Err(Error::invalid(format!("leading entry of b must be 1, got {}", b[0])));
        }
        if r == 0 {
            return Err(Error::invalid("regressor dimension r must be at least 1"));
        }
        let check = check_hurwitz(&b)?;
        if !check.stable {
            return Err(Error::invalid(format!(
                "b polynomial is not Hurwitz, roots {:?}",
                check.roots
            )));
        }
        Ok(Self {
            n: b.len(),
            r,
            k_lambda,
            b,
            regressor: Arc::new(regressor),
            nonlinearity: Arc::new(nonlinearity),
            aux: None,
        })
    }

    pub fn with_aux(mut self, aux: AuxStateSpec) -> Self {
        self.aux = Some(aux);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Extended dimension `n + r`.
    pub fn dim(&self) -> usize {
        self.n + self.r
    }

    pub fn k_lambda(&self) -> usize {
        self.k_lambda
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn aux(&self) -> Option<&AuxStateSpec> {
        self.aux.as_ref()
    }

    pub fn aux_dim(&self) -> usize {
        self.aux.as_ref().map_or(0, |a| a.d)
    }

    pub fn regressor_into(&self, y: f64, t: f64, out: &mut [f64]) {
        (self.regressor)(y, t, out)
    }

    pub fn regressor(&self, y: f64, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.r];
        self.regressor_into(y, t, &mut out);
        out
    }

    pub fn nonlinearity_into(&self, y: f64, lambda: &[f64], t: f64, q: &[f64], out: &mut [f64]) {
        (self.nonlinearity)(y, lambda, t, q, out)
    }

    pub fn nonlinearity(&self, y: f64, lambda: &[f64], t: f64, q: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.nonlinearity_into(y, lambda, t, q, &mut out);
        out
    }

    /// Right-hand side of the measured subsystem, `A0 x + b phi^T theta + g`,
    /// at a known state. Used to cross-check model decompositions.
    pub fn state_derivative(&self, x: &[f64], theta: &[f64], lambda: &[f64], t: f64, q: &[f64]) -> Vec<f64> {
        let y = x[0];
        let phi = self.regressor(y, t);
        let pt: f64 = phi.iter().zip(theta).map(|(a, b)| a * b).sum();
        let g = self.nonlinearity(y, lambda, t, q);
        (0..self.n)
            .map(|i| {
                let shift = if i + 1 < self.n { x[i + 1] } else { 0.0 };
                shift + self.b[i] * pt + g[i]
            })
            .collect()
    }
}

/// Periodic auxiliary trajectories and their common initial value.
#[derive(Debug, Clone)]
pub struct AuxSolution {
    /// One signal per auxiliary component, sampled on the quadrature grid.
    pub q: Vec<SampledSignal>,
    pub q0: Vec<f64>,
}

/// Periodic solution of `q' = alpha(t) q + w(t)` on a uniform grid.
///
/// `alpha` and `w` are node values over one period (`M + 1` nodes, first and
/// last at `t0` and `t0 + T`). Returns the node values of `q` and `q0`.
///
/// The particular solution is advanced interval by interval with the kernel
/// `exp(A(t_{k+1}) - A(z))`, which keeps every exponent local and bounded.
pub fn periodic_scalar_solution(alpha: &[f64], w: &[f64], h: f64, t0: f64) -> Result<(Vec<f64>, f64)> {
    let n = alpha.len();
    debug_assert_eq!(w.len(), n);
    let a = quadrature::cumulative(alpha, h);
    let total = a[n - 1];
    if !(total < 0.0) {
        return Err(Error::Periodicity(format!(
            "auxiliary dynamics not contracting over one period (integral of alpha = {total})"
        )));
    }
    let denom = 1.0 - total.exp();
    if denom.abs() < 1e-12 {
        return Err(Error::Conditioning(format!(
            "1 - exp(integral alpha) = {denom:e} is too close to zero"
        )));
    }
    let c = h / 24.0;
    let mut p = vec![0.0; n];
    for k in 0..n - 1 {
        let top = a[k + 1];
        let kern = |j: usize| (top - a[j]).exp() * w[j];
        let inc = if k == 0 {
            c * (9.0 * kern(0) + 19.0 * kern(1) - 5.0 * kern(2) + kern(3))
        } else if k == n - 2 {
            c * (9.0 * kern(n - 1) + 19.0 * kern(n - 2) - 5.0 * kern(n - 3) + kern(n - 4))
        } else {
            c * (-kern(k - 1) + 13.0 * (kern(k) + kern(k + 1)) - kern(k + 2))
        };
        p[k + 1] = (a[k + 1] - a[k]).exp() * p[k] + inc;
    }
    let q0 = p[n - 1] / denom;
    if !q0.is_finite() {
        return Err(Error::Eval {
            t: t0,
            reason: "auxiliary initial value is not finite".into(),
        });
    }
    let q = a.iter().zip(&p).map(|(ak, pk)| ak.exp() * q0 + pk).collect();
    Ok((q, q0))
}

/// Evaluates the auxiliary states on `grid` for parameters `lambda`, node-major
/// (`out[k * d + i]`). Returns `q0`.
pub(crate) fn aux_on_grid(spec: &AuxStateSpec, lambda: &[f64], grid: &QuadratureGrid, out: &mut Vec<f64>) -> Result<Vec<f64>> {
    let d = spec.d;
    let nodes = grid.times.len();
    let mut alpha = vec![0.0; nodes * d];
    let mut w = vec![0.0; nodes * d];
    for k in 0..nodes {
        let (t, y) = (grid.times[k], grid.y[k]);
        (spec.alpha)(y, lambda, t, &mut alpha[k * d..(k + 1) * d]);
        (spec.w)(y, lambda, t, &mut w[k * d..(k + 1) * d]);
        let bad = alpha[k * d..(k + 1) * d]
            .iter()
            .chain(&w[k * d..(k + 1) * d])
            .any(|v| !v.is_finite());
        if bad {
            return Err(Error::Eval {
                t,
                reason: "auxiliary dynamics returned a non-finite value".into(),
            });
        }
    }
    out.clear();
    out.resize(nodes * d, 0.0);
    let mut q0 = Vec::with_capacity(d);
    let mut ai = vec![0.0; nodes];
    let mut wi = vec![0.0; nodes];
    for i in 0..d {
        for k in 0..nodes {
            ai[k] = alpha[k * d + i];
            wi[k] = w[k * d + i];
        }
        let (qi, q0i) = periodic_scalar_solution(&ai, &wi, grid.h, grid.t0)?;
        for k in 0..nodes {
            out[k * d + i] = qi[k];
        }
        q0.push(q0i);
    }
    Ok(q0)
}

/// Closed-form periodic auxiliary trajectories for measured `y`.
///
/// The returned signals live on the quadrature grid with `nodes_per_sample`
/// nodes per sample interval of `y`.
pub fn aux_state_closed_form(
    spec: &AuxStateSpec,
    lambda: &[f64],
    y: &SampledSignal,
    nodes_per_sample: usize,
) -> Result<AuxSolution> {
    let grid = QuadratureGrid::new(y, nodes_per_sample)?;
    let mut values = Vec::new();
    let q0 = aux_on_grid(spec, lambda, &grid, &mut values)?;
    let d = spec.d;
    let m = grid.intervals();
    let q = (0..d)
        .map(|i| {
            let samples = (0..m).map(|k| values[k * d + i]).collect();
            SampledSignal::new(samples, y.t0(), y.period())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AuxSolution { q, q0 })
}
