//! Observer gain selection and the fundamental matrix of the extended
//! (state + parameter) error dynamics
//!
//! ```text
//! d/dt xi = [ A0 + l C^T    b phi(y(t),t)^T ] xi
//!           [ -phi(y(t),t) C^T       0      ]
//! ```
//!
//! integrated once over a period from the identity.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::canonical::{check_hurwitz, CanonicalForm};
use crate::error::{Error, Result};
use crate::ode::{Scheme, Stepper};
use crate::signal::{QuadratureGrid, SampledSignal};

/// Lyapunov certificate `P (A0 + l C^T) + (A0 + l C^T)^T P = -Q`, `P b = C`.
#[derive(Debug, Clone)]
pub struct MkyCertificate {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    /// Frobenius norm of `P A + A^T P + Q`.
    pub lyapunov_residual: f64,
    /// Euclidean norm of `P b - C`.
    pub pb_residual: f64,
}

#[derive(Debug, Clone)]
pub struct ObserverGain {
    l: Vec<f64>,
    certificate: Option<MkyCertificate>,
}

impl ObserverGain {
    /// Accepts a user-supplied gain after checking that the closed loop is Hurwitz.
    pub fn from_vector(system: &CanonicalForm, l: Vec<f64>) -> Result<Self> {
        if l.len() != system.n() {
            return Err(Error::invalid(format!(
                "gain has length {}, expected {}",
                l.len(),
                system.n()
            )));
        }
        let a = closed_loop(system.n(), &l);
        if spectral_abscissa(&a) >= 0.0 {
            return Err(Error::GainSelection(format!("A0 + l C^T is not Hurwitz for l = {l:?}")));
        }
        Ok(Self { l, certificate: None })
    }

    pub fn l(&self) -> &[f64] {
        &self.l
    }

    pub fn certificate(&self) -> Option<&MkyCertificate> {
        self.certificate.as_ref()
    }
}

/// `A0 + l C^T`: upper shift matrix with `l` added to the first column.
pub fn closed_loop(n: usize, l: &[f64]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        if i + 1 < n {
            a[(i, i + 1)] = 1.0;
        }
        a[(i, 0)] += l[i];
    }
    a
}

fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Solves `A^T P + P A = -Q` by Kronecker vectorization (small `n` only).
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let k = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Conditioning("Lyapunov operator is singular".into()))?;
    let p = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.clone().cholesky().is_some()
}

fn certify(system: &CanonicalForm, l: &[f64], q: &DMatrix<f64>) -> Result<MkyCertificate> {
    let n = system.n();
    let a = closed_loop(n, l);
    let p = solve_lyapunov(&a, q)?;
    let lyap = (&p * &a + a.transpose() * &p + q).norm();
    let b = DVector::from_column_slice(system.b());
    let mut c = DVector::zeros(n);
    c[0] = 1.0;
    let pb = (&p * b - c).norm();
    Ok(MkyCertificate {
        p,
        q: q.clone(),
        lyapunov_residual: lyap,
        pb_residual: pb,
    })
}

/// Finds `l` with a certificate for the given `Q` (identity when `None`).
///
/// For fixed `Q` the Lyapunov solution `P(l)` is unique, so `P(l) b = C` is
/// `n` equations in `n` unknowns; it is solved by Newton's method started from
/// gains that place the closed-loop poles at `-k` and the zeros of the `b`
/// polynomial.
pub fn select_gain(system: &CanonicalForm, q: Option<&DMatrix<f64>>) -> Result<ObserverGain> {
    let n = system.n();
    if !check_hurwitz(system.b())?.stable {
        return Err(Error::GainSelection("b polynomial is not Hurwitz".into()));
    }
    let q = match q {
        Some(q) => q.clone(),
        None => DMatrix::identity(n, n),
    };
    if q.shape() != (n, n) {
        return Err(Error::invalid(format!("Q must be {n}x{n}")));
    }
    if (&q - q.transpose()).norm() > 1e-12 * (1.0 + q.norm()) || !is_positive_definite(&q) {
        return Err(Error::invalid("Q must be symmetric positive definite"));
    }

    let b = system.b();
    let coeff = |i: usize| if i < n { b[i] } else { 0.0 };
    let mut c = DVector::zeros(n);
    c[0] = 1.0;
    let bvec = DVector::from_column_slice(b);
    let residual = |l: &[f64]| -> Option<DVector<f64>> {
        let a = closed_loop(n, l);
        let p = solve_lyapunov(&a, &q).ok()?;
        Some(&p * &bvec - &c)
    };

    for k in [1.0, 0.5, 2.0, 4.0] {
        let mut l: Vec<f64> = (1..=n).map(|i| -(coeff(i) + k * coeff(i - 1))).collect();
        for _ in 0..60 {
            let Some(f) = residual(&l) else { break };
            if f.norm() < 1e-13 {
                break;
            }
            let mut jac = DMatrix::zeros(n, n);
            for j in 0..n {
                let h = 1e-7 * l[j].abs().max(1.0);
                let mut lp = l.clone();
                lp[j] += h;
                let mut lm = l.clone();
                lm[j] -= h;
                let (Some(fp), Some(fm)) = (residual(&lp), residual(&lm)) else { break };
                jac.set_column(j, &((fp - fm) / (2.0 * h)));
            }
            let Some(step) = jac.lu().solve(&(-&f)) else { break };
            // damped: the trial must stay Hurwitz and reduce the residual
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<f64> = l.iter().zip(step.iter()).map(|(li, si)| li + t * si).collect();
                if trial.iter().all(|v| v.is_finite()) && spectral_abscissa(&closed_loop(n, &trial)) < 0.0 {
                    if let Some(ft) = residual(&trial) {
                        if ft.norm() < f.norm() {
                            l = trial;
                            accepted = true;
                            break;
                        }
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if l.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let a = closed_loop(n, &l);
        if spectral_abscissa(&a) >= 0.0 {
            continue;
        }
        let Ok(cert) = certify(system, &l, &q) else { continue };
        let scale = 1.0 + cert.p.norm() + q.norm();
        if cert.pb_residual <= 1e-8 && cert.lyapunov_residual <= 1e-8 * scale && is_positive_definite(&cert.p) {
            return Ok(ObserverGain {
                l,
                certificate: Some(cert),
            });
        }
    }
    Err(Error::GainSelection(format!(
        "Newton search for P(l) b = C did not converge for Q = {q}"
    )))
}

/// Writes the extended matrix at `(y, t)` into `out`, row-major `(n+r)^2`.
pub fn extended_matrix_into(system: &CanonicalForm, gain: &ObserverGain, y: f64, t: f64, phi_buf: &mut [f64], out: &mut [f64]) {
    let n = system.n();
    let m = system.dim();
    out.fill(0.0);
    for i in 0..n {
        if i + 1 < n {
            out[i * m + i + 1] = 1.0;
        }
        out[i * m] += gain.l[i];
    }
    system.regressor_into(y, t, phi_buf);
    let b = system.b();
    for i in 0..n {
        for (j, p) in phi_buf.iter().enumerate() {
            out[i * m + n + j] = b[i] * p;
        }
    }
    for (j, p) in phi_buf.iter().enumerate() {
        out[(n + j) * m] = -p;
    }
}

/// The extended matrix at time `t` for measured signal `y`.
pub fn build_extended_matrix(system: &CanonicalForm, gain: &ObserverGain, y: &SampledSignal, t: f64) -> DMatrix<f64> {
    let m = system.dim();
    let mut buf = vec![0.0; m * m];
    let mut phi = vec![0.0; system.r()];
    extended_matrix_into(system, gain, y.eval(t), t, &mut phi, &mut buf);
    DMatrix::from_row_slice(m, m, &buf)
}

/// Off-node lookup rule for [`FundamentalMatrixGrid::phi_at`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiLookup {
    #[default]
    Nearest,
    Linear,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhiConfig {
    /// Integrator step; rounded so that it divides the quadrature spacing.
    pub dt_int: f64,
    /// Quadrature intervals per sample interval of the signal.
    pub nodes_per_sample: usize,
    pub scheme: Scheme,
    /// Largest admissible 1-norm condition number of a stored matrix.
    pub cond_bound: f64,
    pub lookup: PhiLookup,
}

impl Default for PhiConfig {
    fn default() -> Self {
        Self {
            dt_int: 2e-4,
            nodes_per_sample: 40,
            scheme: Scheme::DormandPrince5,
            cond_bound: 1e12,
            lookup: PhiLookup::Nearest,
        }
    }
}

/// `Phi(t_k, t0)` and its inverse at every quadrature node of one period.
#[derive(Debug, Clone)]
pub struct FundamentalMatrixGrid {
    t0: f64,
    period: f64,
    dim: usize,
    grid: QuadratureGrid,
    /// Row-major matrices, node-major.
    matrices: Vec<f64>,
    inverses: Vec<f64>,
    lookup: PhiLookup,
    steps_per_node: usize,
    scheme: Scheme,
}

fn one_norm(m: &[f64], dim: usize) -> f64 {
    (0..dim)
        .map(|j| (0..dim).map(|i| m[i * dim + j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Integrates the extended system column-wise from the identity over one
/// period of `y` and stores `Phi` and `Phi^-1` at every quadrature node.
pub fn compute_phi_grid(
    system: &CanonicalForm,
    gain: &ObserverGain,
    y: &SampledSignal,
    cfg: &PhiConfig,
) -> Result<FundamentalMatrixGrid> {
    if !(cfg.dt_int.is_finite() && cfg.dt_int > 0.0) {
        return Err(Error::invalid(format!("dt_int must be positive, got {}", cfg.dt_int)));
    }
    let grid = QuadratureGrid::new(y, cfg.nodes_per_sample)?;
    let steps = ((grid.h / cfg.dt_int).round() as usize).max(1);
    let hs = grid.h / steps as f64;
    // sub-percent adjustments are routine since the sample spacing is T / N
    if (hs - cfg.dt_int).abs() > 0.01 * cfg.dt_int {
        log::warn!(
            "dt_int = {} does not divide the quadrature spacing {}; using {hs}",
            cfg.dt_int,
            grid.h
        );
    }
    let m = system.dim();
    let nodes = grid.times.len();
    let mut matrices = Vec::with_capacity(nodes * m * m);
    let mut state = DMatrix::<f64>::identity(m, m).as_slice().to_vec(); // symmetric, layout-agnostic
    matrices.extend_from_slice(&state);

    let mut stepper = Stepper::new(cfg.scheme, m * m);
    let mut a = vec![0.0; m * m];
    let mut phi_buf = vec![0.0; system.r()];
    let mut rhs = |t: f64, x: &[f64], dx: &mut [f64]| {
        extended_matrix_into(system, gain, y.eval(t), t, &mut phi_buf, &mut a);
        row_major_mul(&a, x, m, dx);
    };
    for k in 0..nodes - 1 {
        let tk = grid.times[k];
        for s in 0..steps {
            stepper.step(&mut rhs, tk + s as f64 * hs, hs, &mut state);
        }
        if let Some(bad) = state.iter().position(|v| !v.is_finite()) {
            return Err(Error::Integration {
                t: grid.times[k + 1],
                reason: format!("non-finite fundamental matrix entry {bad}"),
            });
        }
        matrices.extend_from_slice(&state);
    }

    let mut inverses = Vec::with_capacity(matrices.len());
    for k in 0..nodes {
        let blk = &matrices[k * m * m..(k + 1) * m * m];
        let inv = DMatrix::from_row_slice(m, m, blk)
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Conditioning(format!("Phi singular at t = {}", grid.times[k])))?;
        let inv_rm: Vec<f64> = inv.transpose().as_slice().to_vec();
        let cond = one_norm(blk, m) * one_norm(&inv_rm, m);
        if !(cond <= cfg.cond_bound) {
            return Err(Error::Conditioning(format!(
                "cond(Phi) = {cond:e} at t = {} exceeds {:e}",
                grid.times[k], cfg.cond_bound
            )));
        }
        inverses.extend_from_slice(&inv_rm);
    }

    Ok(FundamentalMatrixGrid {
        t0: y.t0(),
        period: y.period(),
        dim: m,
        grid,
        matrices,
        inverses,
        lookup: cfg.lookup,
        steps_per_node: steps,
        scheme: cfg.scheme,
    })
}

/// `out = a * x` for row-major square matrices.
#[inline]
pub(crate) fn row_major_mul(a: &[f64], x: &[f64], m: usize, out: &mut [f64]) {
    for i in 0..m {
        for j in 0..m {
            let mut s = 0.0;
            for k in 0..m {
                s += a[i * m + k] * x[k * m + j];
            }
            out[i * m + j] = s;
        }
    }
}

/// Fresh integration of `Phi(t_end, t_start)` with `steps` uniform steps.
pub fn propagate(
    system: &CanonicalForm,
    gain: &ObserverGain,
    y: &SampledSignal,
    t_start: f64,
    t_end: f64,
    steps: usize,
    scheme: Scheme,
) -> Result<DMatrix<f64>> {
    let m = system.dim();
    let steps = steps.max(1);
    let hs = (t_end - t_start) / steps as f64;
    let mut state = DMatrix::<f64>::identity(m, m).as_slice().to_vec();
    let mut stepper = Stepper::new(scheme, m * m);
    let mut a = vec![0.0; m * m];
    let mut phi_buf = vec![0.0; system.r()];
    let mut rhs = |t: f64, x: &[f64], dx: &mut [f64]| {
        extended_matrix_into(system, gain, y.eval(t), t, &mut phi_buf, &mut a);
        row_major_mul(&a, x, m, dx);
    };
    for s in 0..steps {
        stepper.step(&mut rhs, t_start + s as f64 * hs, hs, &mut state);
    }
    if state.iter().any(|v| !v.is_finite()) {
        return Err(Error::Integration {
            t: t_end,
            reason: "non-finite fundamental matrix".into(),
        });
    }
    Ok(DMatrix::from_row_slice(m, m, &state))
}

impl FundamentalMatrixGrid {
    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Spacing of the stored nodes.
    pub fn dt_grid(&self) -> f64 {
        self.grid.h
    }

    /// Integrator step actually used.
    pub fn dt_int(&self) -> f64 {
        self.grid.h / self.steps_per_node as f64
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn quadrature(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn node_count(&self) -> usize {
        self.grid.times.len()
    }

    pub fn node_time(&self, k: usize) -> f64 {
        self.grid.times[k]
    }

    /// Row-major slice of `Phi(t_k, t0)`.
    pub fn matrix_slice(&self, k: usize) -> &[f64] {
        let mm = self.dim * self.dim;
        &self.matrices[k * mm..(k + 1) * mm]
    }

    pub fn inverse_slice(&self, k: usize) -> &[f64] {
        let mm = self.dim * self.dim;
        &self.inverses[k * mm..(k + 1) * mm]
    }

    pub fn matrix(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, self.matrix_slice(k))
    }

    pub fn inverse(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, self.inverse_slice(k))
    }

    /// `Phi(t0 + T, t0)`.
    pub fn monodromy(&self) -> DMatrix<f64> {
        self.matrix(self.node_count() - 1)
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let hi = self.t0 + self.period;
        let tol = 1e-9 * self.period;
        if !(t >= self.t0 - tol && t <= hi + tol) {
            return Err(Error::Range { t, lo: self.t0, hi });
        }
        let last = self.node_count() - 1;
        let u = ((t - self.t0) / self.grid.h).clamp(0.0, last as f64);
        let k = u.round();
        if (u - k).abs() < 1e-9 {
            return Ok((k as usize, 0.0));
        }
        let base = (u.floor() as usize).min(last - 1);
        Ok((base, u - base as f64))
    }

    /// `Phi(t, t0)` for `t` in `[t0, t0 + T]`.
    pub fn phi_at(&self, t: f64) -> Result<DMatrix<f64>> {
        let (k, frac) = self.locate(t)?;
        if frac == 0.0 {
            return Ok(self.matrix(k));
        }
        Ok(match self.lookup {
            PhiLookup::Nearest => self.matrix(if frac < 0.5 { k } else { k + 1 }),
            PhiLookup::Linear => self.matrix(k) * (1.0 - frac) + self.matrix(k + 1) * frac,
        })
    }

    /// Inverse of [`phi_at`](Self::phi_at); stored LU inverse on nodes.
    pub fn phi_inv_at(&self, t: f64) -> Result<DMatrix<f64>> {
        let (k, frac) = self.locate(t)?;
        if frac == 0.0 {
            return Ok(self.inverse(k));
        }
        if self.lookup == PhiLookup::Nearest {
            return Ok(self.inverse(if frac < 0.5 { k } else { k + 1 }));
        }
        self.phi_at(t)?
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Conditioning(format!("interpolated Phi singular at t = {t}")))
    }

    /// Debug dump: one row per node, `t` followed by the row-major entries.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        for i in 0..self.dim {
            for j in 0..self.dim {
                header.push(format!("phi_{i}{j}"));
            }
        }
        w.write_record(&header)?;
        for k in 0..self.node_count() {
            let mut row = vec![self.node_time(k).to_string()];
            row.extend(self.matrix_slice(k).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
