//! Integral predictor for periodic data.
//!
//! For a candidate `lambda` the extended observer has a unique periodic
//! solution
//!
//! ```text
//! V(t) = Phi(t) (R + S(t)),   S(t) = int_{t0}^{t} Phi(s)^-1 F(s) ds,
//! R    = (I - M)^-1 M S(t0 + T),   M = Phi(t0 + T)
//! ```
//!
//! with forcing `F = (g(y, lambda, t, q) - l y ; y phi(y, t))`. The first
//! entry of `V` is the predicted output; `R` splits into `(x0, theta)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::canonical::{aux_on_grid, CanonicalForm};
use crate::error::{Error, Result};
use crate::fundamental::{compute_phi_grid, FundamentalMatrixGrid, ObserverGain, PhiConfig};
use crate::quadrature::cumulative_vec_into;
use crate::signal::SampledSignal;

pub const DEFAULT_CONDITION_LIMIT: f64 = 1e8;

/// `(g(y, lambda, t, q) - l y ; y phi(y, t))`.
pub fn forcing_vector(
    system: &CanonicalForm,
    gain: &ObserverGain,
    y: f64,
    t: f64,
    lambda: &[f64],
    q: &[f64],
) -> Result<Vec<f64>> {
    let (n, r) = (system.n(), system.r());
    let mut out = vec![0.0; n + r];
    system.nonlinearity_into(y, lambda, t, q, &mut out[..n]);
    for (o, l) in out[..n].iter_mut().zip(gain.l()) {
        *o -= l * y;
    }
    system.regressor_into(y, t, &mut out[n..]);
    for o in &mut out[n..] {
        *o *= y;
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eval {
            t,
            reason: "forcing vector is not finite".into(),
        });
    }
    Ok(out)
}

/// Splits `R` into `(x0, theta)`.
pub fn reconstruct(r_vec: &[f64], n: usize, r: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if r_vec.len() != n + r {
        return Err(Error::invalid(format!(
            "boundary vector has length {}, expected {}",
            r_vec.len(),
            n + r
        )));
    }
    Ok((r_vec[..n].to_vec(), r_vec[n..].to_vec()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorResult {
    pub lambda: Vec<f64>,
    pub r: Vec<f64>,
    /// Prediction on the sample times of the measured signal.
    pub y_hat: Vec<f64>,
    pub x0_hat: Vec<f64>,
    pub theta_hat: Vec<f64>,
    /// 2-norm condition number of `I - M`.
    pub monodromy_condition: f64,
}

/// Everything about the predictor that does not depend on `lambda`.
///
/// `Phi` depends on the measured signal only, so it is built once and every
/// evaluation reduces to one pass of quadrature over `g`.
#[derive(Debug, Clone)]
pub struct Predictor {
    system: CanonicalForm,
    gain: ObserverGain,
    signal: SampledSignal,
    phi: FundamentalMatrixGrid,
    /// Running integral of `Phi^-1 (-l y ; y phi)`, node-major.
    base_integral: Vec<f64>,
    /// `(I - M)^-1 M`.
    fix: DMatrix<f64>,
    spectral_radius: f64,
    monodromy_condition: f64,
}

impl Predictor {
    /// Builds `Phi` for `signal` and prepares the predictor.
    pub fn new(
        system: CanonicalForm,
        gain: ObserverGain,
        signal: SampledSignal,
        phi_cfg: &PhiConfig,
        condition_limit: f64,
    ) -> Result<Self> {
        let phi = compute_phi_grid(&system, &gain, &signal, phi_cfg)?;
        Self::from_grid(system, gain, signal, phi, condition_limit)
    }

    pub fn from_grid(
        system: CanonicalForm,
        gain: ObserverGain,
        signal: SampledSignal,
        phi: FundamentalMatrixGrid,
        condition_limit: f64,
    ) -> Result<Self> {
        let m = system.dim();
        if phi.dim() != m {
            return Err(Error::invalid("fundamental matrix grid does not match the system"));
        }
        let mono = phi.monodromy();
        let spectral_radius = mono.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !(spectral_radius < 1.0) {
            return Err(Error::Stability(format!(
                "monodromy spectral radius {spectral_radius} is not below 1"
            )));
        }
        let i_minus = DMatrix::<f64>::identity(m, m) - &mono;
        let sv = i_minus.clone().singular_values();
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let monodromy_condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(monodromy_condition <= condition_limit) {
            return Err(Error::Conditioning(format!(
                "cond(I - M) = {monodromy_condition:e} exceeds {condition_limit:e}"
            )));
        }
        let fix = i_minus
            .lu()
            .solve(&mono)
            .ok_or_else(|| Error::Conditioning("I - M is singular".into()))?;

        let grid = phi.quadrature();
        let n = system.n();
        let nodes = grid.times.len();
        let mut integrand = vec![0.0; nodes * m];
        let mut f = vec![0.0; m];
        for k in 0..nodes {
            let (t, y) = (grid.times[k], grid.y[k]);
            for (fi, l) in f[..n].iter_mut().zip(gain.l()) {
                *fi = -l * y;
            }
            system.regressor_into(y, t, &mut f[n..]);
            for v in &mut f[n..] {
                *v *= y;
            }
            let inv = phi.inverse_slice(k);
            for i in 0..m {
                integrand[k * m + i] = (0..m).map(|j| inv[i * m + j] * f[j]).sum();
            }
        }
        if integrand.iter().any(|v| !v.is_finite()) {
            return Err(Error::Eval {
                t: signal.t0(),
                reason: "regressor is not finite on the measured signal".into(),
            });
        }
        let mut base_integral = vec![0.0; nodes * m];
        cumulative_vec_into(&integrand, m, grid.h, &mut base_integral);

        Ok(Self {
            system,
            gain,
            signal,
            phi,
            base_integral,
            fix,
            spectral_radius,
            monodromy_condition,
        })
    }

    pub fn system(&self) -> &CanonicalForm {
        &self.system
    }

    pub fn gain(&self) -> &ObserverGain {
        &self.gain
    }

    pub fn signal(&self) -> &SampledSignal {
        &self.signal
    }

    pub fn phi(&self) -> &FundamentalMatrixGrid {
        &self.phi
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    pub fn monodromy_condition(&self) -> f64 {
        self.monodromy_condition
    }

    /// `S(t_k)` at every quadrature node, node-major.
    fn running_integral(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        if lambda.len() != self.system.k_lambda() {
            return Err(Error::invalid(format!(
                "lambda has length {}, expected {}",
                lambda.len(),
                self.system.k_lambda()
            )));
        }
        let grid = self.phi.quadrature();
        let nodes = grid.times.len();
        let (n, m) = (self.system.n(), self.system.dim());
        let d = self.system.aux_dim();
        let mut q = Vec::new();
        if let Some(spec) = self.system.aux() {
            aux_on_grid(spec, lambda, grid, &mut q)?;
        }
        let mut g = vec![0.0; n];
        let mut integrand = vec![0.0; nodes * m];
        for k in 0..nodes {
            let (t, y) = (grid.times[k], grid.y[k]);
            self.system.nonlinearity_into(y, lambda, t, &q[k * d..(k + 1) * d], &mut g);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Eval {
                    t,
                    reason: "nonlinearity is not finite".into(),
                });
            }
            let inv = self.phi.inverse_slice(k);
            for i in 0..m {
                integrand[k * m + i] = (0..n).map(|j| inv[i * m + j] * g[j]).sum();
            }
        }
        let mut s = vec![0.0; nodes * m];
        cumulative_vec_into(&integrand, m, grid.h, &mut s);
        for (si, bi) in s.iter_mut().zip(&self.base_integral) {
            *si += bi;
        }
        Ok(s)
    }

    fn boundary_from(&self, s: &[f64]) -> Vec<f64> {
        let m = self.system.dim();
        let last = s.len() / m - 1;
        let st = DVector::from_column_slice(&s[last * m..]);
        (&self.fix * st).as_slice().to_vec()
    }

    /// Boundary vector `R(lambda)`.
    pub fn compute_r(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        let s = self.running_integral(lambda)?;
        Ok(self.boundary_from(&s))
    }

    fn output_from(&self, s: &[f64], r_vec: &[f64]) -> Vec<f64> {
        let m = self.system.dim();
        let stride = self.phi.quadrature().nodes_per_sample;
        (0..self.signal.len())
            .map(|j| {
                let k = j * stride;
                let row = &self.phi.matrix_slice(k)[..m];
                (0..m).map(|i| row[i] * (r_vec[i] + s[k * m + i])).sum()
            })
            .collect()
    }

    /// Predicted output on the sample times for a given `R`.
    pub fn predict_y(&self, lambda: &[f64], r_vec: &[f64]) -> Result<Vec<f64>> {
        if r_vec.len() != self.system.dim() {
            return Err(Error::invalid("boundary vector has the wrong length"));
        }
        let s = self.running_integral(lambda)?;
        Ok(self.output_from(&s, r_vec))
    }

    pub fn evaluate(&self, lambda: &[f64]) -> Result<PredictorResult> {
        let s = self.running_integral(lambda)?;
        let r_vec = self.boundary_from(&s);
        let y_hat = self.output_from(&s, &r_vec);
        let (x0_hat, theta_hat) = reconstruct(&r_vec, self.system.n(), self.system.r())?;
        Ok(PredictorResult {
            lambda: lambda.to_vec(),
            r: r_vec,
            y_hat,
            x0_hat,
            theta_hat,
            monodromy_condition: self.monodromy_condition,
        })
    }

    /// Sum of squared residuals over the sample indices in `indices`
    /// (all samples when `None`).
    pub fn residual_sum(&self, lambda: &[f64], indices: Option<&[usize]>) -> Result<f64> {
        let res = self.evaluate(lambda)?;
        let y = self.signal.samples();
        let sq = |j: usize| (res.y_hat[j] - y[j]).powi(2);
        Ok(match indices {
            Some(idx) => idx.iter().map(|&j| sq(j)).sum(),
            None => (0..y.len()).map(sq).sum(),
        })
    }

    /// Full periodic observer state `V(t_k)` on every quadrature node,
    /// returned with the node times.
    pub fn state_trajectory(&self, lambda: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let s = self.running_integral(lambda)?;
        let r_vec = self.boundary_from(&s);
        let m = self.system.dim();
        let grid = self.phi.quadrature();
        let states = (0..grid.times.len())
            .map(|k| {
                let phi = self.phi.matrix_slice(k);
                (0..m)
                    .map(|i| (0..m).map(|j| phi[i * m + j] * (r_vec[j] + s[k * m + j])).sum())
                    .collect()
            })
            .collect();
        Ok((grid.times.clone(), states))
    }
}
