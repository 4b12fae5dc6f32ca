//! Morris–Lecar voltage model
//!
//! ```text
//! x' = -gCa m_inf(x) (x - ECa) - gK q (x - EK) - gL (x - EL) + I
//! q' = (w_inf(x) - q) / tau(x)
//! m_inf(x) = (1 + tanh((x - V1) / V2)) / 2
//! w_inf(x) = (1 + tanh((x - V3) / V4)) / 2
//! tau(x)   = T0 / cosh((x - V3) / (2 V4))
//! ```
//!
//! In canonical form `n = 1`, `r = 2`, `phi = (y, 1)`,
//! `theta = (-gL, I + gL EL)` and `lambda = (V1, V2, V3, V4, T0, gCa, gK)`.

use serde::{Deserialize, Serialize};

use crate::canonical::{AuxStateSpec, CanonicalForm};
use crate::error::{Error, Result};
use crate::estimator::ParameterMap;
use crate::fundamental::{select_gain, ObserverGain};
use crate::ode::{Scheme, Stepper};
use crate::signal::SampledSignal;

use nalgebra::DMatrix;

/// Number of nonlinearly entering parameters.
pub const K_LAMBDA: usize = 7;

pub const LAMBDA_NAMES: [&str; K_LAMBDA] = ["V1", "V2", "V3", "V4", "T0", "gCa", "gK"];

/// Optimizer coordinate names used by [`RatioMap`].
pub const Z_NAMES: [&str; K_LAMBDA] = ["1/V2", "V1/V2", "V3", "V4", "T0", "gCa", "gK"];

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorrisLecarParams {
    pub V1: f64,
    pub V2: f64,
    pub V3: f64,
    pub V4: f64,
    pub T0: f64,
    pub gCa: f64,
    pub gK: f64,
    pub gL: f64,
    pub I: f64,
    pub ECa: f64,
    pub EK: f64,
    pub EL: f64,
}

/// Known reversal potentials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reversal {
    pub e_ca: f64,
    pub e_k: f64,
    pub e_l: f64,
}

impl Default for Reversal {
    fn default() -> Self {
        Self {
            e_ca: -100.0,
            e_k: -70.0,
            e_l: -50.0,
        }
    }
}

impl Default for MorrisLecarParams {
    fn default() -> Self {
        Self::reference()
    }
}

impl MorrisLecarParams {
    /// Oscillating reference parameter set (period about 13.07).
    pub fn reference() -> Self {
        let e = Reversal::default();
        Self {
            V1: 1.0,
            V2: 15.0,
            V3: -10.0,
            V4: 14.5,
            T0: 3.0,
            gCa: -1.1,
            gK: 2.0,
            gL: -0.5,
            I: 10.0,
            ECa: e.e_ca,
            EK: e.e_k,
            EL: e.e_l,
        }
    }

    pub fn reversal(&self) -> Reversal {
        Reversal {
            e_ca: self.ECa,
            e_k: self.EK,
            e_l: self.EL,
        }
    }

    /// Checks finiteness, `V2 != 0`, `V4 != 0` and `T0 > 0`; the message names
    /// the offending field.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("V1", self.V1),
            ("V2", self.V2),
            ("V3", self.V3),
            ("V4", self.V4),
            ("T0", self.T0),
            ("gCa", self.gCa),
            ("gK", self.gK),
            ("gL", self.gL),
            ("I", self.I),
            ("ECa", self.ECa),
            ("EK", self.EK),
            ("EL", self.EL),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite, got {v}")));
            }
        }
        if self.V2 == 0.0 {
            return Err(Error::invalid("V2 must be nonzero"));
        }
        if self.V4 == 0.0 {
            return Err(Error::invalid("V4 must be nonzero"));
        }
        if !(self.T0 > 0.0) {
            return Err(Error::invalid(format!("T0 must be positive, got {}", self.T0)));
        }
        Ok(())
    }

    pub fn lambda(&self) -> [f64; K_LAMBDA] {
        [self.V1, self.V2, self.V3, self.V4, self.T0, self.gCa, self.gK]
    }

    pub fn with_lambda(&self, lambda: &[f64]) -> Self {
        Self {
            V1: lambda[0],
            V2: lambda[1],
            V3: lambda[2],
            V4: lambda[3],
            T0: lambda[4],
            gCa: lambda[5],
            gK: lambda[6],
            ..*self
        }
    }

    pub fn theta(&self) -> [f64; 2] {
        theta_from_physical(self.gL, self.I, self.EL)
    }

    /// `(m_inf, w_inf, tau)` at voltage `x`.
    pub fn gating(&self, x: f64) -> (f64, f64, f64) {
        let m = 0.5 * (1.0 + ((x - self.V1) / self.V2).tanh());
        let w = 0.5 * (1.0 + ((x - self.V3) / self.V4).tanh());
        let tau = self.T0 / ((x - self.V3) / (2.0 * self.V4)).cosh();
        (m, w, tau)
    }

    /// `(x', q')`.
    pub fn rhs(&self, x: f64, q: f64) -> (f64, f64) {
        let (m, w, tau) = self.gating(x);
        let dx = -self.gCa * m * (x - self.ECa) - self.gK * q * (x - self.EK) - self.gL * (x - self.EL) + self.I;
        (dx, (w - q) / tau)
    }
}

/// `theta = (-gL, I + gL EL)`.
pub fn theta_from_physical(g_l: f64, i_app: f64, e_l: f64) -> [f64; 2] {
    [-g_l, i_app + g_l * e_l]
}

/// Inverse of [`theta_from_physical`]: `gL = -theta1`, `I = theta2 + EL theta1`.
pub fn physical_from_theta(theta: &[f64], e_l: f64) -> (f64, f64) {
    (-theta[0], theta[1] + e_l * theta[0])
}

/// Recorded trajectory of the full model.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub dx: Vec<f64>,
    pub dq: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn push(&mut self, p: &MorrisLecarParams, t: f64, x: f64, q: f64) {
        let (dx, dq) = p.rhs(x, q);
        self.t.push(t);
        self.x.push(x);
        self.q.push(q);
        self.dx.push(dx);
        self.dq.push(dq);
    }

    /// Cubic Hermite value of `(x, q)` at `t` inside the recorded range.
    pub fn state_at(&self, t: f64) -> Option<(f64, f64)> {
        let (first, last) = (*self.t.first()?, *self.t.last()?);
        if !(t >= first && t <= last) || self.len() < 2 {
            return None;
        }
        let k = match self.t.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(k) => return Some((self.x[k], self.q[k])),
            Err(k) => k - 1,
        };
        let h = self.t[k + 1] - self.t[k];
        let s = (t - self.t[k]) / h;
        let herm = |y0: f64, y1: f64, d0: f64, d1: f64| hermite(s, h, y0, y1, d0, d1);
        Some((
            herm(self.x[k], self.x[k + 1], self.dx[k], self.dx[k + 1]),
            herm(self.q[k], self.q[k + 1], self.dq[k], self.dq[k + 1]),
        ))
    }
}

fn hermite(s: f64, h: f64, y0: f64, y1: f64, d0: f64, d1: f64) -> f64 {
    let (s2, s3) = (s * s, s * s * s);
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * h * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * h * d1
}

/// Fixed-step Dormand–Prince integration from `(x0, q0)` at `t = 0`,
/// recording every `record_every` steps (and the final state).
pub fn simulate(
    p: &MorrisLecarParams,
    x0: f64,
    q0: f64,
    t_end: f64,
    dt_int: f64,
    record_every: usize,
) -> Result<Trajectory> {
    p.validate()?;
    if !(dt_int.is_finite() && dt_int > 0.0) {
        return Err(Error::invalid(format!("dt_int must be positive, got {dt_int}")));
    }
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::invalid(format!("t_end must be positive, got {t_end}")));
    }
    if !(x0.is_finite() && q0.is_finite()) {
        return Err(Error::invalid("initial state must be finite"));
    }
    let steps = (t_end / dt_int).round().max(1.0) as usize;
    let h = t_end / steps as f64;
    let every = record_every.max(1);
    let mut traj = Trajectory::default();
    let mut state = [x0, q0];
    traj.push(p, 0.0, x0, q0);
    let mut stepper = Stepper::new(Scheme::DormandPrince5, 2);
    let mut rhs = |_t: f64, s: &[f64], ds: &mut [f64]| {
        let (dx, dq) = p.rhs(s[0], s[1]);
        ds[0] = dx;
        ds[1] = dq;
    };
    for k in 0..steps {
        let t = k as f64 * h;
        stepper.step(&mut rhs, t, h, &mut state);
        if !(state[0].is_finite() && state[1].is_finite()) {
            return Err(Error::Integration {
                t: t + h,
                reason: "Morris-Lecar state is not finite".into(),
            });
        }
        if (k + 1) % every == 0 || k + 1 == steps {
            traj.push(p, (k + 1) as f64 * h, state[0], state[1]);
        }
    }
    Ok(traj)
}

/// Period of a settled oscillation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PeriodEstimate {
    pub period: f64,
    /// Time of the last complete upward crossing used as the anchor.
    pub anchor: f64,
    /// Crossing level (mean of the settled trace).
    pub level: f64,
    /// Largest relative spread of the last successive period estimates.
    pub spread: f64,
}

/// Upward crossings of the mean after discarding the leading `discard`
/// fraction of the trace, refined on the Hermite interpolant.
pub fn detect_period(traj: &Trajectory, discard: f64) -> Result<PeriodEstimate> {
    if !(0.0..1.0).contains(&discard) {
        return Err(Error::invalid(format!("discard fraction must lie in [0, 1), got {discard}")));
    }
    let start = ((traj.len() as f64) * discard) as usize;
    if traj.len() < start + 4 {
        return Err(Error::Periodicity("trajectory too short".into()));
    }
    let xs = &traj.x[start..];
    let level = xs.iter().sum::<f64>() / xs.len() as f64;
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi - lo > 1e-8 * (1.0 + level.abs())) {
        return Err(Error::Periodicity("no oscillation detected".into()));
    }
    let mut crossings = Vec::new();
    for k in start..traj.len() - 1 {
        let (a, b) = (traj.x[k] - level, traj.x[k + 1] - level);
        if a < 0.0 && b >= 0.0 {
            let h = traj.t[k + 1] - traj.t[k];
            let f = |s: f64| hermite(s, h, a, b, traj.dx[k], traj.dx[k + 1]);
            let (mut s_lo, mut s_hi) = (0.0, 1.0);
            for _ in 0..200 {
                let mid = 0.5 * (s_lo + s_hi);
                if f(mid) < 0.0 {
                    s_lo = mid;
                } else {
                    s_hi = mid;
                }
                if s_hi - s_lo < 1e-15 {
                    break;
                }
            }
            crossings.push(traj.t[k] + 0.5 * (s_lo + s_hi) * h);
        }
    }
    if crossings.len() < 4 {
        return Err(Error::Periodicity(format!(
            "only {} upward crossings in the settled trace",
            crossings.len()
        )));
    }
    let periods: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
    let tail = &periods[periods.len() - 3..];
    let period = tail[2];
    let spread = tail.iter().map(|p| (p - period).abs() / period).fold(0.0, f64::max);
    if spread > 1e-6 {
        return Err(Error::Periodicity(format!(
            "successive period estimates differ by {spread:e} (relative)"
        )));
    }
    Ok(PeriodEstimate {
        period,
        anchor: crossings[crossings.len() - 2],
        level,
        spread,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub x_init: f64,
    pub q_init: f64,
    pub t_end: f64,
    pub dt_int: f64,
    pub sample_dt: f64,
    pub record_every: usize,
    pub discard: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            x_init: 0.0,
            q_init: 0.0,
            t_end: 400.0,
            dt_int: 2e-4,
            sample_dt: 0.04,
            record_every: 5,
            discard: 0.5,
        }
    }
}

/// One settled period of voltage data with its anchor state.
#[derive(Debug, Clone)]
pub struct PeriodicData {
    /// Samples on `[0, T)`, time measured from the anchor.
    pub signal: SampledSignal,
    pub period: PeriodEstimate,
    pub x0: f64,
    pub q0: f64,
    /// Auxiliary state at the sample times.
    pub q: Vec<f64>,
    /// `|x(T) - x(0)|` of the re-integrated period.
    pub closure_error: f64,
}

/// Simulates to the attractor, detects the period and re-integrates one
/// period from the anchor with a step that divides the sample spacing.
pub fn generate_periodic_data(p: &MorrisLecarParams, cfg: &DataConfig) -> Result<PeriodicData> {
    if !(cfg.sample_dt.is_finite() && cfg.sample_dt > 0.0) {
        return Err(Error::invalid(format!("sample_dt must be positive, got {}", cfg.sample_dt)));
    }
    let traj = simulate(p, cfg.x_init, cfg.q_init, cfg.t_end, cfg.dt_int, cfg.record_every)?;
    let est = detect_period(&traj, cfg.discard)?;
    let (x0, q0) = traj
        .state_at(est.anchor)
        .ok_or_else(|| Error::Periodicity("anchor outside the recorded trace".into()))?;
    let n = (est.period / cfg.sample_dt).round().max(4.0) as usize;
    let dt = est.period / n as f64;
    let sub = (dt / cfg.dt_int).round().max(1.0) as usize;
    let h = dt / sub as f64;
    let mut stepper = Stepper::new(Scheme::DormandPrince5, 2);
    let mut rhs = |_t: f64, s: &[f64], ds: &mut [f64]| {
        let (dx, dq) = p.rhs(s[0], s[1]);
        ds[0] = dx;
        ds[1] = dq;
    };
    let mut state = [x0, q0];
    let mut xs = Vec::with_capacity(n);
    let mut qs = Vec::with_capacity(n);
    for j in 0..n {
        xs.push(state[0]);
        qs.push(state[1]);
        for s in 0..sub {
            stepper.step(&mut rhs, j as f64 * dt + s as f64 * h, h, &mut state);
        }
    }
    if !(state[0].is_finite() && state[1].is_finite()) {
        return Err(Error::Integration {
            t: est.period,
            reason: "Morris-Lecar state is not finite".into(),
        });
    }
    let closure_error = (state[0] - x0).abs();
    let signal = SampledSignal::new(xs, 0.0, est.period)?;
    Ok(PeriodicData {
        signal,
        period: est,
        x0,
        q0,
        q: qs,
        closure_error,
    })
}

fn lambda_admissible(l: &[f64]) -> bool {
    l[1] != 0.0 && l[3] != 0.0 && l[4] > 0.0 && l.iter().all(|v| v.is_finite())
}

/// Canonical form with the recovery variable eliminated in closed form.
///
/// Inadmissible `lambda` (`V2 = 0`, `V4 = 0`, `T0 <= 0`) evaluates to NaN so
/// the predictor reports an evaluation error.
pub fn to_canonical(reversal: Reversal) -> CanonicalForm {
    let Reversal { e_ca, e_k, .. } = reversal;
    let aux = AuxStateSpec::new(
        1,
        |y, l: &[f64], _t, out: &mut [f64]| {
            out[0] = if lambda_admissible(l) {
                -((y - l[2]) / (2.0 * l[3])).cosh() / l[4]
            } else {
                f64::NAN
            };
        },
        |y, l: &[f64], _t, out: &mut [f64]| {
            out[0] = if lambda_admissible(l) {
                let w_inf = 0.5 * (1.0 + ((y - l[2]) / l[3]).tanh());
                w_inf * ((y - l[2]) / (2.0 * l[3])).cosh() / l[4]
            } else {
                f64::NAN
            };
        },
    );
    CanonicalForm::new(
        vec![1.0],
        2,
        K_LAMBDA,
        |y, _t, out: &mut [f64]| {
            out[0] = y;
            out[1] = 1.0;
        },
        move |y, l: &[f64], _t, q: &[f64], out: &mut [f64]| {
            out[0] = if lambda_admissible(l) {
                let m_inf = 0.5 * (1.0 + ((y - l[0]) / l[1]).tanh());
                -l[5] * m_inf * (y - e_ca) - l[6] * q[0] * (y - e_k)
            } else {
                f64::NAN
            };
        },
    )
    .expect("scalar canonical form is always valid")
    .with_aux(aux)
}

/// Gain `l = -1`, certified with `P = 1`, `Q = 2`.
pub fn default_gain(system: &CanonicalForm) -> Result<ObserverGain> {
    select_gain(system, Some(&DMatrix::from_element(1, 1, 2.0)))
}

/// `z = (1/V2, V1/V2, V3, V4, T0, gCa, gK)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RatioMap;

impl ParameterMap for RatioMap {
    fn to_model(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != K_LAMBDA {
            return Err(Error::invalid(format!("expected {K_LAMBDA} coordinates, got {}", z.len())));
        }
        if z[0] == 0.0 {
            return Err(Error::invalid("1/V2 must be nonzero"));
        }
        let v2 = 1.0 / z[0];
        Ok(vec![z[1] * v2, v2, z[2], z[3], z[4], z[5], z[6]])
    }

    fn to_optimizer(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        if lambda.len() != K_LAMBDA {
            return Err(Error::invalid(format!(
                "expected {K_LAMBDA} parameters, got {}",
                lambda.len()
            )));
        }
        if lambda[1] == 0.0 {
            return Err(Error::invalid("V2 must be nonzero"));
        }
        Ok(vec![
            1.0 / lambda[1],
            lambda[0] / lambda[1],
            lambda[2],
            lambda[3],
            lambda[4],
            lambda[5],
            lambda[6],
        ])
    }
}
