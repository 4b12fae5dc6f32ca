//! Uniformly sampled, periodically extended scalar signals.
//!
//! A [`SampledSignal`] stores exactly one period of data, `N` samples at
//! `t0 + j*dt` with `N*dt = T`. Evaluation at any real time reduces the grid
//! index modulo `N` in integer arithmetic and applies a local interpolant, so
//! the periodic extension is built in.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interpolant used between grid nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// C1 cubic Hermite with fourth-order periodic finite-difference slopes.
    #[default]
    Cubic,
    Linear,
    /// Periodic trigonometric interpolant through all samples. Spectrally
    /// accurate for smooth periodic data; each evaluation costs `O(N)`.
    Trigonometric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    t0: f64,
    period: f64,
    dt: f64,
    samples: Vec<f64>,
    slopes: Vec<f64>,
    /// `(a_k, b_k)` for `k = 0..=N/2`, weights included.
    fourier: Vec<(f64, f64)>,
    interpolation: Interpolation,
}

fn fourier_coefficients(samples: &[f64]) -> Vec<(f64, f64)> {
    use rustfft::{num_complex::Complex, FftPlanner};
    let n = samples.len();
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    // y(u) = sum_k w_k (Re c_k cos(2 pi k u / N) - Im c_k sin(2 pi k u / N))
    (0..=n / 2)
        .map(|k| {
            let w = if k == 0 || 2 * k == n { 1.0 } else { 2.0 } / n as f64;
            (w * buf[k].re, -w * buf[k].im)
        })
        .collect()
}

impl SampledSignal {
    /// Builds a signal from one period of samples with the default cubic interpolant.
    pub fn new(samples: Vec<f64>, t0: f64, period: f64) -> Result<Self> {
        Self::with_interpolation(samples, t0, period, Interpolation::Cubic)
    }

    pub fn with_interpolation(
        samples: Vec<f64>,
        t0: f64,
        period: f64,
        interpolation: Interpolation,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("signal needs at least one sample"));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::invalid(format!("period must be positive, got {period}")));
        }
        if !t0.is_finite() {
            return Err(Error::invalid("t0 must be finite"));
        }
        if let Some(j) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("sample {j} is not finite")));
        }
        let n = samples.len();
        let dt = period / n as f64;
        let slopes = (0..n)
            .map(|j| {
                let at = |k: isize| samples[(j as isize + k).rem_euclid(n as isize) as usize];
                (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / 12.0
            })
            .collect();
        let fourier = if interpolation == Interpolation::Trigonometric {
            fourier_coefficients(&samples)
        } else {
            Vec::new()
        };
        Ok(Self {
            t0,
            period,
            dt,
            samples,
            slopes,
            fourier,
            interpolation,
        })
    }

    /// Samples `f` at `n` uniform nodes of `[t0, t0 + period)`.
    pub fn from_fn(n: usize, t0: f64, period: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("signal needs at least one sample"));
        }
        let dt = period / n as f64;
        Self::new((0..n).map(|j| f(t0 + j as f64 * dt)).collect(), t0, period)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    /// Same samples with a different interpolant.
    pub fn with_interpolant(&self, interpolation: Interpolation) -> Self {
        Self::with_interpolation(self.samples.clone(), self.t0, self.period, interpolation)
            .expect("samples were validated on construction")
    }

    /// Time of grid node `j` (not reduced modulo the period).
    pub fn time_of(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    /// Sample at an arbitrary integer grid index, periodically extended.
    pub fn sample_at(&self, j: i64) -> f64 {
        self.samples[j.rem_euclid(self.samples.len() as i64) as usize]
    }

    /// Value of the periodic interpolant at `t`.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.samples.len() as i64;
        let mut u = (t - self.t0) / self.dt;
        let nearest = u.round();
        if (u - nearest).abs() < 1e-9 {
            u = nearest;
        }
        let cell = u.floor();
        let s = u - cell;
        let j = (cell as i64).rem_euclid(n) as usize;
        let k = (j + 1) % n as usize;
        let (y0, y1) = (self.samples[j], self.samples[k]);
        if s == 0.0 {
            return y0;
        }
        match self.interpolation {
            Interpolation::Linear => y0 + s * (y1 - y0),
            Interpolation::Cubic => {
                let (m0, m1) = (self.slopes[j], self.slopes[k]);
                let s2 = s * s;
                let s3 = s2 * s;
                (2.0 * s3 - 3.0 * s2 + 1.0) * y0
                    + (s3 - 2.0 * s2 + s) * m0
                    + (-2.0 * s3 + 3.0 * s2) * y1
                    + (s3 - s2) * m1
            }
            Interpolation::Trigonometric => {
                let angle = 2.0 * std::f64::consts::PI * (j as f64 + s) / n as f64;
                let (sin1, cos1) = angle.sin_cos();
                let (mut c, mut sn) = (1.0, 0.0);
                let mut acc = 0.0;
                for (k, &(a, b)) in self.fourier.iter().enumerate() {
                    if k > 0 {
                        (c, sn) = (c * cos1 - sn * sin1, sn * cos1 + c * sin1);
                        // resynchronise the rotation to bound drift
                        if k % 64 == 0 {
                            (sn, c) = (k as f64 * angle).sin_cos();
                        }
                    }
                    acc += a * c + b * sn;
                }
                acc
            }
        }
    }

    /// Peak-to-peak amplitude of the stored samples.
    pub fn peak_to_peak(&self) -> f64 {
        let (lo, hi) = self
            .samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    }

    /// Mean square of the samples.
    pub fn power(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64
    }

    /// Reads a `t,y` CSV covering one period; the header row is optional.
    ///
    /// Times must be strictly increasing and uniform to 1e-9 relative. The
    /// period is taken as `N * dt`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut ts = Vec::new();
        let mut ys = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::invalid(format!(
                    "row {}: expected 2 columns, found {}",
                    line + 1,
                    rec.len()
                )));
            }
            let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match parsed {
                (Ok(t), Ok(y)) => {
                    ts.push(t);
                    ys.push(y);
                }
                _ if line == 0 => continue,
                _ => {
                    return Err(Error::invalid(format!(
                        "row {}: cannot parse '{},{}'",
                        line + 1,
                        &rec[0],
                        &rec[1]
                    )))
                }
            }
        }
        if ts.len() < 2 {
            return Err(Error::invalid("csv needs at least two data rows"));
        }
        let dt = (ts[ts.len() - 1] - ts[0]) / (ts.len() - 1) as f64;
        if !(dt > 0.0) {
            return Err(Error::invalid("times must be strictly increasing"));
        }
        for (j, w) in ts.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::invalid(format!("times not increasing at row {}", j + 2)));
            }
        }
        for (j, &t) in ts.iter().enumerate() {
            let expected = ts[0] + j as f64 * dt;
            if (t - expected).abs() > 1e-9 * t.abs().max(dt * ts.len() as f64) {
                return Err(Error::invalid(format!("non-uniform sampling at row {}", j + 1)));
            }
        }
        let period = dt * ts.len() as f64;
        Self::new(ys, ts[0], period)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::read_csv(f)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "y"])?;
        for (j, y) in self.samples.iter().enumerate() {
            w.write_record([self.time_of(j).to_string(), y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Uniform quadrature grid over one period with the signal pre-evaluated at
/// every node. `nodes_per_sample` quadrature intervals subdivide each sample
/// interval, so node `j * nodes_per_sample` coincides with sample `j`.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub t0: f64,
    pub h: f64,
    pub nodes_per_sample: usize,
    /// Node times, `M + 1` entries covering `[t0, t0 + T]`.
    pub times: Vec<f64>,
    /// Signal values at the nodes.
    pub y: Vec<f64>,
}

impl QuadratureGrid {
    pub fn new(signal: &SampledSignal, nodes_per_sample: usize) -> Result<Self> {
        if nodes_per_sample == 0 {
            return Err(Error::invalid("nodes_per_sample must be at least 1"));
        }
        let intervals = signal.len() * nodes_per_sample;
        if intervals < 3 {
            return Err(Error::invalid("quadrature grid needs at least 3 intervals"));
        }
        let h = signal.dt() / nodes_per_sample as f64;
        let times: Vec<f64> = (0..=intervals)
            .map(|k| {
                // exact at sample nodes
                let (j, r) = (k / nodes_per_sample, k % nodes_per_sample);
                signal.t0() + j as f64 * signal.dt() + r as f64 * h
            })
            .collect();
        let y = (0..=intervals)
            .map(|k| {
                if k % nodes_per_sample == 0 {
                    signal.sample_at((k / nodes_per_sample) as i64)
                } else {
                    signal.eval(times[k])
                }
            })
            .collect();
        Ok(Self {
            t0: signal.t0(),
            h,
            nodes_per_sample,
            times,
            y,
        })
    }

    /// Number of quadrature intervals `M`; there are `M + 1` nodes.
    pub fn intervals(&self) -> usize {
        self.times.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_signal() {
        let s = SampledSignal::new(vec![0.0; 4], 0.0, 1.0).unwrap();
        assert_eq!(s.dt(), 0.25);
        for t in [-3.3, 0.0, 0.1, 0.77, 12.5] {
            assert_eq!(s.eval(t), 0.0);
        }
    }

    #[test]
    fn sine_quarter_period() {
        let s = SampledSignal::from_fn(1000, 0.0, 1.0, |t| (2.0 * PI * t).sin()).unwrap();
        assert!((s.eval(0.25) - 1.0).abs() < 1e-12);
        assert!((s.eval(0.2513) - (2.0 * PI * 0.2513).sin()).abs() < 1e-10);
    }

    #[test]
    fn node_values_exact() {
        let s = SampledSignal::from_fn(37, 0.3, 2.1, |t| t.cos() + t * t).unwrap();
        for j in 0..37 {
            assert_eq!(s.eval(s.time_of(j)), s.samples()[j]);
        }
    }

    #[test]
    fn linear_midpoint() {
        let samples: Vec<f64> = (0..10).map(|j| j as f64 / 10.0).collect();
        let s = SampledSignal::with_interpolation(samples, 0.0, 1.0, Interpolation::Linear).unwrap();
        for j in 0..9 {
            let mid = s.eval((j as f64 + 0.5) * 0.1);
            assert!((mid - (j as f64 + 0.5) / 10.0).abs() < 1e-14);
        }
    }

    #[test]
    fn trigonometric_reproduces_trig_polynomials() {
        let f = |t: f64| 0.5 + (2.0 * PI * t / 3.0).sin() - 0.25 * (2.0 * PI * 5.0 * t / 3.0).cos();
        for n in [12usize, 13] {
            let s = SampledSignal::from_fn(n, 0.2, 3.0, f).unwrap().with_interpolant(Interpolation::Trigonometric);
            for k in 0..50 {
                let t = -1.0 + 0.173 * k as f64;
                assert!((s.eval(t) - f(t)).abs() < 1e-12, "n = {n}, t = {t}");
            }
        }
        // Nyquist mode with even N
        let s = SampledSignal::new(vec![1.0, -1.0, 1.0, -1.0], 0.0, 4.0)
            .unwrap()
            .with_interpolant(Interpolation::Trigonometric);
        assert!((s.eval(0.5) - (PI * 0.5).cos()).abs() < 1e-14);
    }

    #[test]
    fn construction_errors() {
        assert!(SampledSignal::new(vec![], 0.0, 1.0).is_err());
        assert!(SampledSignal::new(vec![1.0, f64::NAN], 0.0, 1.0).is_err());
        assert!(SampledSignal::new(vec![1.0], 0.0, 0.0).is_err());
        assert!(SampledSignal::new(vec![1.0], 0.0, -2.0).is_err());
    }

    #[test]
    fn periodic_shift() {
        let s = SampledSignal::from_fn(64, 0.0, 2.0, |t| (PI * t).sin() + 0.3 * (3.0 * PI * t).cos())
            .unwrap();
        for tau in [0.0, 0.125, 0.7421875, 1.5] {
            assert_eq!(s.eval(tau + 3.0 * 2.0), s.eval(tau));
        }
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let s = SampledSignal::from_fn(50, 1.0, 2.0, |t| t.sin()).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = SampledSignal::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 50);
        assert!((back.period() - 2.0).abs() < 1e-12);
        for (a, b) in back.samples().iter().zip(s.samples()) {
            assert_eq!(a, b);
        }

        let headerless = "0,1\n0.5,2\n1.0,3\n";
        let s = SampledSignal::read_csv(headerless.as_bytes()).unwrap();
        assert_eq!(s.len(), 3);
        assert!((s.period() - 1.5).abs() < 1e-15);

        assert!(SampledSignal::read_csv("t,y\n0,1\n0.5,2\n1.2,3\n".as_bytes()).is_err());
        assert!(SampledSignal::read_csv("t,y\n0,1\n0.5,abc\n".as_bytes()).is_err());
        assert!(SampledSignal::read_csv("t,y\n0,1\n".as_bytes()).is_err());
        assert!(SampledSignal::read_csv("t,y\n0,1,2\n1,2,3\n".as_bytes()).is_err());
    }

    #[test]
    fn quadrature_grid_hits_samples() {
        let s = SampledSignal::from_fn(10, 0.0, 1.0, |t| (2.0 * PI * t).sin()).unwrap();
        let g = QuadratureGrid::new(&s, 4).unwrap();
        assert_eq!(g.intervals(), 40);
        for j in 0..=10 {
            assert_eq!(g.y[4 * j], s.sample_at(j as i64));
        }
        assert!((g.times[40] - 1.0).abs() < 1e-15);
    }
}
