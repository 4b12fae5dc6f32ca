//! Numerical checks of the predictor's hypotheses and cost-landscape scans.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canonical::{check_hurwitz, CanonicalForm};
use crate::error::{Error, Result};
use crate::estimator::EstimationContext;
use crate::fundamental::{FundamentalMatrixGrid, ObserverGain};
use crate::quadrature;
use crate::signal::{QuadratureGrid, SampledSignal};

/// Radius at or above `1 - STABILITY_MARGIN` is reported as a warning.
pub const STABILITY_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeCheck {
    /// Row-major `r x r` Gram matrix of the regressor over one period.
    pub gram: Vec<f64>,
    pub min_eig: f64,
    pub delta: f64,
    pub pass: bool,
}

/// `1e-6 T <y^2>`.
pub fn default_pe_delta(y: &SampledSignal) -> f64 {
    1e-6 * y.period() * y.power()
}

/// Persistent excitation: smallest eigenvalue of `int phi phi^T` over one
/// period compared against `delta`.
pub fn pe_check(system: &CanonicalForm, y: &SampledSignal, delta: f64, nodes_per_sample: usize) -> Result<PeCheck> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::invalid(format!("delta must be positive, got {delta}")));
    }
    let grid = QuadratureGrid::new(y, nodes_per_sample)?;
    let r = system.r();
    let nodes = grid.times.len();
    let mut phi = vec![0.0; nodes * r];
    for k in 0..nodes {
        system.regressor_into(grid.y[k], grid.times[k], &mut phi[k * r..(k + 1) * r]);
    }
    let mut gram = DMatrix::zeros(r, r);
    let mut col = vec![0.0; nodes];
    for i in 0..r {
        for j in i..r {
            for k in 0..nodes {
                col[k] = phi[k * r + i] * phi[k * r + j];
            }
            let v = quadrature::total(&col, grid.h);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let min_eig = gram.clone().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(PeCheck {
        gram: gram.transpose().as_slice().to_vec(),
        min_eig,
        delta,
        pass: min_eig >= delta,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StabilityCheck {
    pub spectral_radius: f64,
    /// 2-norm condition number of `I - M` (infinite when singular).
    pub condition: f64,
    pub warning: bool,
}

/// Spectral radius of the monodromy matrix and conditioning of `I - M`.
pub fn stability_check(phi: &FundamentalMatrixGrid) -> StabilityCheck {
    monodromy_check(&phi.monodromy())
}

pub fn monodromy_check(mono: &DMatrix<f64>) -> StabilityCheck {
    let m = mono.nrows();
    let spectral_radius = mono.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let sv = (DMatrix::<f64>::identity(m, m) - mono).singular_values();
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    StabilityCheck {
        spectral_radius,
        condition,
        warning: spectral_radius >= 1.0 - STABILITY_MARGIN,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub pe_min_eig: f64,
    pub pe_delta: f64,
    pub pe_delta_pass: bool,
    pub monodromy_spectral_radius: f64,
    pub monodromy_condition: f64,
    pub stability_warning: bool,
    pub hurwitz_pass: bool,
    /// Lyapunov and `Pb - C` residuals when the gain carries a certificate.
    pub mky_residuals: Option<(f64, f64)>,
}

pub fn diagnose(
    system: &CanonicalForm,
    gain: &ObserverGain,
    y: &SampledSignal,
    phi: &FundamentalMatrixGrid,
    delta: Option<f64>,
) -> Result<DiagnosticsReport> {
    let pe = pe_check(
        system,
        y,
        delta.unwrap_or_else(|| default_pe_delta(y)),
        phi.quadrature().nodes_per_sample,
    )?;
    let st = stability_check(phi);
    Ok(DiagnosticsReport {
        pe_min_eig: pe.min_eig,
        pe_delta: pe.delta,
        pe_delta_pass: pe.pass,
        monodromy_spectral_radius: st.spectral_radius,
        monodromy_condition: st.condition,
        stability_warning: st.warning,
        hurwitz_pass: check_hurwitz(system.b())?.stable,
        mky_residuals: gain.certificate().map(|c| (c.lyapunov_residual, c.pb_residual)),
    })
}

/// One scan axis over optimizer coordinate `index`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScanAxis {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl ScanAxis {
    /// `count` points spanning `center (1 -+ rel)`.
    pub fn relative(index: usize, center: f64, rel: f64, count: usize) -> Self {
        let d = rel * center.abs();
        Self {
            index,
            lo: center - d,
            hi: center + d,
            count,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![0.5 * (self.lo + self.hi)];
        }
        (0..self.count)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (self.count - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScanPoint {
    pub p1: f64,
    pub p2: f64,
    pub cost: f64,
}

/// Cost on the Cartesian grid of two optimizer coordinates with the others
/// held at `base`. Rows run over `axis1` slowest.
pub fn landscape_scan(ctx: &EstimationContext<'_>, base: &[f64], axis1: ScanAxis, axis2: ScanAxis) -> Result<Vec<ScanPoint>> {
    for a in [&axis1, &axis2] {
        if a.index >= base.len() {
            return Err(Error::invalid(format!("scan index {} out of range", a.index)));
        }
        if a.count == 0 || !(a.lo.is_finite() && a.hi.is_finite()) {
            return Err(Error::invalid("scan axis needs a finite range and at least one point"));
        }
    }
    if axis1.index == axis2.index {
        return Err(Error::invalid("scan axes must be distinct"));
    }
    let (v1, v2) = (axis1.values(), axis2.values());
    let cells: Vec<(f64, f64)> = v1.iter().flat_map(|&a| v2.iter().map(move |&b| (a, b))).collect();
    Ok(cells
        .par_iter()
        .map(|&(p1, p2)| {
            let mut z = base.to_vec();
            z[axis1.index] = p1;
            z[axis2.index] = p2;
            ScanPoint { p1, p2, cost: ctx.cost(&z) }
        })
        .collect())
}

pub fn write_scan_csv<W: Write>(points: &[ScanPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["param1", "param2", "cost"])?;
    for p in points {
        w.write_record([p.p1.to_string(), p.p2.to_string(), p.cost.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Least-squares quadratic model of a scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadraticFit {
    /// Hessian of the model in the scaled coordinates, row-major 2x2.
    pub hessian: [f64; 4],
    /// Eigenvalues of the Hessian, ascending.
    pub curvatures: [f64; 2],
    /// Largest over smallest curvature magnitude.
    pub anisotropy: f64,
    /// Unit eigenvector of the smallest curvature (valley direction).
    pub valley_direction: [f64; 2],
}

/// Fits `c + g.d + d^T H d / 2` with `d_i = (p_i - center_i) / scale_i`.
pub fn fit_quadratic(points: &[ScanPoint], center: [f64; 2], scale: [f64; 2]) -> Result<QuadraticFit> {
    let usable: Vec<&ScanPoint> = points
        .iter()
        .filter(|p| p.cost.is_finite() && p.cost < crate::estimator::SENTINEL_COST)
        .collect();
    if usable.len() < 6 {
        return Err(Error::invalid("quadratic fit needs at least 6 finite scan points"));
    }
    if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::invalid("fit scales must be positive"));
    }
    let mut a = DMatrix::zeros(usable.len(), 6);
    let mut b = DVector::zeros(usable.len());
    for (i, p) in usable.iter().enumerate() {
        let d1 = (p.p1 - center[0]) / scale[0];
        let d2 = (p.p2 - center[1]) / scale[1];
        let row = [1.0, d1, d2, 0.5 * d1 * d1, d1 * d2, 0.5 * d2 * d2];
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = *v;
        }
        b[i] = p.cost;
    }
    let coef = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::Conditioning(format!("quadratic fit failed: {e}")))?;
    let h = DMatrix::from_row_slice(2, 2, &[coef[3], coef[4], coef[4], coef[5]]);
    let eig = SymmetricEigen::new(h);
    let (i_min, i_max) = if eig.eigenvalues[0].abs() <= eig.eigenvalues[1].abs() {
        (0, 1)
    } else {
        (1, 0)
    };
    let (lo, hi) = (eig.eigenvalues[i_min], eig.eigenvalues[i_max]);
    let mut curv = [eig.eigenvalues[0], eig.eigenvalues[1]];
    curv.sort_by(f64::total_cmp);
    let v = eig.eigenvectors.column(i_min);
    Ok(QuadraticFit {
        hessian: [coef[3], coef[4], coef[4], coef[5]],
        curvatures: curv,
        anisotropy: if lo != 0.0 { hi.abs() / lo.abs() } else { f64::INFINITY },
        valley_direction: [v[0], v[1]],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn system_with(regressor: impl Fn(f64, f64, &mut [f64]) + Send + Sync + 'static) -> CanonicalForm {
        CanonicalForm::new(vec![1.0], 2, 0, regressor, |_y, _l, _t, _q, o: &mut [f64]| o.fill(0.0)).unwrap()
    }

    #[test]
    fn pe_zero_regressor_fails() {
        let sys = system_with(|_y, _t, o: &mut [f64]| o.fill(0.0));
        let y = SampledSignal::from_fn(32, 0.0, 1.0, |t| t.sin()).unwrap();
        let pe = pe_check(&sys, &y, 1e-12, 2).unwrap();
        assert_eq!(pe.min_eig, 0.0);
        assert!(!pe.pass);
    }

    #[test]
    fn pe_orthogonal_regressor() {
        let sys = system_with(|_y, t, o: &mut [f64]| {
            o[0] = t.sin();
            o[1] = t.cos();
        });
        let y = SampledSignal::from_fn(64, 0.0, 2.0 * PI, |t| t.sin()).unwrap();
        let pe = pe_check(&sys, &y, 1e-6, 4).unwrap();
        assert!((pe.min_eig - PI).abs() < 1e-8, "{}", pe.min_eig);
        assert!(pe.gram[1].abs() < 1e-10 && (pe.gram[1] - pe.gram[2]).abs() == 0.0);
        assert!(pe.pass);
    }

    #[test]
    fn scalar_monodromy() {
        let m = DMatrix::from_element(1, 1, (-1.0f64).exp());
        let st = monodromy_check(&m);
        assert!((st.spectral_radius - 0.36787944117144233).abs() < 1e-15);
        assert!(!st.warning);
        let st = monodromy_check(&DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 1.0]));
        assert_eq!(st.spectral_radius, 1.0);
        assert!(st.warning && st.condition.is_infinite());
    }

    #[test]
    fn axis_values() {
        assert_eq!(ScanAxis { index: 0, lo: 1.0, hi: 3.0, count: 1 }.values(), vec![2.0]);
        assert_eq!(ScanAxis { index: 0, lo: 1.0, hi: 3.0, count: 3 }.values(), vec![1.0, 2.0, 3.0]);
        let a = ScanAxis::relative(2, -4.0, 0.25, 5);
        assert_eq!((a.lo, a.hi), (-5.0, -3.0));
    }

    #[test]
    fn quadratic_fit_recovers_hessian() {
        let h = [4.0, 1.0, 1.0, 0.5];
        let mut pts = Vec::new();
        for i in -3..=3 {
            for j in -3..=3 {
                let (d1, d2) = (i as f64 * 0.1, j as f64 * 0.2);
                let cost = 2.0 + 0.3 * d1 + 0.5 * (h[0] * d1 * d1 + 2.0 * h[1] * d1 * d2 + h[3] * d2 * d2);
                pts.push(ScanPoint { p1: 1.0 + d1, p2: -2.0 + d2, cost });
            }
        }
        let fit = fit_quadratic(&pts, [1.0, -2.0], [1.0, 1.0]).unwrap();
        for (a, b) in fit.hessian.iter().zip(h) {
            assert!((a - b).abs() < 1e-9);
        }
        let disc = ((h[0] - h[3]).powi(2) + 4.0).sqrt();
        let (lo, hi) = ((h[0] + h[3] - disc) / 2.0, (h[0] + h[3] + disc) / 2.0);
        assert!((fit.anisotropy - hi / lo).abs() < 1e-8);
    }

    #[test]
    fn scan_csv_columns() {
        let mut buf = Vec::new();
        write_scan_csv(&[ScanPoint { p1: 1.0, p2: 2.0, cost: 3.5 }], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "param1,param2,cost\n1,2,3.5\n");
    }
}
