mod common;

use common::{bench, expm, max_abs};
use nalgebra::DMatrix;
use perifit::canonical::CanonicalForm;
use perifit::fundamental::{
    build_extended_matrix, compute_phi_grid, propagate, select_gain, ObserverGain, PhiConfig, PhiLookup,
};
use perifit::morris_lecar::{default_gain, to_canonical, Reversal};
use perifit::ode::Scheme;
use perifit::signal::SampledSignal;
use perifit::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ml_system() -> CanonicalForm {
    to_canonical(Reversal::default())
}

fn sine_signal() -> SampledSignal {
    SampledSignal::from_fn(50, 0.0, 1.0, |t| 1.0 + 3.0 * (2.0 * std::f64::consts::PI * t).sin()).unwrap()
}

/// Symmetric `P` solving `A^T P + P A = -Q` for 2x2 matrices, written out
/// entry by entry.
fn lyapunov_2x2(a: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let (a11, a12, a21, a22) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    // unknowns (p11, p12, p22)
    let m = DMatrix::from_row_slice(
        3,
        3,
        &[
            2.0 * a11, 2.0 * a21, 0.0,
            a12, a11 + a22, a21,
            0.0, 2.0 * a12, 2.0 * a22,
        ],
    );
    let rhs = nalgebra::DVector::from_column_slice(&[-q[(0, 0)], -q[(0, 1)], -q[(1, 1)]]);
    let p = m.lu().solve(&rhs).unwrap();
    DMatrix::from_row_slice(2, 2, &[p[0], p[1], p[1], p[2]])
}

#[test]
fn two_dimensional_gain_satisfies_certificate() {
    let sys = CanonicalForm::new(
        vec![1.0, 1.0],
        1,
        0,
        |y, _t, o: &mut [f64]| o[0] = y,
        |_y, _l, _t, _q, o: &mut [f64]| o.fill(0.0),
    )
    .unwrap();
    let gain = select_gain(&sys, None).unwrap();
    let l = gain.l();
    let a = DMatrix::from_row_slice(2, 2, &[l[0], 1.0, l[1], 0.0]);
    // eigenvalues of [[l0, 1], [l1, 0]] from the characteristic quadratic
    let (tr, det) = (l[0], -l[1]);
    let disc = tr * tr - 4.0 * det;
    let max_re = if disc >= 0.0 { (tr + disc.sqrt()) / 2.0 } else { tr / 2.0 };
    assert!(max_re < 0.0, "closed loop not Hurwitz: l = {l:?}");

    let p = lyapunov_2x2(&a, &DMatrix::identity(2, 2));
    let lyap = &p * &a + a.transpose() * &p + DMatrix::<f64>::identity(2, 2);
    assert!(max_abs(&lyap) <= 1e-8);
    assert!((p[(0, 0)] + p[(0, 1)] - 1.0).abs() <= 1e-8 && (p[(1, 0)] + p[(1, 1)]).abs() <= 1e-8);
    assert!(p[(0, 0)] > 0.0 && p[(0, 0)] * p[(1, 1)] - p[(0, 1)] * p[(1, 0)] > 0.0);
    let cert = gain.certificate().unwrap();
    assert!(cert.lyapunov_residual <= 1e-8 && cert.pb_residual <= 1e-8);
    assert!(max_abs(&(&cert.p - &p)) <= 1e-8);
}

#[test]
fn non_hurwitz_b_is_rejected_at_construction() {
    let res = CanonicalForm::new(
        vec![1.0, -1.0],
        1,
        0,
        |_y, _t, o: &mut [f64]| o.fill(0.0),
        |_y, _l, _t, _q, o: &mut [f64]| o.fill(0.0),
    );
    assert!(matches!(res, Err(Error::Invalid(_))));
}

#[test]
fn voltage_model_matrix_layout() {
    let sys = ml_system();
    let gain = default_gain(&sys).unwrap();
    let y = SampledSignal::new(vec![7.0; 8], 0.0, 1.0).unwrap();
    let m = build_extended_matrix(&sys, &gain, &y, 0.0);
    let expected = DMatrix::from_row_slice(3, 3, &[-1.0, 7.0, 1.0, -7.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
    assert_eq!(m, expected);
}

#[test]
fn time_invariant_grid_matches_matrix_exponential() {
    let sys = ml_system();
    let gain = default_gain(&sys).unwrap();
    let c = 2.5;
    let y = SampledSignal::new(vec![c; 16], 0.0, 1.0).unwrap();
    let cfg = PhiConfig {
        dt_int: 1e-3,
        nodes_per_sample: 5,
        ..Default::default()
    };
    let grid = compute_phi_grid(&sys, &gain, &y, &cfg).unwrap();
    let a = build_extended_matrix(&sys, &gain, &y, 0.0);
    for k in 0..grid.node_count() {
        let t = grid.node_time(k);
        let err = max_abs(&(grid.matrix(k) - expm(&(&a * t))));
        assert!(err <= 1e-8, "t = {t}: {err}");
    }
}

#[test]
fn normalization_is_exact() {
    let b = bench();
    let phi = b.predictor.phi();
    assert_eq!(phi.phi_at(phi.t0()).unwrap(), DMatrix::identity(3, 3));
    assert_eq!(phi.phi_inv_at(phi.t0()).unwrap(), DMatrix::identity(3, 3));
}

#[test]
fn inverse_consistency_random_times() {
    let b = bench();
    let phi = b.predictor.phi();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let t = phi.t0() + rng.random_range(0.0..=phi.period());
        let prod = phi.phi_at(t).unwrap() * phi.phi_inv_at(t).unwrap();
        assert!(max_abs(&(prod - DMatrix::<f64>::identity(3, 3))) <= 1e-8);
    }
}

#[test]
fn linear_lookup_inverse_consistency() {
    let sys = ml_system();
    let gain = default_gain(&sys).unwrap();
    let cfg = PhiConfig {
        dt_int: 1e-3,
        nodes_per_sample: 4,
        lookup: PhiLookup::Linear,
        ..Default::default()
    };
    let grid = compute_phi_grid(&sys, &gain, &sine_signal(), &cfg).unwrap();
    for k in 0..50 {
        let t = 0.013 + k as f64 * 0.0197;
        let prod = grid.phi_at(t).unwrap() * grid.phi_inv_at(t).unwrap();
        assert!(max_abs(&(prod - DMatrix::<f64>::identity(3, 3))) <= 1e-8);
    }
}

#[test]
fn out_of_range_lookup() {
    let phi = bench().predictor.phi();
    let hi = phi.t0() + phi.period();
    assert!(matches!(phi.phi_at(hi + 0.5), Err(Error::Range { .. })));
    assert!(matches!(phi.phi_inv_at(phi.t0() - 1.0), Err(Error::Range { .. })));
    assert!(phi.phi_at(hi).is_ok());
}

#[test]
fn semigroup_against_fresh_integration() {
    let b = bench();
    let phi = b.predictor.phi();
    let last = phi.node_count() - 1;
    let spn = (phi.dt_grid() / phi.dt_int()).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k1 = rng.random_range(0..last);
        let k2 = rng.random_range(k1 + 1..=last);
        let (t1, t2) = (phi.node_time(k1), phi.node_time(k2));
        let step = propagate(
            b.predictor.system(),
            b.predictor.gain(),
            &b.data.signal,
            t1,
            t2,
            (k2 - k1) * spn,
            phi.scheme(),
        )
        .unwrap();
        let err = max_abs(&(phi.matrix(k2) - step * phi.matrix(k1)));
        worst = worst.max(err);
    }
    assert!(worst <= 1e-6, "semigroup residual {worst}");
}

#[test]
fn liouville_determinant() {
    let b = bench();
    let phi = b.predictor.phi();
    let l = b.predictor.gain().l()[0];
    for k in (0..phi.node_count()).step_by(97) {
        let t = phi.node_time(k) - phi.t0();
        let det = phi.matrix(k).determinant();
        let expected = (l * t).exp();
        assert!(((det - expected) / expected).abs() <= 1e-6, "t = {t}: {det} vs {expected}");
    }
}

fn monodromy_error(scheme: Scheme, dt: f64, reference: &DMatrix<f64>) -> f64 {
    let sys = ml_system();
    let gain = default_gain(&sys).unwrap();
    let cfg = PhiConfig {
        dt_int: dt,
        nodes_per_sample: 1,
        scheme,
        ..Default::default()
    };
    let grid = compute_phi_grid(&sys, &gain, &sine_signal(), &cfg).unwrap();
    max_abs(&(grid.monodromy() - reference))
}

#[test]
fn integrator_convergence_order() {
    let sys = ml_system();
    let gain = default_gain(&sys).unwrap();
    for (scheme, coarse) in [(Scheme::DormandPrince5, 0.02 / 4.0), (Scheme::Rk4, 0.02 / 8.0)] {
        let cfg = PhiConfig {
            dt_int: coarse / 4.0,
            nodes_per_sample: 1,
            scheme,
            ..Default::default()
        };
        let reference = compute_phi_grid(&sys, &gain, &sine_signal(), &cfg).unwrap().monodromy();
        let ratio = monodromy_error(scheme, coarse, &reference) / monodromy_error(scheme, coarse / 2.0, &reference);
        let factor = 2f64.powi(scheme.order() as i32);
        // the reference carries its own error, (1/4)^p of the coarse one
        let expected = (1.0 - 0.25f64.powi(scheme.order() as i32)) / (0.5f64.powi(scheme.order() as i32) - 0.25f64.powi(scheme.order() as i32));
        assert!(ratio > 0.8 * expected && ratio < 1.2 * expected, "{scheme:?}: ratio {ratio}, nominal {factor}");
    }
}

#[test]
fn user_gain_must_be_stable() {
    let sys = ml_system();
    assert!(matches!(ObserverGain::from_vector(&sys, vec![1.0]), Err(Error::GainSelection(_))));
}

#[test]
fn phi_dump_has_one_row_per_node() {
    let sys = ml_system();
    let gain = default_gain(&sys).unwrap();
    let cfg = PhiConfig {
        dt_int: 1e-3,
        nodes_per_sample: 2,
        ..Default::default()
    };
    let grid = compute_phi_grid(&sys, &gain, &sine_signal(), &cfg).unwrap();
    let mut buf = Vec::new();
    grid.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 10);
    assert_eq!(lines.count(), grid.node_count());
    assert!(text.lines().nth(1).unwrap().starts_with("0,1,0,0,0,1,0,0,0,1"));
}
