#![allow(dead_code)]

use std::sync::OnceLock;

use nalgebra::DMatrix;
use perifit::fundamental::PhiConfig;
use perifit::morris_lecar::{default_gain, generate_periodic_data, to_canonical, DataConfig, MorrisLecarParams, PeriodicData};
use perifit::predictor::{Predictor, DEFAULT_CONDITION_LIMIT};
use perifit::signal::Interpolation;

pub struct Bench {
    pub params: MorrisLecarParams,
    pub data: PeriodicData,
    pub predictor: Predictor,
}

/// Reference orbit, its data and predictor, built once per test binary.
pub fn bench() -> &'static Bench {
    static BENCH: OnceLock<Bench> = OnceLock::new();
    BENCH.get_or_init(|| {
        let params = MorrisLecarParams::reference();
        let data = generate_periodic_data(&params, &DataConfig::default()).expect("reference orbit");
        let system = to_canonical(params.reversal());
        let gain = default_gain(&system).expect("gain");
        let predictor = Predictor::new(system, gain, data.signal.clone(), &PhiConfig::default(), DEFAULT_CONDITION_LIMIT)
            .expect("predictor");
        Bench { params, data, predictor }
    })
}

/// Predictor on the reference data with the trigonometric interpolant.
pub fn trig_predictor() -> &'static Predictor {
    static PRED: OnceLock<Predictor> = OnceLock::new();
    PRED.get_or_init(|| {
        let b = bench();
        let signal = b.data.signal.with_interpolant(Interpolation::Trigonometric);
        Predictor::new(
            b.predictor.system().clone(),
            b.predictor.gain().clone(),
            signal,
            &PhiConfig::default(),
            DEFAULT_CONDITION_LIMIT,
        )
        .expect("predictor")
    })
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.iter().map(|v| v.abs()).sum::<f64>();
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(s);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}
