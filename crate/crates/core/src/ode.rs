//! Fixed-step explicit Runge–Kutta stepping.

use serde::{Deserialize, Serialize};

/// Butcher tableau of an explicit scheme; only the propagating weights are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Dormand–Prince 5(4) coefficients, fifth-order solution, no step control.
    #[default]
    DormandPrince5,
    /// Classic fourth-order Runge–Kutta.
    Rk4,
}

impl Scheme {
    pub fn order(self) -> u32 {
        match self {
            Scheme::DormandPrince5 => 5,
            Scheme::Rk4 => 4,
        }
    }

    fn stages(self) -> usize {
        match self {
            Scheme::DormandPrince5 => 6,
            Scheme::Rk4 => 4,
        }
    }

    /// Node fractions `c_i`.
    pub fn nodes(self) -> &'static [f64] {
        match self {
            Scheme::DormandPrince5 => &DP5_C,
            Scheme::Rk4 => &RK4_C,
        }
    }

    fn a(self, i: usize, j: usize) -> f64 {
        match self {
            Scheme::DormandPrince5 => DP5_A[i][j],
            Scheme::Rk4 => RK4_A[i][j],
        }
    }

    fn b(self) -> &'static [f64] {
        match self {
            Scheme::DormandPrince5 => &DP5_B,
            Scheme::Rk4 => &RK4_B,
        }
    }
}

// The seventh DP stage only feeds the embedded error estimate.
const DP5_C: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0];
const DP5_A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
];
const DP5_B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];

const RK4_C: [f64; 4] = [0.0, 0.5, 0.5, 1.0];
const RK4_A: [[f64; 5]; 4] = [
    [0.0; 5],
    [0.5, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.5, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0, 0.0],
];
const RK4_B: [f64; 4] = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];

/// Reusable stepper for a state of fixed dimension.
#[derive(Debug, Clone)]
pub struct Stepper {
    scheme: Scheme,
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
}

impl Stepper {
    pub fn new(scheme: Scheme, dim: usize) -> Self {
        Self {
            scheme,
            k: vec![vec![0.0; dim]; scheme.stages()],
            tmp: vec![0.0; dim],
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Advances `y` from `t` to `t + h` in place. `rhs(t, y, dy)` writes the
    /// derivative into `dy`.
    pub fn step<F>(&mut self, rhs: &mut F, t: f64, h: f64, y: &mut [f64])
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let s = self.scheme;
        let c = s.nodes();
        for i in 0..s.stages() {
            self.tmp.copy_from_slice(y);
            for j in 0..i {
                let a = s.a(i, j);
                if a != 0.0 {
                    for (x, kj) in self.tmp.iter_mut().zip(&self.k[j]) {
                        *x += h * a * kj;
                    }
                }
            }
            let (ki, _) = self.k.split_at_mut(i + 1);
            rhs(t + c[i] * h, &self.tmp, &mut ki[i]);
        }
        for (i, &b) in s.b().iter().enumerate() {
            if b != 0.0 {
                for (x, ki) in y.iter_mut().zip(&self.k[i]) {
                    *x += h * b * ki;
                }
            }
        }
    }
}
