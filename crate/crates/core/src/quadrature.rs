//! Cumulative quadrature on uniform grids.
//!
//! Each interval `[x_k, x_{k+1}]` is integrated with the cubic through the
//! four nearest nodes (`h/24 * (-f[k-1] + 13 f[k] + 13 f[k+1] - f[k+2])`,
//! one-sided at the two ends). The running sums are fourth-order accurate at
//! every node, so prefix integrals come out of a single pass.

/// Running integral of `f` from the first node to every node, `F[0] = 0`.
///
/// # Panics
/// Panics when fewer than four nodes are supplied.
pub fn cumulative(f: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    cumulative_into(f, h, &mut out);
    out
}

pub fn cumulative_into(f: &[f64], h: f64, out: &mut [f64]) {
    let n = f.len();
    assert!(n >= 4, "cumulative quadrature needs at least 4 nodes");
    assert_eq!(out.len(), n);
    let c = h / 24.0;
    out[0] = 0.0;
    let mut acc = 0.0;
    for k in 0..n - 1 {
        acc += interval(f, k, c);
        out[k + 1] = acc;
    }
}

/// Integral over the whole grid.
pub fn total(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    assert!(n >= 4, "quadrature needs at least 4 nodes");
    let c = h / 24.0;
    (0..n - 1).map(|k| interval(f, k, c)).sum()
}

#[inline]
fn interval(f: &[f64], k: usize, c: f64) -> f64 {
    let n = f.len();
    if k == 0 {
        c * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3])
    } else if k == n - 2 {
        c * (9.0 * f[n - 1] + 19.0 * f[n - 2] - 5.0 * f[n - 3] + f[n - 4])
    } else {
        c * (-f[k - 1] + 13.0 * (f[k] + f[k + 1]) - f[k + 2])
    }
}

/// Running integral of a vector-valued integrand stored node-major
/// (`f[k * dim + i]`), written into `out` with the same layout.
pub fn cumulative_vec_into(f: &[f64], dim: usize, h: f64, out: &mut [f64]) {
    let nodes = f.len() / dim;
    assert!(nodes >= 4, "cumulative quadrature needs at least 4 nodes");
    assert_eq!(out.len(), f.len());
    let c = h / 24.0;
    let at = |k: usize, i: usize| f[k * dim + i];
    out[..dim].fill(0.0);
    for k in 0..nodes - 1 {
        for i in 0..dim {
            let inc = if k == 0 {
                c * (9.0 * at(0, i) + 19.0 * at(1, i) - 5.0 * at(2, i) + at(3, i))
            } else if k == nodes - 2 {
                let m = nodes - 1;
                c * (9.0 * at(m, i) + 19.0 * at(m - 1, i) - 5.0 * at(m - 2, i) + at(m - 3, i))
            } else {
                c * (-at(k - 1, i) + 13.0 * (at(k, i) + at(k + 1, i)) - at(k + 2, i))
            };
            out[(k + 1) * dim + i] = out[k * dim + i] + inc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_cubics() {
        let h = 0.1;
        let f: Vec<f64> = (0..11)
            .map(|k| {
                let x = k as f64 * h;
                1.0 - 2.0 * x + 3.0 * x * x - x * x * x
            })
            .collect();
        let c = cumulative(&f, h);
        for (k, v) in c.iter().enumerate() {
            let x = k as f64 * h;
            let exact = x - x * x + x * x * x - x.powi(4) / 4.0;
            assert!((v - exact).abs() < 1e-14, "node {k}: {v} vs {exact}");
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let err = |n: usize| {
            let h = 1.0 / n as f64;
            let f: Vec<f64> = (0..=n).map(|k| (3.0 * k as f64 * h).exp()).collect();
            let c = cumulative(&f, h);
            (0..=n)
                .map(|k| (c[k] - ((3.0 * k as f64 * h).exp() - 1.0) / 3.0).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(40) / err(80);
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }

    #[test]
    fn vector_layout_matches_scalar() {
        let h = 0.05;
        let a: Vec<f64> = (0..30).map(|k| (k as f64 * h).sin()).collect();
        let b: Vec<f64> = (0..30).map(|k| (k as f64 * h).cos()).collect();
        let inter: Vec<f64> = a.iter().zip(&b).flat_map(|(x, y)| [*x, *y]).collect();
        let mut out = vec![0.0; 60];
        cumulative_vec_into(&inter, 2, h, &mut out);
        let ca = cumulative(&a, h);
        let cb = cumulative(&b, h);
        for k in 0..30 {
            assert!((out[2 * k] - ca[k]).abs() < 1e-15);
            assert!((out[2 * k + 1] - cb[k]).abs() < 1e-15);
        }
        assert!((total(&a, h) - ca[29]).abs() < 1e-15);
    }
}
