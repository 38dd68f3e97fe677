//! Independent reference computations shared by the integration suites.
#![allow(dead_code)]

use faer::Mat;
use hdelm::assembly::System;
use hdelm::{FeatureLayer, PointBlock};

/// `tanh(w_j · x + b_j)` computed directly from the layer parameters.
pub fn neuron(layer: &FeatureLayer, j: usize, x: &[f64]) -> f64 {
    let w = layer.weights();
    let z = layer.biases()[j] + x.iter().enumerate().map(|(k, xk)| w[(j, k)] * xk).sum::<f64>();
    z.tanh()
}

/// Central difference of order 1, 2 or 3 of `f` along coordinate `k`.
pub fn central(f: &dyn Fn(&[f64]) -> f64, x: &[f64], k: usize, order: usize, h: f64) -> f64 {
    let at = |off: f64| {
        let mut p = x.to_vec();
        p[k] += off;
        f(&p)
    };
    match order {
        1 => (at(h) - at(-h)) / (2.0 * h),
        2 => (at(h) - 2.0 * f(x) + at(-h)) / (h * h),
        3 => (at(2.0 * h) - 2.0 * at(h) + 2.0 * at(-h) - at(-2.0 * h)) / (2.0 * h * h * h),
        _ => unreachable!(),
    }
}

/// Fourth-order central first difference.
pub fn central4(f: &dyn Fn(&[f64]) -> f64, x: &[f64], k: usize, h: f64) -> f64 {
    let at = |off: f64| {
        let mut p = x.to_vec();
        p[k] += off;
        f(&p)
    };
    (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h)
}

/// Relative error with an absolute floor of `floor`.
pub fn rel_err(got: f64, want: f64, floor: f64) -> f64 {
    (got - want).abs() / want.abs().max(floor)
}

/// Solves `(AᵀA) x = Aᵀb` by Gaussian elimination with partial pivoting.
pub fn normal_equations(a: &Mat<f64>, b: &[f64]) -> Vec<f64> {
    let (n, m) = (a.nrows(), a.ncols());
    let mut g = vec![vec![0.0; m + 1]; m];
    for i in 0..m {
        for j in 0..m {
            g[i][j] = (0..n).map(|r| a[(r, i)] * a[(r, j)]).sum();
        }
        g[i][m] = (0..n).map(|r| a[(r, i)] * b[r]).sum();
    }
    for c in 0..m {
        let p = (c..m).max_by(|&x, &y| g[x][c].abs().total_cmp(&g[y][c].abs())).unwrap();
        g.swap(c, p);
        for r in c + 1..m {
            let f = g[r][c] / g[c][c];
            for k in c..=m {
                g[r][k] -= f * g[c][k];
            }
        }
    }
    let mut x = vec![0.0; m];
    for c in (0..m).rev() {
        let s: f64 = (c + 1..m).map(|k| g[c][k] * x[k]).sum();
        x[c] = (g[c][m] - s) / g[c][c];
    }
    x
}

/// Largest entrywise relative difference between the analytic Jacobian and
/// central differences of the residual, with an absolute floor of 1.
pub fn jacobian_fd_error(system: &System, phi: &[f64], h: f64) -> f64 {
    let jac = system.jacobian(phi);
    let mut worst = 0.0f64;
    let mut p = phi.to_vec();
    for j in 0..phi.len() {
        p[j] = phi[j] + h;
        let rp = system.residual(&p);
        p[j] = phi[j] - h;
        let rm = system.residual(&p);
        p[j] = phi[j];
        for i in 0..rp.len() {
            let fd = (rp[i] - rm[i]) / (2.0 * h);
            worst = worst.max(rel_err(jac[(i, j)], fd, 1.0));
        }
    }
    worst
}

/// Deterministic pseudo-random points in `[lo, hi]^dim`.
pub fn lcg_points(dim: usize, n: usize, lo: f64, hi: f64, mut state: u64) -> PointBlock {
    let mut data = Vec::with_capacity(dim * n);
    for _ in 0..dim * n {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let u = (state >> 11) as f64 / (1u64 << 53) as f64;
        data.push(lo + (hi - lo) * u);
    }
    PointBlock::from_rows(dim, data).unwrap()
}
