//! Independent reference solvers shared by the solver tests and the
//! acceptance suite.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Minimum of `‖y − Bc‖²` over `c >= 0` by enumerating every support.
pub fn nnls_by_enumeration(b: &DMatrix<f64>, y: &[f64]) -> (Vec<f64>, f64) {
    let m = b.ncols();
    assert!(m <= 16);
    let yv = DVector::from_column_slice(y);
    let mut best = (vec![0.0; m], yv.norm_squared());
    for mask in 1u32..(1 << m) {
        let cols: Vec<usize> = (0..m).filter(|j| mask & (1 << j) != 0).collect();
        let sub = b.select_columns(&cols);
        let Ok(sol) = sub.clone().svd(true, true).solve(&yv, 1e-12) else { continue };
        if sol.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let r = (&sub * &sol - &yv).norm_squared();
        if r < best.1 {
            let mut c = vec![0.0; m];
            for (k, &j) in cols.iter().enumerate() {
                c[j] = sol[k].max(0.0);
            }
            best = (c, r);
        }
    }
    best
}

pub fn lasso_value(b: &DMatrix<f64>, y: &[f64], lambda: f64, c: &[f64]) -> f64 {
    let r = b * DVector::from_column_slice(c) - DVector::from_column_slice(y);
    r.norm_squared() + lambda * c.iter().sum::<f64>()
}

/// Accelerated projected gradient with function-value restarts for
/// `min ‖y − Bc‖² + λ·1ᵀc, c >= 0`.
pub fn lasso_fista(b: &DMatrix<f64>, y: &[f64], lambda: f64, max_iter: usize) -> Vec<f64> {
    let m = b.ncols();
    let g = b.transpose() * b;
    let h = b.transpose() * DVector::from_column_slice(y);
    let lmax = g.clone().symmetric_eigenvalues().max();
    if lmax <= 0.0 {
        return vec![0.0; m];
    }
    let step = 1.0 / (2.0 * lmax);
    let value = |c: &DVector<f64>| (c.dot(&(&g * c)) - 2.0 * h.dot(c)) + lambda * c.sum();
    let mut x = DVector::zeros(m);
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut fx = value(&x);
    for _ in 0..max_iter {
        let grad = (&g * &z - &h) * 2.0 + DVector::from_element(m, lambda);
        let next = (&z - grad * step).map(|v| v.max(0.0));
        let f_next = value(&next);
        if f_next > fx {
            // Restart momentum.
            z = x.clone();
            t = 1.0;
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = &next + (&next - &x) * ((t - 1.0) / t_next);
        let moved = (&next - &x).norm();
        x = next;
        t = t_next;
        let done = fx - f_next <= 1e-16 * f_next.abs().max(1e-300) && moved <= 1e-14 * x.norm().max(1e-300);
        fx = f_next;
        if done {
            break;
        }
    }
    x.iter().copied().collect()
}
