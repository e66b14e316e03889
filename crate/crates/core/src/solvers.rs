//! Dense non-negative least squares and non-negative L1-regularised least
//! squares.
//!
//! Both problems are solved as the quadratic program
//! `min ½ cᵀGc − hᵀc  s.t. c >= 0` with `G = BᵀB` by a Lawson–Hanson active-set
//! iteration. For NNLS `h = Bᵀy`; for the lasso the penalty `λ‖c‖₁ = λ1ᵀc` is
//! linear on the orthant, so `h = Bᵀy − λ/2`. Returned solutions carry a KKT
//! gap recomputed from `B` and `y` directly.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Default tolerance, relative to `‖y‖`.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Relative pivot size below which the passive-set Cholesky factor is
/// considered singular.
const PIVOT_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub coefficients: Vec<f64>,
    /// `‖y − Bc‖₂`.
    pub residual_norm: f64,
    /// Largest violation of the first-order optimality conditions.
    pub kkt_gap: f64,
    /// `kkt_gap` is within tolerance and the iteration cap was not hit.
    pub certified: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QpOutcome {
    pub iterations: usize,
    pub capped: bool,
}

/// Reusable Lawson–Hanson workspace for `min ½cᵀGc − hᵀc, c >= 0`.
#[derive(Debug, Clone)]
pub struct ActiveSet {
    m: usize,
    passive: Vec<usize>,
    in_passive: Vec<bool>,
    blocked: Vec<bool>,
    w: Vec<f64>,
    z: Vec<f64>,
    chol: Vec<f64>,
}

impl ActiveSet {
    pub fn new(m: usize) -> Self {
        ActiveSet {
            m,
            passive: Vec::with_capacity(m),
            in_passive: vec![false; m],
            blocked: vec![false; m],
            w: vec![0.0; m],
            z: vec![0.0; m],
            chol: vec![0.0; m * m],
        }
    }

    pub fn size(&self) -> usize {
        self.m
    }

    /// Solves the QP for a column-major `m × m` Gram matrix. Variables enter
    /// while their negative gradient exceeds `threshold`; columns with zero
    /// diagonal stay at zero.
    pub fn solve(&mut self, gram: &[f64], h: &[f64], threshold: f64, max_iter: usize, c: &mut [f64]) -> QpOutcome {
        let m = self.m;
        debug_assert_eq!(gram.len(), m * m);
        debug_assert_eq!(h.len(), m);
        c.fill(0.0);
        self.passive.clear();
        self.in_passive.fill(false);
        self.blocked.fill(false);
        self.w.copy_from_slice(h);
        for j in 0..m {
            if gram[j * m + j] <= 0.0 {
                self.blocked[j] = true;
            }
        }
        let zero_cols: Vec<bool> = self.blocked.clone();

        let mut iterations = 0;
        let mut capped = false;
        loop {
            let mut enter = None;
            let mut best = threshold;
            for j in 0..m {
                if !self.in_passive[j] && !self.blocked[j] && self.w[j] > best {
                    best = self.w[j];
                    enter = Some(j);
                }
            }
            let Some(j) = enter else { break };
            if iterations >= max_iter {
                capped = true;
                break;
            }
            iterations += 1;
            self.passive.push(j);
            self.in_passive[j] = true;

            let mut first = true;
            let mut moved = false;
            loop {
                let solved = self.solve_passive(gram, h);
                if !solved && first {
                    self.passive.pop();
                    self.in_passive[j] = false;
                    if self.exchange(gram, j, c) {
                        first = false;
                        moved = true;
                        continue;
                    }
                    self.blocked[j] = true;
                    break;
                }
                if !solved {
                    break;
                }
                if first && self.z[j] <= 0.0 {
                    // The entering column is numerically dependent on the
                    // passive set; leave it out until the iterate moves.
                    self.passive.retain(|&p| p != j);
                    self.in_passive[j] = false;
                    self.blocked[j] = true;
                    break;
                }
                first = false;
                if self.passive.iter().all(|&p| self.z[p] > 0.0) {
                    for &p in &self.passive {
                        c[p] = self.z[p];
                    }
                    moved = true;
                    break;
                }
                let mut alpha = f64::INFINITY;
                let mut leaving = usize::MAX;
                for &p in &self.passive {
                    if self.z[p] <= 0.0 {
                        let a = c[p] / (c[p] - self.z[p]);
                        if a < alpha {
                            alpha = a;
                            leaving = p;
                        }
                    }
                }
                for &p in &self.passive {
                    c[p] += alpha * (self.z[p] - c[p]);
                }
                c[leaving] = 0.0;
                for &p in &self.passive {
                    if c[p] <= 0.0 {
                        c[p] = 0.0;
                        self.in_passive[p] = false;
                    }
                }
                let in_passive = &self.in_passive;
                self.passive.retain(|&p| in_passive[p]);
                moved = true;
                if self.passive.is_empty() {
                    break;
                }
            }

            if moved {
                self.blocked.copy_from_slice(&zero_cols);
            }
            self.update_gradient(gram, h, c);
        }
        QpOutcome { iterations, capped }
    }

    fn update_gradient(&mut self, gram: &[f64], h: &[f64], c: &[f64]) {
        let m = self.m;
        for r in 0..m {
            let mut gc = 0.0;
            for &p in &self.passive {
                gc += gram[p * m + r] * c[p];
            }
            self.w[r] = h[r] - gc;
        }
    }

    /// Column `j` is (numerically) spanned by the passive set, so the
    /// objective is linear along `c_j += t, c_P -= t·a` with `G_PP a = G_Pj`.
    /// Steps to the first passive variable that reaches zero and swaps it
    /// for `j`. False when no passive variable limits the step before the
    /// curvature does.
    fn exchange(&mut self, gram: &[f64], j: usize, c: &mut [f64]) -> bool {
        let m = self.m;
        if self.passive.is_empty() || !self.solve_passive(gram, &gram[j * m..(j + 1) * m]) {
            return false;
        }
        let curvature = gram[j * m + j] - self.passive.iter().map(|&p| self.z[p] * gram[j * m + p]).sum::<f64>();
        let limit = if curvature > 0.0 { self.w[j] / curvature } else { f64::INFINITY };
        let mut step = f64::INFINITY;
        let mut leaving = usize::MAX;
        for &p in &self.passive {
            if self.z[p] > 0.0 && c[p] / self.z[p] < step {
                step = c[p] / self.z[p];
                leaving = p;
            }
        }
        if leaving == usize::MAX || step >= limit {
            return false;
        }
        for &p in &self.passive {
            c[p] = (c[p] - step * self.z[p]).max(0.0);
        }
        c[leaving] = 0.0;
        c[j] = step;
        self.in_passive[leaving] = false;
        self.passive.retain(|&p| p != leaving);
        self.passive.push(j);
        self.in_passive[j] = true;
        true
    }

    /// Cholesky solve of `G_PP z_P = h_P`. False when the factor is singular.
    fn solve_passive(&mut self, gram: &[f64], h: &[f64]) -> bool {
        let m = self.m;
        let k = self.passive.len();
        let l = &mut self.chol;
        for a in 0..k {
            for b in 0..=a {
                l[a * k + b] = gram[self.passive[b] * m + self.passive[a]];
            }
        }
        for a in 0..k {
            for b in 0..=a {
                let mut s = l[a * k + b];
                for t in 0..b {
                    s -= l[a * k + t] * l[b * k + t];
                }
                if a == b {
                    let diag = gram[self.passive[a] * m + self.passive[a]];
                    if s <= PIVOT_FLOOR * diag {
                        return false;
                    }
                    l[a * k + a] = s.sqrt();
                } else {
                    l[a * k + b] = s / l[b * k + b];
                }
            }
        }
        // Forward then back substitution into z (indexed by passive order first).
        let mut tmp = [0.0f64; 64];
        let mut heap;
        let y: &mut [f64] = if k <= tmp.len() {
            &mut tmp[..k]
        } else {
            heap = vec![0.0; k];
            &mut heap
        };
        for a in 0..k {
            let mut s = h[self.passive[a]];
            for t in 0..a {
                s -= l[a * k + t] * y[t];
            }
            y[a] = s / l[a * k + a];
        }
        for a in (0..k).rev() {
            let mut s = y[a];
            for t in a + 1..k {
                s -= l[t * k + a] * y[t];
            }
            y[a] = s / l[a * k + a];
        }
        for a in 0..k {
            self.z[self.passive[a]] = y[a];
        }
        true
    }
}

/// `BᵀB` for a column-major `q × m` matrix, column-major.
pub fn gram(b: &[f64], q: usize, m: usize) -> Vec<f64> {
    let mut g = vec![0.0; m * m];
    for i in 0..m {
        let ci = &b[i * q..(i + 1) * q];
        for j in 0..=i {
            let cj = &b[j * q..(j + 1) * q];
            let v = dot(ci, cj);
            g[i * m + j] = v;
            g[j * m + i] = v;
        }
    }
    g
}

/// `Bᵀy` into `out`.
pub fn project(b: &[f64], q: usize, y: &[f64], out: &mut [f64]) {
    for (j, o) in out.iter_mut().enumerate() {
        *o = dot(&b[j * q..(j + 1) * q], y);
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Bc − y` for a column-major `B`.
fn misfit(b: &[f64], q: usize, c: &[f64], y: &[f64]) -> Vec<f64> {
    let mut r: Vec<f64> = y.iter().map(|v| -v).collect();
    for (j, &cj) in c.iter().enumerate() {
        if cj != 0.0 {
            for (ri, bij) in r.iter_mut().zip(&b[j * q..(j + 1) * q]) {
                *ri += bij * cj;
            }
        }
    }
    r
}

fn gap_from_gradient(g: &[f64], c: &[f64]) -> f64 {
    g.iter().zip(c).map(|(&gj, &cj)| if cj > 0.0 { gj.abs() } else { (-gj).max(0.0) }).fold(0.0, f64::max)
}

/// KKT gap of `c` for `min ‖y − Bc‖²/2, c >= 0`: gradient `Bᵀ(Bc − y)`.
pub fn kkt_gap_nnls(b: &DMatrix<f64>, y: &[f64], c: &[f64]) -> f64 {
    let q = b.nrows();
    let r = misfit(b.as_slice(), q, c, y);
    let mut g = vec![0.0; b.ncols()];
    project(b.as_slice(), q, &r, &mut g);
    gap_from_gradient(&g, c)
}

/// KKT gap of `c` for `min ‖y − Bc‖² + λ1ᵀc, c >= 0`: gradient
/// `2Bᵀ(Bc − y) + λ`.
pub fn kkt_gap_lasso(b: &DMatrix<f64>, y: &[f64], lambda: f64, c: &[f64]) -> f64 {
    let q = b.nrows();
    let r = misfit(b.as_slice(), q, c, y);
    let mut g = vec![0.0; b.ncols()];
    project(b.as_slice(), q, &r, &mut g);
    for gj in &mut g {
        *gj = 2.0 * *gj + lambda;
    }
    gap_from_gradient(&g, c)
}

/// `‖y − Bc‖² + λ‖c‖₁`.
pub fn lasso_objective(b: &DMatrix<f64>, y: &[f64], lambda: f64, c: &[f64]) -> f64 {
    let r = misfit(b.as_slice(), b.nrows(), c, y);
    dot(&r, &r) + lambda * c.iter().map(|v| v.abs()).sum::<f64>()
}

fn validate(b: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if b.nrows() == 0 || b.ncols() == 0 {
        return Err(Error::DimensionMismatch("matrix must be at least 1 × 1".into()));
    }
    if b.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} rows, right-hand side has {}",
            b.nrows(),
            y.len()
        )));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("right-hand side"));
    }
    Ok(())
}

fn solve_shifted(b: &DMatrix<f64>, y: &[f64], lambda: f64, tol: f64) -> Result<NnlsSolution> {
    validate(b, y)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidParameter(format!("tolerance must be > 0, got {tol}")));
    }
    let (q, m) = b.shape();
    let data = b.as_slice();
    let g = gram(data, q, m);
    let mut h = vec![0.0; m];
    project(data, q, y, &mut h);
    for hj in &mut h {
        *hj -= 0.5 * lambda;
    }
    let y_norm = dot(y, y).sqrt();
    let abs_tol = tol * y_norm;
    // Entering threshold on the half-gradient, with margin for the explicit
    // recomputation below.
    let scale = if lambda > 0.0 { 0.5 } else { 1.0 };
    let threshold = 0.5 * abs_tol * scale;

    let mut c = vec![0.0; m];
    let mut solver = ActiveSet::new(m);
    let outcome = solver.solve(&g, &h, threshold, 3 * m, &mut c);

    let r = misfit(data, q, &c, y);
    let residual_norm = dot(&r, &r).sqrt();
    let kkt_gap = if lambda > 0.0 { kkt_gap_lasso(b, y, lambda, &c) } else { kkt_gap_nnls(b, y, &c) };
    Ok(NnlsSolution {
        coefficients: c,
        residual_norm,
        kkt_gap,
        certified: !outcome.capped && kkt_gap <= abs_tol,
        iterations: outcome.iterations,
    })
}

/// `argmin ‖y − Bc‖₂ s.t. c >= 0`.
///
/// `tol` is relative to `‖y‖` and bounds the KKT gap of the gradient
/// `Bᵀ(Bc − y)`. Solutions that miss it (or exhaust the `3·M` iteration cap)
/// come back with `certified == false`.
pub fn nnls(b: &DMatrix<f64>, y: &[f64], tol: f64) -> Result<NnlsSolution> {
    solve_shifted(b, y, 0.0, tol)
}

/// `argmin ‖y − Bc‖₂² + λ‖c‖₁ s.t. c >= 0`.
///
/// The KKT gap is measured on `2Bᵀ(Bc − y) + λ`. With `λ = 0` this is
/// [`nnls`] (whose gap is measured on half that gradient).
pub fn nn_lasso(b: &DMatrix<f64>, y: &[f64], lambda: f64, tol: f64) -> Result<NnlsSolution> {
    solve_shifted(b, y, lambda, tol)
}
