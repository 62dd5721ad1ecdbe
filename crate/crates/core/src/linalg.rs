//! Dense helpers: matrix exponential, Taylor exponential action, GMRES and
//! sorted Hermitian eigendecompositions.

use nalgebra::{DMatrix, DVector};

use crate::C64;

fn norm1(a: &DMatrix<C64>) -> f64 {
    (0..a.ncols()).map(|j| a.column(j).iter().map(|x| x.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// `exp(A)` by scaling and squaring with a truncated Taylor series.
pub fn expm(a: &DMatrix<C64>) -> DMatrix<C64> {
    let n = a.nrows();
    let nrm = norm1(a);
    let s = if nrm > 0.25 { (nrm / 0.25).log2().ceil() as i32 } else { 0 };
    let scaled = a.unscale(2f64.powi(s));
    let mut term = DMatrix::<C64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=18 {
        term = (&term * &scaled).unscale(k as f64);
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// `exp(t·A)·v` where `apply(x)` evaluates `A·x` and `norm_a` bounds ‖A‖.
///
/// The interval is cut so that each substep has ‖A‖·h ≤ 1 and the Taylor
/// series of every substep is summed until terms drop below 1e-17 relative.
pub fn expm_action<F>(apply: F, v: &DVector<C64>, t: f64, norm_a: f64) -> DVector<C64>
where
    F: Fn(&DVector<C64>) -> DVector<C64>,
{
    if t == 0.0 {
        return v.clone();
    }
    let steps = (norm_a * t.abs()).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let mut x = v.clone();
    for _ in 0..steps {
        let mut term = x.clone();
        let mut acc = x.clone();
        let base = x.norm().max(f64::MIN_POSITIVE);
        for k in 1..60 {
            term = apply(&term).scale(h / k as f64);
            acc += &term;
            if term.norm() < 1e-17 * base {
                break;
            }
        }
        x = acc;
    }
    x
}

/// Hermitian eigendecomposition with eigenvalues in ascending order.
pub fn eigh(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = m.nrows();
    let e = (m + m.adjoint()).scale(0.5).symmetric_eigen();
    let mut idx: Vec<usize> = (0..e.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| e.eigenvalues[i].total_cmp(&e.eigenvalues[j]));
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vecs.set_column(k, &e.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub struct GmresOutcome {
    pub x: Vec<C64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn nrm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Restarted GMRES with modified Gram–Schmidt (two passes) and Givens rotations.
pub fn gmres<F>(apply: F, b: &[C64], x0: Option<&[C64]>, tol: f64, restart: usize, max_iter: usize) -> GmresOutcome
where
    F: Fn(&[C64]) -> Vec<C64>,
{
    let n = b.len();
    let zero = C64::new(0.0, 0.0);
    let mut x: Vec<C64> = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![zero; n]);
    let bnorm = nrm(b).max(f64::MIN_POSITIVE);
    let mut total = 0;
    let mut rel = f64::INFINITY;
    while total < max_iter {
        let ax = apply(&x);
        let r: Vec<C64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let beta = nrm(&r);
        rel = beta / bnorm;
        if rel <= tol {
            return GmresOutcome { x, iterations: total, relative_residual: rel, converged: true };
        }
        let m = restart.min(max_iter - total);
        let mut v: Vec<Vec<C64>> = vec![r.iter().map(|z| z / beta).collect()];
        let mut h = vec![vec![zero; m]; m + 1];
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![zero; m];
        let mut g = vec![zero; m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k_done = 0;
        for k in 0..m {
            let mut w = apply(&v[k]);
            total += 1;
            for _ in 0..2 {
                for (i, vi) in v.iter().enumerate() {
                    let c = dot(vi, &w);
                    h[i][k] += c;
                    w.iter_mut().zip(vi).for_each(|(wj, vj)| *wj -= c * vj);
                }
            }
            let hn = nrm(&w);
            h[k + 1][k] = C64::new(hn, 0.0);
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i].conj() * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let (a, bb) = (h[k][k], h[k + 1][k]);
            let denom = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = zero;
            } else if a.norm() == 0.0 {
                cs[k] = 0.0;
                sn[k] = bb.conj() / bb.norm();
            } else {
                cs[k] = a.norm() / denom;
                sn[k] = (a / a.norm()) * bb.conj() / denom;
            }
            h[k][k] = cs[k] * a + sn[k] * bb;
            h[k + 1][k] = zero;
            g[k + 1] = -sn[k].conj() * g[k];
            g[k] *= cs[k];
            k_done = k + 1;
            rel = g[k + 1].norm() / bnorm;
            if rel <= tol || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|z| z / hn).collect());
        }
        let mut y = vec![zero; k_done];
        for i in (0..k_done).rev() {
            let mut s = g[i];
            for j in i + 1..k_done {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            x.iter_mut().zip(&v[j]).for_each(|(xi, vi)| *xi += yj * vi);
        }
        if rel <= tol {
            let ax = apply(&x);
            let true_rel = nrm(&b.iter().zip(&ax).map(|(p, q)| p - q).collect::<Vec<_>>()) / bnorm;
            if true_rel <= 10.0 * tol {
                return GmresOutcome { x, iterations: total, relative_residual: true_rel, converged: true };
            }
            rel = true_rel;
        }
    }
    GmresOutcome { x, iterations: total, relative_residual: rel, converged: false }
}
