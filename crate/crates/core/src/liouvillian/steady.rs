//! Steady-state solvers.
//!
//! The default route splits the generator as `L(ρ) = S(ρ) + J(ρ)` with
//! `S(X) = KX + XK†` and `J(X) = Σ cXc†`. With the Schur form `K = UTU†`, S is
//! inverted in O(d³) by triangular back substitution, and GMRES solves the
//! preconditioned, rank-one-deflated system
//!
//! ```text
//! x + S⁻¹J(x) + w·tr(x) = w
//! ```
//!
//! whose solution has unit trace and lies in the kernel of L. A second solve
//! with a different deflation direction `w` exposes a degenerate kernel.
//! Sparse LU on the trace-replaced system and a dense SVD are fallbacks for
//! small spaces or generators without uniform decay.

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::DMatrix;

use super::{unvectorize, vectorize, Liouvillian};
use crate::hilbert::{hermitian_part, min_eigenvalue, DensityMatrix};
use crate::linalg::gmres;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteadyMethod {
    /// Try Krylov, then sparse LU, then dense, as the space size allows.
    Auto,
    Krylov,
    SparseLu,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyOptions {
    pub method: SteadyMethod,
    /// Required Frobenius norm of L(ρ).
    pub residual_tol: f64,
    /// Repeat the Krylov solve with a second deflation direction and compare.
    pub check_uniqueness: bool,
    pub max_iterations: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self { method: SteadyMethod::Auto, residual_tol: 1e-10, check_uniqueness: true, max_iterations: 2000 }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyReport {
    pub rho: DensityMatrix,
    pub residual: f64,
    pub min_eigenvalue: f64,
    pub method: SteadyMethod,
    pub iterations: usize,
}

const LU_MAX_DIM: usize = 100;
const DENSE_MAX_DIM: usize = 36;

pub fn steady_state(l: &Liouvillian) -> Result<DensityMatrix> {
    Ok(steady_state_with(l, &SteadyOptions::default())?.rho)
}

pub fn steady_state_with(l: &Liouvillian, opts: &SteadyOptions) -> Result<SteadyReport> {
    let d = l.space().dim();
    match opts.method {
        SteadyMethod::Krylov => krylov(l, opts),
        SteadyMethod::SparseLu => sparse_lu(l, opts),
        SteadyMethod::Dense => dense(l, opts),
        SteadyMethod::Auto => {
            let mut last = match krylov(l, opts) {
                Ok(r) => return Ok(r),
                Err(Error::NonUniqueSteadyState) => return Err(Error::NonUniqueSteadyState),
                Err(e) => e,
            };
            if d <= LU_MAX_DIM {
                match sparse_lu(l, opts) {
                    Ok(r) => return Ok(r),
                    Err(e) => last = e,
                }
            }
            if d <= DENSE_MAX_DIM {
                return dense(l, opts);
            }
            Err(last)
        }
    }
}

fn finish(l: &Liouvillian, raw: DMatrix<C64>, method: SteadyMethod, iterations: usize, opts: &SteadyOptions) -> Result<SteadyReport> {
    let mut rho = hermitian_part(&raw);
    let tr = rho.trace();
    if !(tr.norm() > 0.0) || !tr.re.is_finite() {
        return Err(Error::SteadyState(format!("{method:?} produced a traceless or non-finite solution")));
    }
    rho.unscale_mut(tr.re);
    let residual = l.residual(&rho);
    if !(residual < opts.residual_tol) {
        return Err(Error::SteadyState(format!("{method:?} residual {residual:e} exceeds {:e}", opts.residual_tol)));
    }
    let min_eig = min_eigenvalue(&rho);
    if min_eig < -1e-8 {
        return Err(Error::SteadyState(format!("{method:?} solution has eigenvalue {min_eig:e}")));
    }
    Ok(SteadyReport { rho: DensityMatrix::new(*l.space(), rho)?, residual, min_eigenvalue: min_eig, method, iterations })
}

/// Inverse of X ↦ KX + XK† via the complex Schur form of K.
struct SylvesterInverse {
    u: DMatrix<C64>,
    u_adj: DMatrix<C64>,
    t: DMatrix<C64>,
}

impl SylvesterInverse {
    fn new(k: &DMatrix<C64>) -> Result<Self> {
        let (u, t) = k.clone().schur().unpack();
        let d = t.nrows();
        let scale = t.diagonal().iter().map(|z| z.norm()).fold(1.0, f64::max);
        let decay = t.diagonal().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        if decay > -1e-13 * scale {
            return Err(Error::SteadyState("effective generator has a non-decaying mode; Sylvester split unusable".into()));
        }
        for j in 0..d {
            for i in j + 1..d {
                if t[(i, j)].norm() > 1e-10 * scale {
                    return Err(Error::SteadyState("Schur factor is not triangular".into()));
                }
            }
        }
        Ok(Self { u_adj: u.adjoint(), u, t })
    }

    fn solve(&self, c: &DMatrix<C64>) -> DMatrix<C64> {
        let d = self.t.nrows();
        let cp = &self.u_adj * c * &self.u;
        let t = &self.t;
        let tc = t.adjoint(); // tc[(k, j)] = conj(t[(j, k)])
        let mut y = DMatrix::<C64>::zeros(d, d);
        let mut row = vec![C64::new(0.0, 0.0); d];
        for i in (0..d).rev() {
            // row[j] = Σ_{k>i} T_ik Y_kj
            row.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
            for k in i + 1..d {
                let tik = t[(i, k)];
                if tik.norm() == 0.0 {
                    continue;
                }
                for j in 0..d {
                    row[j] += tik * y[(k, j)];
                }
            }
            let tii = t[(i, i)];
            for j in (0..d).rev() {
                let mut s = cp[(i, j)] - row[j];
                for k in j + 1..d {
                    s -= y[(i, k)] * tc[(k, j)];
                }
                y[(i, j)] = s / (tii + t[(j, j)].conj());
            }
        }
        &self.u * y * &self.u_adj
    }
}

fn krylov(l: &Liouvillian, opts: &SteadyOptions) -> Result<SteadyReport> {
    let d = l.space().dim();
    let inv = SylvesterInverse::new(&l.k().to_dense())?;
    let solve_for = |w: &DMatrix<C64>| -> Result<(DMatrix<C64>, usize)> {
        let apply = |x: &[C64]| -> Vec<C64> {
            let xm = unvectorize(x, d);
            let tr = xm.trace();
            let mut y = &xm + inv.solve(&l.jump_part(&xm));
            y += w * tr;
            vectorize(&y)
        };
        let out = gmres(apply, &vectorize(w), None, 1e-13, 120, opts.max_iterations);
        if !out.x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::SteadyState("Krylov iteration diverged".into()));
        }
        Ok((unvectorize(&out.x, d), out.iterations))
    };
    let w1 = DMatrix::<C64>::identity(d, d).unscale(d as f64);
    let (x1, it1) = solve_for(&w1)?;
    let report = finish(l, x1, SteadyMethod::Krylov, it1, opts)?;
    if opts.check_uniqueness {
        let weights: Vec<f64> = (0..d).map(|i| 1.0 + ((i * 7919 + 17) % 23) as f64 / 23.0).collect();
        let total: f64 = weights.iter().sum();
        let w2 = DMatrix::from_fn(d, d, |i, j| if i == j { C64::new(weights[i] / total, 0.0) } else { C64::new(0.0, 0.0) });
        let (x2, it2) = solve_for(&w2)?;
        let second = match finish(l, x2, SteadyMethod::Krylov, it2, opts) {
            Ok(r) => r,
            Err(_) => return Err(Error::NonUniqueSteadyState),
        };
        let dist = report.rho.trace_distance(&second.rho)?;
        if dist > 1e-7 {
            return Err(Error::NonUniqueSteadyState);
        }
        return Ok(SteadyReport { iterations: it1 + it2, ..report });
    }
    Ok(report)
}

fn sparse_lu(l: &Liouvillian, opts: &SteadyOptions) -> Result<SteadyReport> {
    let d = l.space().dim();
    let n = d * d;
    let mut trip: Vec<Triplet<usize, usize, C64>> =
        l.generator().triplets().filter(|&(r, _, _)| r != 0).map(|(r, c, v)| Triplet::new(r, c, v)).collect();
    for i in 0..d {
        trip.push(Triplet::new(0, i * d + i, C64::new(1.0, 0.0)));
    }
    let mat = SparseColMat::<usize, C64>::try_new_from_triplets(n, n, &trip)
        .map_err(|e| Error::SteadyState(format!("sparse assembly failed: {e:?}")))?;
    let lu = mat.sp_lu().map_err(|e| Error::SteadyState(format!("sparse LU failed: {e:?}")))?;
    let rhs = faer::Col::<C64>::from_fn(n, |i| if i == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    let x = lu.solve(&rhs);
    let v: Vec<C64> = (0..n).map(|i| x[i]).collect();
    finish(l, unvectorize(&v, d), SteadyMethod::SparseLu, 0, opts)
}

fn dense(l: &Liouvillian, opts: &SteadyOptions) -> Result<SteadyReport> {
    let d = l.space().dim();
    if d > DENSE_MAX_DIM {
        return Err(Error::SteadyState(format!("dense null space limited to dimension {DENSE_MAX_DIM}, got {d}")));
    }
    let g = l.to_dense();
    let svd = g.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::SteadyState("SVD did not return right singular vectors".into()))?;
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let null: Vec<usize> = (0..sv.len()).filter(|&k| sv[k] < 1e-10 * smax).collect();
    if null.len() >= 2 {
        return Err(Error::NonUniqueSteadyState);
    }
    let k = (0..sv.len()).min_by(|&i, &j| sv[i].total_cmp(&sv[j])).unwrap();
    let v: Vec<C64> = vt.row(k).iter().map(|z| z.conj()).collect();
    finish(l, unvectorize(&v, d), SteadyMethod::Dense, 0, opts)
}
