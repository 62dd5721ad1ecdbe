//! Lindblad generator, steady states and time evolution.
//!
//! Density matrices are vectorized by stacking columns, `vec(ρ)[j·d + i] = ρ[i, j]`,
//! so that `vec(AXB) = (Bᵀ ⊗ A) vec(X)`. The generator is
//!
//! ```text
//! L = I ⊗ K + K̄ ⊗ I + Σ_r c̄_r ⊗ c_r,    K = −iH − ½ Σ_r c_r† c_r
//! ```
//!
//! with every collapse operator `c_r` already carrying the square root of its rate.

mod evolve;
mod steady;

pub use evolve::{evolve_closed, evolve_open, evolve_open_with, propagate_operator, EvolutionRecord, OpenOptions};
pub use steady::{steady_state, steady_state_with, SteadyMethod, SteadyOptions, SteadyReport};

use nalgebra::DMatrix;

use crate::hilbert::{Operator, SpaceDescriptor};
use crate::model::{build_hamiltonian_with, ModelParams, SystemOperators};
use crate::sparse::CsrMatrix;
use crate::{Error, Result, C64};

#[derive(Debug, Clone)]
pub struct Liouvillian {
    space: SpaceDescriptor,
    hamiltonian: Operator,
    collapse: Vec<(Operator, f64)>,
    generator: CsrMatrix,
    k: CsrMatrix,
    k_adj: CsrMatrix,
    /// `(√r c, √r c†)` for every channel with a nonzero rate.
    jumps: Vec<(CsrMatrix, CsrMatrix)>,
}

pub fn build_liouvillian(h: &Operator, collapse: &[(Operator, f64)]) -> Result<Liouvillian> {
    let space = *h.space();
    if h.hermiticity_error() > 1e-12 {
        return Err(Error::InvalidArgument("Hamiltonian is not Hermitian".into()));
    }
    for (c, r) in collapse {
        if c.space() != &space {
            return Err(Error::SpaceMismatch);
        }
        if !(*r >= 0.0) || !r.is_finite() {
            return Err(Error::InvalidArgument(format!("collapse rate must be finite and >= 0, got {r}")));
        }
    }
    let d = space.dim();
    let i = C64::new(0.0, 1.0);
    let mut k = h.matrix().scale(-i);
    let mut jumps = Vec::new();
    for (c, r) in collapse.iter().filter(|(_, r)| *r > 0.0) {
        let sc = c.matrix().scale(C64::new(r.sqrt(), 0.0));
        let scd = sc.adjoint();
        k = k.add(&scd.matmul(&sc).scale(C64::new(-0.5, 0.0)));
        jumps.push((sc, scd));
    }
    let id = CsrMatrix::identity(d);
    let mut generator = id.kron(&k).add(&k.conj().kron(&id));
    for (sc, _) in &jumps {
        generator = generator.add(&sc.conj().kron(sc));
    }
    let k_adj = k.adjoint();
    Ok(Liouvillian { space, hamiltonian: h.clone(), collapse: collapse.to_vec(), generator, k, k_adj, jumps })
}

/// Collapse channels √κ_a a, √κ_b b, √κ_m m and √γ σ, in that order.
pub fn model_collapse(p: &ModelParams, ops: &SystemOperators) -> Vec<(Operator, f64)> {
    vec![(ops.a.clone(), p.kappa_a), (ops.b.clone(), p.kappa_b), (ops.m.clone(), p.kappa_m), (ops.sigma.clone(), p.gamma)]
}

/// Generator of the full model on `space`.
pub fn model_liouvillian(p: &ModelParams, space: &SpaceDescriptor) -> Result<Liouvillian> {
    p.validate()?;
    let ops = SystemOperators::new(space);
    build_liouvillian(&build_hamiltonian_with(p, &ops), &model_collapse(p, &ops))
}

impl Liouvillian {
    pub fn space(&self) -> &SpaceDescriptor {
        &self.space
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn collapse(&self) -> &[(Operator, f64)] {
        &self.collapse
    }

    /// The d²×d² superoperator acting on column-stacked density matrices.
    pub fn generator(&self) -> &CsrMatrix {
        &self.generator
    }

    /// Effective non-Hermitian generator K = −iH − ½ Σ c†c.
    pub(crate) fn k(&self) -> &CsrMatrix {
        &self.k
    }

    pub(crate) fn jumps(&self) -> &[(CsrMatrix, CsrMatrix)] {
        &self.jumps
    }

    /// L(X) evaluated in matrix form.
    pub fn apply(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = self.k.mul_dense(x);
        out += self.k_adj.dense_mul(x);
        out += self.jump_part(x);
        out
    }

    /// Σ c X c†.
    pub(crate) fn jump_part(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for (c, cd) in &self.jumps {
            out += cd.dense_mul(&c.mul_dense(x));
        }
        out
    }

    /// Frobenius norm of L(ρ).
    pub fn residual(&self, rho: &DMatrix<C64>) -> f64 {
        self.apply(rho).norm()
    }

    /// Dense copy of the generator.
    pub fn to_dense(&self) -> DMatrix<C64> {
        self.generator.to_dense()
    }
}

pub(crate) fn vectorize(m: &DMatrix<C64>) -> Vec<C64> {
    m.as_slice().to_vec()
}

pub(crate) fn unvectorize(v: &[C64], d: usize) -> DMatrix<C64> {
    DMatrix::from_column_slice(d, d, v)
}
