//! Multipartite entanglement witness built from the quantum Fisher
//! information matrix and local covariances.
//!
//! For a separable state `F_Q[ρ, A] ≤ 4 Σ_j Var(A_j)` for every sum of local
//! observables `A = Σ_j A_j`. With `A_j = c_j·𝐀_j` over fixed operator families
//! both sides are quadratic forms in `c`, and the most violating direction is
//! the top eigenvector of `Q − 4Γ`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::hilbert::{fock_lowering, qubit_lowering, DensityMatrix, Subsystem};
use crate::linalg::eigh;
use crate::{Error, Result, C64};

/// A density matrix on a subset of the subsystems, kept in canonical order
/// (atom, photon, phonon, magnon).
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState {
    subsystems: Vec<Subsystem>,
    dims: Vec<usize>,
    matrix: DMatrix<C64>,
}

impl ReducedState {
    pub fn new(subsystems: Vec<Subsystem>, dims: Vec<usize>, matrix: DMatrix<C64>) -> Result<Self> {
        if subsystems.is_empty() || subsystems.len() != dims.len() {
            return Err(Error::InvalidArgument("one dimension per subsystem required".into()));
        }
        if subsystems.windows(2).any(|w| w[0].position() >= w[1].position()) {
            return Err(Error::InvalidArgument("subsystems must be distinct and in canonical order".into()));
        }
        let d: usize = dims.iter().product();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::InvalidArgument(format!("matrix is {}x{}, expected {d}x{d}", matrix.nrows(), matrix.ncols())));
        }
        Ok(Self { subsystems, dims, matrix })
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn slot(&self, s: Subsystem) -> Result<usize> {
        self.subsystems.iter().position(|&x| x == s).ok_or_else(|| Error::InvalidArgument(format!("{s:?} is not part of the reduced state")))
    }

    /// Local operator acting on subsystem `s`, tensored with identities.
    pub fn embed(&self, s: Subsystem, local: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        let k = self.slot(s)?;
        if local.nrows() != self.dims[k] || local.ncols() != self.dims[k] {
            return Err(Error::InvalidArgument(format!("{s:?} operator must be {0}x{0}", self.dims[k])));
        }
        let mut out = DMatrix::<C64>::identity(1, 1);
        for (j, &dj) in self.dims.iter().enumerate() {
            out = if j == k { out.kronecker(local) } else { out.kronecker(&DMatrix::identity(dj, dj)) };
        }
        Ok(out)
    }

    pub fn expect(&self, op: &DMatrix<C64>) -> C64 {
        (op * &self.matrix).trace()
    }

    /// Further trace keeping `keep` (which must be a subset).
    pub fn partial_trace(&self, keep: &[Subsystem]) -> Result<ReducedState> {
        let mut mask = vec![false; self.subsystems.len()];
        for &s in keep {
            mask[self.slot(s)?] = true;
        }
        trace_out(&self.subsystems, &self.dims, &self.matrix, &mask)
    }
}

fn trace_out(subsystems: &[Subsystem], dims: &[usize], m: &DMatrix<C64>, keep: &[bool]) -> Result<ReducedState> {
    let kept: Vec<usize> = (0..dims.len()).filter(|&j| keep[j]).collect();
    if kept.is_empty() {
        return Err(Error::InvalidArgument("partial trace must keep at least one subsystem".into()));
    }
    let dk: usize = kept.iter().map(|&j| dims[j]).product();
    let d = m.nrows();
    // Split every full index into (kept index, traced index).
    let split: Vec<(usize, usize)> = (0..d)
        .map(|mut i| {
            let mut digits = vec![0; dims.len()];
            for j in (0..dims.len()).rev() {
                digits[j] = i % dims[j];
                i /= dims[j];
            }
            let (mut ik, mut it) = (0, 0);
            for j in 0..dims.len() {
                if keep[j] {
                    ik = ik * dims[j] + digits[j];
                } else {
                    it = it * dims[j] + digits[j];
                }
            }
            (ik, it)
        })
        .collect();
    let mut out = DMatrix::zeros(dk, dk);
    for c in 0..d {
        let (ck, ct) = split[c];
        for r in 0..d {
            let (rk, rt) = split[r];
            if rt == ct {
                out[(rk, ck)] += m[(r, c)];
            }
        }
    }
    ReducedState::new(kept.iter().map(|&j| subsystems[j]).collect(), kept.iter().map(|&j| dims[j]).collect(), out)
}

/// Reduced density matrix of `rho` on `keep`.
pub fn partial_trace(rho: &DensityMatrix, keep: &[Subsystem]) -> Result<ReducedState> {
    let space = rho.space();
    let mask: Vec<bool> = Subsystem::ALL.iter().map(|s| keep.contains(s)).collect();
    trace_out(&Subsystem::ALL, &space.factor_dims(), rho.matrix(), &mask)
}

/// The local observable family 𝐀_j of one particle.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOperatorSet {
    particle: Subsystem,
    operators: Vec<DMatrix<C64>>,
}

impl LocalOperatorSet {
    pub fn new(particle: Subsystem, operators: Vec<DMatrix<C64>>) -> Result<Self> {
        if operators.is_empty() {
            return Err(Error::InvalidArgument("empty operator set".into()));
        }
        let d = operators[0].nrows();
        for o in &operators {
            if o.nrows() != d || o.ncols() != d {
                return Err(Error::InvalidArgument("operators in a set must share one square shape".into()));
            }
            if crate::hilbert::hermiticity_error(o) > 1e-12 {
                return Err(Error::InvalidArgument(format!("{particle:?} operator is not Hermitian")));
            }
        }
        Ok(Self { particle, operators })
    }

    /// (σx, σy, σz) for the atom; (x, p, x², p², (xp+px)/2) for a mode of local dimension `dim`.
    pub fn standard(particle: Subsystem, dim: usize) -> Result<Self> {
        let i = C64::new(0.0, 1.0);
        let ops = if particle == Subsystem::Atom {
            if dim != 2 {
                return Err(Error::InvalidArgument("atom has local dimension 2".into()));
            }
            let s = qubit_lowering().to_dense();
            let sd = s.adjoint();
            let sz = &sd * &s - &s * &sd;
            vec![&s + &sd, (&sd - &s) * -i, sz]
        } else {
            if dim < 2 {
                return Err(Error::InvalidArgument("mode needs local dimension >= 2".into()));
            }
            let o = fock_lowering(dim).to_dense();
            let od = o.adjoint();
            let x = &o + &od;
            let p = (&o - &od) * -i;
            let xp = (&x * &p + &p * &x) * C64::new(0.5, 0.0);
            let (x2, p2) = (&x * &x, &p * &p);
            vec![x, p, x2, p2, xp]
        };
        Self::new(particle, ops)
    }

    pub fn particle(&self) -> Subsystem {
        self.particle
    }

    pub fn operators(&self) -> &[DMatrix<C64>] {
        &self.operators
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    /// U A U† for every member.
    pub fn conjugated(&self, u: &DMatrix<C64>) -> Result<Self> {
        Self::new(self.particle, self.operators.iter().map(|a| u * a * u.adjoint()).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors, matching `eigenvalues`.
    pub eigenvectors: DMatrix<C64>,
    pub rank_tol: f64,
}

/// Eigenpairs of ρ with weight above `rank_tol`; small negative eigenvalues are clamped.
pub fn spectral_decompose(rho: &DMatrix<C64>, rank_tol: f64) -> Result<SpectralDecomposition> {
    let (vals, vecs) = eigh(rho);
    if let Some(&lo) = vals.first() {
        if lo < -1e-8 {
            return Err(Error::InvalidState(format!("density matrix has eigenvalue {lo:e}")));
        }
    }
    let keep: Vec<usize> = (0..vals.len()).rev().filter(|&k| vals[k] > rank_tol).collect();
    let mut v = DMatrix::zeros(rho.nrows(), keep.len());
    for (c, &k) in keep.iter().enumerate() {
        v.set_column(c, &vecs.column(k));
    }
    Ok(SpectralDecomposition { eigenvalues: keep.iter().map(|&k| vals[k].max(0.0)).collect(), eigenvectors: v, rank_tol })
}

fn embedded_family(state: &ReducedState, sets: &[LocalOperatorSet]) -> Result<Vec<DMatrix<C64>>> {
    let mut seen = Vec::new();
    let mut out = Vec::new();
    for s in sets {
        if seen.contains(&s.particle) {
            return Err(Error::InvalidArgument(format!("{:?} appears twice", s.particle)));
        }
        seen.push(s.particle);
        for a in &s.operators {
            out.push(state.embed(s.particle, a)?);
        }
    }
    Ok(out)
}

/// QFI matrix of the stacked operator family.
///
/// Pairs inside the retained spectrum use the weight 2(p−p')²/(p+p'); pairs
/// with one member in the kernel reduce to 4 p Re⟨ψ|A P⊥ A'|ψ⟩.
pub fn qfi_matrix(decomp: &SpectralDecomposition, state: &ReducedState, sets: &[LocalOperatorSet]) -> Result<DMatrix<f64>> {
    if decomp.eigenvectors.nrows() != state.dim() {
        return Err(Error::InvalidArgument("decomposition and state dimensions differ".into()));
    }
    let ops = embedded_family(state, sets)?;
    let v = &decomp.eigenvectors;
    let p = &decomp.eigenvalues;
    let r = p.len();
    let cs: Vec<DMatrix<C64>> = ops.iter().map(|a| a * v).collect();
    let bs: Vec<DMatrix<C64>> = cs.iter().map(|c| v.adjoint() * c).collect();
    let n = ops.len();
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for k in 0..r {
                for l in 0..r {
                    let s = p[k] + p[l];
                    if s < 1e-12 || k == l {
                        continue;
                    }
                    acc += 2.0 * (p[k] - p[l]).powi(2) / s * (bs[i][(k, l)] * bs[j][(l, k)]).re;
                }
                let full: C64 = cs[i].column(k).dotc(&cs[j].column(k));
                let inside: C64 = (0..r).map(|l| bs[i][(k, l)] * bs[j][(l, k)]).sum();
                acc += 4.0 * p[k] * (full - inside).re;
            }
            q[(i, j)] = acc;
            q[(j, i)] = acc;
        }
    }
    Ok(q)
}

fn covariance(state: &ReducedState, a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let sym = (a * b + b * a) * C64::new(0.5, 0.0);
    state.expect(&sym).re - state.expect(a).re * state.expect(b).re
}

/// Symmetrized covariances of the full stacked family, including cross-particle blocks.
fn full_covariance(state: &ReducedState, ops: &[DMatrix<C64>]) -> DMatrix<f64> {
    let n = ops.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let c = covariance(state, &ops[i], &ops[j]);
            g[(i, j)] = c;
            g[(j, i)] = c;
        }
    }
    g
}

fn block_ranges(sets: &[LocalOperatorSet]) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    sets.iter()
        .map(|s| {
            let r = start..start + s.len();
            start = r.end;
            r
        })
        .collect()
}

/// Block-diagonal covariance matrix: c·Γ·cᵀ = Σ_j Var(c_j·𝐀_j).
pub fn covariance_matrix(state: &ReducedState, sets: &[LocalOperatorSet]) -> Result<DMatrix<f64>> {
    let ops = embedded_family(state, sets)?;
    let full = full_covariance(state, &ops);
    Ok(block_diagonal(&full, &block_ranges(sets)))
}

fn block_diagonal(full: &DMatrix<f64>, blocks: &[std::ops::Range<usize>]) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(full.nrows(), full.ncols());
    for b in blocks {
        for i in b.clone() {
            for j in b.clone() {
                g[(i, j)] = full[(i, j)];
            }
        }
    }
    g
}

/// Top eigenpair of Q − 4Γ; the sign of `c` is fixed so its largest component is positive.
pub fn optimal_witness(q: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<(DVector<f64>, f64)> {
    if q.shape() != gamma.shape() || q.nrows() != q.ncols() || q.nrows() == 0 {
        return Err(Error::InvalidArgument("Q and Γ must be square and of equal size".into()));
    }
    let m = q - gamma * 4.0;
    let m = (&m + m.transpose()) * 0.5;
    let e = m.symmetric_eigen();
    let k = (0..e.eigenvalues.len()).fold(0, |best, i| if e.eigenvalues[i] > e.eigenvalues[best] { i } else { best });
    let mut c: DVector<f64> = e.eigenvectors.column(k).into_owned();
    let lead = c.iter().fold(0.0f64, |acc, &x| if x.abs() > acc.abs() { x } else { acc });
    if lead < 0.0 {
        c = -c;
    }
    Ok((c, e.eigenvalues[k]))
}

/// Separability bounds for a fixed coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounds {
    pub b1: f64,
    pub b2: f64,
    /// Only for three particles.
    pub b3: Option<f64>,
}

/// B₁ = 4 Σ Var(A_j); two particles: B₂ = 4 Var(A₁+A₂); three particles: B₂ is
/// the largest grouping of one pair plus the remaining single, B₃ = 4 Var(ΣA_j).
pub fn bounds(state: &ReducedState, sets: &[LocalOperatorSet], c: &DVector<f64>) -> Result<Bounds> {
    let ops = embedded_family(state, sets)?;
    if c.len() != ops.len() {
        return Err(Error::InvalidArgument(format!("{} coefficients for {} operators", c.len(), ops.len())));
    }
    let full = full_covariance(state, &ops);
    let blocks = block_ranges(sets);
    let form = |groups: &[Vec<usize>]| {
        let ranges: Vec<Vec<usize>> = groups.iter().map(|g| g.iter().flat_map(|&j| blocks[j].clone()).collect()).collect();
        let mut acc = 0.0;
        for r in &ranges {
            for &i in r {
                for &j in r {
                    acc += c[i] * full[(i, j)] * c[j];
                }
            }
        }
        4.0 * acc
    };
    let singles: Vec<Vec<usize>> = (0..sets.len()).map(|j| vec![j]).collect();
    let b1 = form(&singles);
    match sets.len() {
        1 => Ok(Bounds { b1, b2: b1, b3: None }),
        2 => Ok(Bounds { b1, b2: form(&[vec![0, 1]]), b3: None }),
        3 => {
            let b2 = [form(&[vec![0, 1], vec![2]]), form(&[vec![0, 2], vec![1]]), form(&[vec![1, 2], vec![0]])].into_iter().fold(f64::NEG_INFINITY, f64::max);
            Ok(Bounds { b1, b2, b3: Some(form(&[vec![0, 1, 2]])) })
        }
        n => Err(Error::InvalidArgument(format!("bounds are defined for up to three particles, got {n}"))),
    }
}

/// Which particles enter the witness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Ab,
    Am,
    AbSigma,
    AmSigma,
}

impl Partition {
    pub const ALL: [Partition; 4] = [Partition::Ab, Partition::AbSigma, Partition::Am, Partition::AmSigma];

    /// Particles in report order: photon, partner mode, then the atom.
    pub fn particles(self) -> Vec<Subsystem> {
        match self {
            Partition::Ab => vec![Subsystem::Photon, Subsystem::Phonon],
            Partition::Am => vec![Subsystem::Photon, Subsystem::Magnon],
            Partition::AbSigma => vec![Subsystem::Photon, Subsystem::Phonon, Subsystem::Atom],
            Partition::AmSigma => vec![Subsystem::Photon, Subsystem::Magnon, Subsystem::Atom],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Ab => "ab",
            Partition::Am => "am",
            Partition::AbSigma => "ab_sigma",
            Partition::AmSigma => "am_sigma",
        }
    }
}

impl std::str::FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ab" => Ok(Partition::Ab),
            "am" => Ok(Partition::Am),
            "ab_sigma" | "abσ" | "absigma" => Ok(Partition::AbSigma),
            "am_sigma" | "amσ" | "amsigma" => Ok(Partition::AmSigma),
            other => Err(Error::UnknownPartition(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessReport {
    pub particles: Vec<Subsystem>,
    /// Row-major.
    pub qfi_matrix: Vec<Vec<f64>>,
    pub covariance_matrix: Vec<Vec<f64>>,
    /// Unit vector.
    pub coefficients: Vec<f64>,
    pub fisher: f64,
    pub b1: f64,
    pub b2: Option<f64>,
    pub b3: Option<f64>,
    pub w1: f64,
    pub w2: Option<f64>,
    pub d1: f64,
    pub d2: Option<f64>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Witness for an explicit reduced state and operator families (one per particle).
pub fn witness_for(state: &ReducedState, sets: &[LocalOperatorSet]) -> Result<WitnessReport> {
    let decomp = spectral_decompose(state.matrix(), 1e-10)?;
    let q = qfi_matrix(&decomp, state, sets)?;
    let g = covariance_matrix(state, sets)?;
    let (c, _) = optimal_witness(&q, &g)?;
    let fisher = (c.transpose() * &q * &c)[(0, 0)].max(0.0);
    let b = bounds(state, sets, &c)?;
    let multi = sets.len() > 1;
    let w1 = fisher - b.b1;
    let w2 = multi.then_some(fisher - b.b2);
    Ok(WitnessReport {
        particles: sets.iter().map(|s| s.particle).collect(),
        qfi_matrix: rows(&q),
        covariance_matrix: rows(&g),
        coefficients: c.iter().copied().collect(),
        fisher,
        b1: b.b1,
        b2: multi.then_some(b.b2),
        b3: b.b3,
        w1,
        w2,
        d1: w1.max(0.0),
        d2: w2.map(|w| w.max(0.0)),
    })
}

/// Traces ρ down to the partition and evaluates the witness with the standard families.
pub fn witness_report(rho: &DensityMatrix, partition: Partition) -> Result<WitnessReport> {
    let particles = partition.particles();
    let state = partial_trace(rho, &particles)?;
    let sets = particles
        .iter()
        .map(|&s| LocalOperatorSet::standard(s, rho.space().factor_dim(s)))
        .collect::<Result<Vec<_>>>()?;
    witness_for(&state, &sets)
}
