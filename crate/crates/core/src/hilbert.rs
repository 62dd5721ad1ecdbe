//! Truncated tensor-product space atom ⊗ photon ⊗ phonon ⊗ magnon.
//!
//! Basis ordering is fixed: the atom is the outermost factor and the magnon
//! the innermost, so
//!
//! ```text
//! index = ((s·(Na+1) + na)·(Nb+1) + nb)·(Nm+1) + nm,   s = 0 (g) or 1 (e)
//! ```
//!
//! where `Na`, `Nb`, `Nm` are the inclusive Fock cutoffs.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::sparse::CsrMatrix;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subsystem {
    Atom,
    Photon,
    Phonon,
    Magnon,
}

impl Subsystem {
    pub const ALL: [Subsystem; 4] = [Self::Atom, Self::Photon, Self::Phonon, Self::Magnon];

    /// Position of the factor in the tensor product.
    pub fn position(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Photon,
    Phonon,
    Magnon,
}

impl Mode {
    pub fn subsystem(self) -> Subsystem {
        match self {
            Mode::Photon => Subsystem::Photon,
            Mode::Phonon => Subsystem::Phonon,
            Mode::Magnon => Subsystem::Magnon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomLevel {
    Ground,
    Excited,
}

/// Quantum numbers of one product-basis vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisLabel {
    pub atom: AtomLevel,
    pub na: usize,
    pub nb: usize,
    pub nm: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct SpaceDescriptor {
    photon_cutoff: usize,
    phonon_cutoff: usize,
    magnon_cutoff: usize,
}

pub fn build_space(photon_cutoff: usize, phonon_cutoff: usize, magnon_cutoff: usize) -> Result<SpaceDescriptor> {
    SpaceDescriptor::new(photon_cutoff, phonon_cutoff, magnon_cutoff)
}

impl SpaceDescriptor {
    pub fn new(photon_cutoff: usize, phonon_cutoff: usize, magnon_cutoff: usize) -> Result<Self> {
        if photon_cutoff == 0 || phonon_cutoff == 0 || magnon_cutoff == 0 {
            return Err(Error::InvalidArgument(format!(
                "cutoffs must be >= 1, got ({photon_cutoff}, {phonon_cutoff}, {magnon_cutoff})"
            )));
        }
        Ok(Self { photon_cutoff, phonon_cutoff, magnon_cutoff })
    }

    pub fn photon_cutoff(&self) -> usize {
        self.photon_cutoff
    }

    pub fn phonon_cutoff(&self) -> usize {
        self.phonon_cutoff
    }

    pub fn magnon_cutoff(&self) -> usize {
        self.magnon_cutoff
    }

    pub fn cutoff(&self, mode: Mode) -> usize {
        match mode {
            Mode::Photon => self.photon_cutoff,
            Mode::Phonon => self.phonon_cutoff,
            Mode::Magnon => self.magnon_cutoff,
        }
    }

    /// Every cutoff raised by one.
    pub fn enlarged(&self) -> Self {
        Self {
            photon_cutoff: self.photon_cutoff + 1,
            phonon_cutoff: self.phonon_cutoff + 1,
            magnon_cutoff: self.magnon_cutoff + 1,
        }
    }

    pub fn factor_dim(&self, s: Subsystem) -> usize {
        match s {
            Subsystem::Atom => 2,
            Subsystem::Photon => self.photon_cutoff + 1,
            Subsystem::Phonon => self.phonon_cutoff + 1,
            Subsystem::Magnon => self.magnon_cutoff + 1,
        }
    }

    pub fn factor_dims(&self) -> [usize; 4] {
        Subsystem::ALL.map(|s| self.factor_dim(s))
    }

    pub fn dim(&self) -> usize {
        self.factor_dims().iter().product()
    }

    pub fn index(&self, label: BasisLabel) -> Result<usize> {
        let [_, da, db, dm] = self.factor_dims();
        if label.na >= da || label.nb >= db || label.nm >= dm {
            return Err(Error::InvalidArgument(format!("{label:?} exceeds the cutoffs of {self:?}")));
        }
        let s = match label.atom {
            AtomLevel::Ground => 0,
            AtomLevel::Excited => 1,
        };
        Ok(((s * da + label.na) * db + label.nb) * dm + label.nm)
    }

    pub fn label(&self, index: usize) -> Result<BasisLabel> {
        if index >= self.dim() {
            return Err(Error::InvalidArgument(format!("index {index} >= dimension {}", self.dim())));
        }
        let [_, da, db, dm] = self.factor_dims();
        let nm = index % dm;
        let rest = index / dm;
        let nb = rest % db;
        let rest = rest / db;
        let na = rest % da;
        let atom = if rest / da == 0 { AtomLevel::Ground } else { AtomLevel::Excited };
        Ok(BasisLabel { atom, na, nb, nm })
    }

    /// Embeds a single-factor matrix as `1 ⊗ … ⊗ local ⊗ … ⊗ 1`.
    pub fn embed(&self, which: Subsystem, local: &CsrMatrix) -> Operator {
        let mut m = CsrMatrix::identity(1);
        for s in Subsystem::ALL {
            let f = if s == which { local.clone() } else { CsrMatrix::identity(self.factor_dim(s)) };
            m = m.kron(&f);
        }
        Operator { space: *self, matrix: m }
    }
}

/// Lowering matrix on a Fock factor of dimension `dim`.
pub fn fock_lowering(dim: usize) -> CsrMatrix {
    CsrMatrix::from_triplets(dim, dim, (1..dim).map(|n| (n - 1, n, C64::new((n as f64).sqrt(), 0.0))))
}

/// `|g⟩⟨e|` with `g` at index 0.
pub fn qubit_lowering() -> CsrMatrix {
    CsrMatrix::from_triplets(2, 2, [(0, 1, C64::new(1.0, 0.0))])
}

/// An operator on the full truncated space, stored sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    space: SpaceDescriptor,
    matrix: CsrMatrix,
}

pub fn mode_annihilator(space: &SpaceDescriptor, which: Mode) -> Operator {
    space.embed(which.subsystem(), &fock_lowering(space.cutoff(which) + 1))
}

pub fn atom_lowering(space: &SpaceDescriptor) -> Operator {
    space.embed(Subsystem::Atom, &qubit_lowering())
}

impl Operator {
    pub fn new(space: SpaceDescriptor, matrix: CsrMatrix) -> Result<Self> {
        let d = space.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::InvalidArgument(format!(
                "matrix is {}x{}, space dimension is {d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { space, matrix })
    }

    pub fn from_dense(space: SpaceDescriptor, m: &DMatrix<C64>) -> Result<Self> {
        Self::new(space, CsrMatrix::from_dense(m, 0.0))
    }

    pub fn identity(space: &SpaceDescriptor) -> Self {
        Self { space: *space, matrix: CsrMatrix::identity(space.dim()) }
    }

    pub fn zero(space: &SpaceDescriptor) -> Self {
        Self { space: *space, matrix: CsrMatrix::zeros(space.dim(), space.dim()) }
    }

    pub fn space(&self) -> &SpaceDescriptor {
        &self.space
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        self.matrix.to_dense()
    }

    pub fn dag(&self) -> Self {
        Self { space: self.space, matrix: self.matrix.adjoint() }
    }

    pub fn element(&self, bra: BasisLabel, ket: BasisLabel) -> Result<C64> {
        Ok(self.matrix.get(self.space.index(bra)?, self.space.index(ket)?))
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    /// Max-entry distance to the adjoint.
    pub fn hermiticity_error(&self) -> f64 {
        self.matrix.sub(&self.matrix.adjoint()).max_abs()
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.space != self.space {
            return Err(Error::SpaceMismatch);
        }
        Ok(StateVector { space: self.space, amplitudes: self.matrix.mul_vec(&psi.amplitudes) })
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { space: self.space, matrix: self.matrix.scale(s) }
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator space mismatch");
        Operator { space: self.space, matrix: self.matrix.add(&rhs.matrix) }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator space mismatch");
        Operator { space: self.space, matrix: self.matrix.sub(&rhs.matrix) }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator space mismatch");
        Operator { space: self.space, matrix: self.matrix.matmul(&rhs.matrix) }
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, s: f64) -> Operator {
        self.scale(C64::new(s, 0.0))
    }
}

impl Mul<C64> for &Operator {
    type Output = Operator;
    fn mul(self, s: C64) -> Operator {
        self.scale(s)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale(C64::new(-1.0, 0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    space: SpaceDescriptor,
    amplitudes: DVector<C64>,
}

impl StateVector {
    pub fn new(space: SpaceDescriptor, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::InvalidArgument(format!(
                "{} amplitudes for dimension {}",
                amplitudes.len(),
                space.dim()
            )));
        }
        Ok(Self { space, amplitudes })
    }

    pub fn basis(space: &SpaceDescriptor, label: BasisLabel) -> Result<Self> {
        let mut v = DVector::zeros(space.dim());
        v[space.index(label)?] = C64::new(1.0, 0.0);
        Ok(Self { space: *space, amplitudes: v })
    }

    pub fn space(&self) -> &SpaceDescriptor {
        &self.space
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> DVector<C64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidState(format!("cannot normalize a vector of norm {n}")));
        }
        Ok(Self { space: self.space, amplitudes: self.amplitudes.unscale(n) })
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix { space: self.space, matrix: &self.amplitudes * self.amplitudes.adjoint() }
    }

    pub fn inner(&self, other: &Self) -> Result<C64> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch);
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    space: SpaceDescriptor,
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    /// Wraps a matrix without checking physicality; see [`DensityMatrix::validate`].
    pub fn new(space: SpaceDescriptor, matrix: DMatrix<C64>) -> Result<Self> {
        let d = space.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::InvalidArgument(format!(
                "matrix is {}x{}, space dimension is {d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { space, matrix })
    }

    pub fn maximally_mixed(space: &SpaceDescriptor) -> Self {
        let d = space.dim();
        Self { space: *space, matrix: DMatrix::identity(d, d).unscale(d as f64) }
    }

    pub fn space(&self) -> &SpaceDescriptor {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix)
    }

    /// Checks Hermiticity and unit trace to 1e-10 and eigenvalues ≥ −1e-8.
    pub fn validate(&self) -> Result<()> {
        let h = self.hermiticity_error();
        if h > 1e-10 {
            return Err(Error::InvalidState(format!("not Hermitian (error {h:e})")));
        }
        let t = self.trace();
        if (t - C64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::InvalidState(format!("trace {t} differs from 1")));
        }
        let e = self.min_eigenvalue();
        if e < -1e-8 {
            return Err(Error::InvalidState(format!("negative eigenvalue {e:e}")));
        }
        Ok(())
    }

    /// Trace distance ½‖ρ − σ‖₁.
    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch);
        }
        let diff = hermitian_part(&(&self.matrix - &other.matrix));
        Ok(0.5 * diff.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>())
    }
}

pub(crate) fn hermitian_part(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()).scale(0.5)
}

pub(crate) fn hermiticity_error(m: &DMatrix<C64>) -> f64 {
    let mut e: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            e = e.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    e
}

pub(crate) fn min_eigenvalue(m: &DMatrix<C64>) -> f64 {
    hermitian_part(m).symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Anything an expectation value can be taken in.
pub trait QuantumState {
    fn space(&self) -> &SpaceDescriptor;
    fn expect(&self, op: &Operator) -> Result<C64>;
}

impl QuantumState for StateVector {
    fn space(&self) -> &SpaceDescriptor {
        &self.space
    }

    fn expect(&self, op: &Operator) -> Result<C64> {
        if op.space != self.space {
            return Err(Error::SpaceMismatch);
        }
        Ok(self.amplitudes.dotc(&op.matrix.mul_vec(&self.amplitudes)))
    }
}

impl QuantumState for DensityMatrix {
    fn space(&self) -> &SpaceDescriptor {
        &self.space
    }

    fn expect(&self, op: &Operator) -> Result<C64> {
        if op.space != self.space {
            return Err(Error::SpaceMismatch);
        }
        Ok(trace_product(&op.matrix, &self.matrix))
    }
}

/// `Tr(op · ρ)` without forming the product.
pub(crate) fn trace_product(op: &CsrMatrix, rho: &DMatrix<C64>) -> C64 {
    op.triplets().map(|(r, c, v)| v * rho[(c, r)]).sum()
}

pub fn expectation<S: QuantumState>(state: &S, op: &Operator) -> Result<C64> {
    state.expect(op)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lab(atom: AtomLevel, na: usize, nb: usize, nm: usize) -> BasisLabel {
        BasisLabel { atom, na, nb, nm }
    }

    #[test]
    fn dimensions() {
        assert_eq!(build_space(1, 1, 1).unwrap().dim(), 16);
        assert_eq!(build_space(3, 2, 2).unwrap().dim(), 72);
        assert!(matches!(build_space(0, 1, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn basis_bijection() {
        let s = build_space(3, 2, 4).unwrap();
        for i in 0..s.dim() {
            assert_eq!(s.index(s.label(i).unwrap()).unwrap(), i);
        }
        assert_eq!(s.index(lab(AtomLevel::Excited, 0, 0, 0)).unwrap(), 4 * 3 * 5);
        assert_eq!(s.index(lab(AtomLevel::Ground, 0, 0, 1)).unwrap(), 1);
    }

    #[test]
    fn photon_lowering_elements() {
        let s = build_space(1, 1, 1).unwrap();
        let a = mode_annihilator(&s, Mode::Photon);
        for atom in [AtomLevel::Ground, AtomLevel::Excited] {
            for nb in 0..2 {
                for nm in 0..2 {
                    let v = a.element(lab(atom, 0, nb, nm), lab(atom, 1, nb, nm)).unwrap();
                    assert_eq!(v, C64::new(1.0, 0.0));
                }
            }
        }
        let vac = StateVector::basis(&s, lab(AtomLevel::Ground, 0, 0, 0)).unwrap();
        assert_eq!(a.apply(&vac).unwrap().norm(), 0.0);
    }

    #[test]
    fn canonical_commutator_below_cutoff() {
        let s = build_space(3, 2, 2).unwrap();
        for mode in [Mode::Photon, Mode::Phonon, Mode::Magnon] {
            let a = mode_annihilator(&s, mode);
            let c = a.commutator(&a.dag());
            let n = s.cutoff(mode);
            for i in 0..s.dim() {
                let l = s.label(i).unwrap();
                let occ = match mode {
                    Mode::Photon => l.na,
                    Mode::Phonon => l.nb,
                    Mode::Magnon => l.nm,
                };
                let want = if occ < n { 1.0 } else { -(n as f64) };
                assert!((c.matrix().get(i, i) - C64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn atom_algebra() {
        let s = build_space(1, 1, 1).unwrap();
        let sm = atom_lowering(&s);
        let e = StateVector::basis(&s, lab(AtomLevel::Excited, 0, 0, 0)).unwrap();
        let g = StateVector::basis(&s, lab(AtomLevel::Ground, 0, 0, 0)).unwrap();
        assert_eq!(sm.apply(&e).unwrap(), g);
        assert_eq!((&sm * &sm).matrix().nnz(), 0);
        let comp = &(&sm.dag() * &sm) + &(&sm * &sm.dag());
        assert_eq!(comp, Operator::identity(&s));
    }

    #[test]
    fn number_operators_commute_and_adjoint_round_trips() {
        let s = build_space(2, 2, 2).unwrap();
        let ns: Vec<Operator> = [Mode::Photon, Mode::Phonon, Mode::Magnon]
            .iter()
            .map(|&m| {
                let o = mode_annihilator(&s, m);
                &o.dag() * &o
            })
            .chain(std::iter::once({
                let sm = atom_lowering(&s);
                &sm.dag() * &sm
            }))
            .collect();
        for x in &ns {
            assert_eq!(x.dag().dag(), *x);
            for y in &ns {
                assert!(x.commutator(y).matrix().max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn expectations() {
        let s = build_space(1, 1, 1).unwrap();
        let a = mode_annihilator(&s, Mode::Photon);
        let n = &a.dag() * &a;
        let vac = StateVector::basis(&s, lab(AtomLevel::Ground, 0, 0, 0)).unwrap();
        let one = StateVector::basis(&s, lab(AtomLevel::Ground, 1, 0, 0)).unwrap();
        assert_eq!(expectation(&vac, &n).unwrap(), C64::new(0.0, 0.0));
        assert_eq!(expectation(&one, &n).unwrap(), C64::new(1.0, 0.0));
        let mixed = DensityMatrix::new(
            s,
            (vac.to_density().into_matrix() + StateVector::basis(&s, lab(AtomLevel::Excited, 0, 0, 0)).unwrap().to_density().into_matrix())
                .unscale(2.0),
        )
        .unwrap();
        let sm = atom_lowering(&s);
        let pe = expectation(&mixed, &(&sm.dag() * &sm)).unwrap();
        assert!((pe.re - 0.5).abs() < 1e-15);
        let other = build_space(2, 1, 1).unwrap();
        assert_eq!(expectation(&vac, &Operator::identity(&other)), Err(Error::SpaceMismatch));
    }
}
