//! Steady-state intensity correlations of photon–phonon and photon–magnon
//! pairs, delayed bundle correlations via quantum regression, and detuning
//! sweeps of the mode occupations.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hilbert::{trace_product, DensityMatrix, Mode, Operator, SpaceDescriptor};
use crate::liouvillian::{model_liouvillian, propagate_operator, steady_state, Liouvillian, OpenOptions};
use crate::model::{DriveSide, ModelParams, SystemOperators};
use crate::{Error, Result, C64};

/// Photon paired with the phonon (`Ab`) or with the magnon (`Am`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pair {
    Ab,
    Am,
}

impl Pair {
    pub fn partner(self) -> Mode {
        match self {
            Pair::Ab => Mode::Phonon,
            Pair::Am => Mode::Magnon,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pair::Ab => "ab",
            Pair::Am => "am",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    CrossZeroDelay,
    BundleZeroDelay,
    BundleDelayed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub kind: CorrelationKind,
    pub pair: Pair,
    /// Empty for zero-delay results.
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    pub params: Option<ModelParams>,
}

fn expect_real(rho: &DensityMatrix, op: &Operator) -> Result<f64> {
    if rho.space() != op.space() {
        return Err(Error::SpaceMismatch);
    }
    Ok(trace_product(op.matrix(), rho.matrix()).re)
}

/// g₁⁽²⁾(0) = ⟨a†a o†o⟩ / (⟨a†a⟩⟨o†o⟩).
pub fn cross_g2_zero(rho: &DensityMatrix, pair: Pair) -> Result<f64> {
    let ops = SystemOperators::new(rho.space());
    let na = ops.number(Mode::Photon);
    let no = ops.number(pair.partner());
    let (xa, xo) = (expect_real(rho, &na)?, expect_real(rho, &no)?);
    if xa <= 1e-12 || xo <= 1e-12 {
        return Err(Error::UndefinedCorrelation(format!("{} occupations ({xa:e}, {xo:e}) vanish", pair.as_str())));
    }
    Ok(expect_real(rho, &(&na * &no))? / (xa * xo))
}

/// Bundle operator O = a·o.
pub fn bundle_operator(space: &SpaceDescriptor, pair: Pair) -> Operator {
    let ops = SystemOperators::new(space);
    &ops.a * ops.mode(pair.partner())
}

/// g₂⁽²⁾(0) = ⟨O†² O²⟩ / ⟨O†O⟩² with O = a·o.
pub fn bundle_g2_zero(rho: &DensityMatrix, pair: Pair) -> Result<f64> {
    let o = bundle_operator(rho.space(), pair);
    operator_g2_zero(rho, &o).map_err(|e| match e {
        Error::UndefinedCorrelation(m) => Error::UndefinedCorrelation(format!("{} bundle: {m}", pair.as_str())),
        e => e,
    })
}

/// ⟨O†²O²⟩ / ⟨O†O⟩² for an arbitrary operator.
pub fn operator_g2_zero(rho: &DensityMatrix, o: &Operator) -> Result<f64> {
    let od = o.dag();
    let n = expect_real(rho, &(&od * o))?;
    if n <= 1e-14 {
        return Err(Error::UndefinedCorrelation(format!("⟨O†O⟩ = {n:e}")));
    }
    Ok(expect_real(rho, &(&(&od * &od) * &(o * o)))? / (n * n))
}

/// Tr[O†O e^{Lτ}(OρO†)] / ⟨O†O⟩² on a τ grid.
pub fn operator_g2_delayed(l: &Liouvillian, rho: &DensityMatrix, o: &Operator, taus: &[f64]) -> Result<Vec<f64>> {
    if rho.space() != l.space() || o.space() != l.space() {
        return Err(Error::SpaceMismatch);
    }
    let od = o.dag();
    let n_op = &od * o;
    let n = expect_real(rho, &n_op)?;
    if n <= 1e-14 {
        return Err(Error::UndefinedCorrelation(format!("⟨O†O⟩ = {n:e}")));
    }
    let x0: DMatrix<C64> = od.matrix().dense_mul(&o.matrix().mul_dense(rho.matrix()));
    let xs = propagate_operator(l, &x0, taus, &OpenOptions::default())?;
    Ok(xs.iter().map(|x| trace_product(n_op.matrix(), x).re / (n * n)).collect())
}

pub fn bundle_g2_delayed(l: &Liouvillian, rho: &DensityMatrix, pair: Pair, taus: &[f64]) -> Result<CorrelationResult> {
    let o = bundle_operator(l.space(), pair);
    let values = operator_g2_delayed(l, rho, &o, taus)?;
    Ok(CorrelationResult { kind: CorrelationKind::BundleDelayed, pair, taus: taus.to_vec(), values, params: None })
}

/// Linear τ grid over [0, span] with `points` samples; span defaults to 5/κ.
pub fn tau_grid(kappa: f64, span: Option<f64>, points: usize) -> Result<Vec<f64>> {
    let span = span.unwrap_or(5.0 / kappa);
    if !(span > 0.0) || !span.is_finite() || points < 2 {
        return Err(Error::InvalidArgument(format!("τ grid needs a positive span and >= 2 points (span {span}, points {points})")));
    }
    Ok((0..points).map(|k| span * k as f64 / (points - 1) as f64).collect())
}

/// Occupations and zero-delay correlations of both pairs in one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairStatistics {
    pub n_photon: f64,
    pub n_phonon: f64,
    pub n_magnon: f64,
    pub g1_ab: Option<f64>,
    pub g2_ab: Option<f64>,
    pub g1_am: Option<f64>,
    pub g2_am: Option<f64>,
}

impl PairStatistics {
    pub fn g1(&self, pair: Pair) -> Option<f64> {
        match pair {
            Pair::Ab => self.g1_ab,
            Pair::Am => self.g1_am,
        }
    }

    pub fn g2(&self, pair: Pair) -> Option<f64> {
        match pair {
            Pair::Ab => self.g2_ab,
            Pair::Am => self.g2_am,
        }
    }

    /// g₁ > 1 together with g₂ < 1: correlated pairs emitted one bundle at a time.
    pub fn antibunched_bundles(&self, pair: Pair) -> bool {
        matches!((self.g1(pair), self.g2(pair)), (Some(g1), Some(g2)) if g1 > 1.0 && g2 < 1.0)
    }
}

/// Undefined correlations are reported as `None`.
pub fn pair_statistics(rho: &DensityMatrix) -> Result<PairStatistics> {
    let ops = SystemOperators::new(rho.space());
    let opt = |r: Result<f64>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedCorrelation(_)) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(PairStatistics {
        n_photon: expect_real(rho, &ops.number(Mode::Photon))?,
        n_phonon: expect_real(rho, &ops.number(Mode::Phonon))?,
        n_magnon: expect_real(rho, &ops.number(Mode::Magnon))?,
        g1_ab: opt(cross_g2_zero(rho, Pair::Ab))?,
        g2_ab: opt(bundle_g2_zero(rho, Pair::Ab))?,
        g1_am: opt(cross_g2_zero(rho, Pair::Am))?,
        g2_am: opt(bundle_g2_zero(rho, Pair::Am))?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumRow {
    pub delta_ad: f64,
    /// ⟨a†a⟩, ⟨b†b⟩, ⟨m†m⟩; NaN when the point failed.
    pub photon: f64,
    pub phonon: f64,
    pub magnon: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumTable {
    pub side: DriveSide,
    pub rows: Vec<SpectrumRow>,
}

impl SpectrumTable {
    /// Detuning of the largest occupation of `mode` among completed points.
    pub fn peak(&self, mode: Mode) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.error.is_none())
            .max_by(|x, y| occupation(x, mode).total_cmp(&occupation(y, mode)))
            .map(|r| r.delta_ad)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

fn occupation(r: &SpectrumRow, mode: Mode) -> f64 {
    match mode {
        Mode::Photon => r.photon,
        Mode::Phonon => r.phonon,
        Mode::Magnon => r.magnon,
    }
}

/// Steady-state occupations across a Δ_ad grid; failed points keep their
/// error message and the sweep continues.
pub fn occupation_spectrum(template: &ModelParams, space: &SpaceDescriptor, grid: &[f64], side: DriveSide) -> Result<SpectrumTable> {
    if grid.is_empty() || grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("detuning grid must be nonempty and finite".into()));
    }
    template.validate()?;
    let ops = SystemOperators::new(space);
    let numbers = [ops.number(Mode::Photon), ops.number(Mode::Phonon), ops.number(Mode::Magnon)];
    let rows = grid
        .par_iter()
        .map(|&x| {
            let p = template.with_side(side).with_delta_ad(x);
            let solved = model_liouvillian(&p, space).and_then(|l| steady_state(&l));
            match solved {
                Ok(rho) => {
                    let occ: Vec<f64> = numbers.iter().map(|n| trace_product(n.matrix(), rho.matrix()).re).collect();
                    SpectrumRow { delta_ad: x, photon: occ[0], phonon: occ[1], magnon: occ[2], error: None }
                }
                Err(e) => SpectrumRow { delta_ad: x, photon: f64::NAN, phonon: f64::NAN, magnon: f64::NAN, error: Some(e.to_string()) },
            }
        })
        .collect();
    Ok(SpectrumTable { side, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{build_space, AtomLevel, BasisLabel, StateVector};
    use crate::liouvillian::build_liouvillian;
    use nalgebra::DVector;

    fn label(na: usize, nb: usize, nm: usize) -> BasisLabel {
        BasisLabel { atom: AtomLevel::Ground, na, nb, nm }
    }

    fn mixture(space: &SpaceDescriptor, parts: &[(f64, BasisLabel)]) -> DensityMatrix {
        let mut m = DMatrix::zeros(space.dim(), space.dim());
        for &(p, l) in parts {
            m += StateVector::basis(space, l).unwrap().to_density().into_matrix() * C64::new(p, 0.0);
        }
        DensityMatrix::new(*space, m).unwrap()
    }

    fn coherent(space: &SpaceDescriptor, alpha: f64, mu: f64) -> DensityMatrix {
        // Truncated product of coherent amplitudes on photon and magnon.
        let fock = |x: f64, n: usize| (0..=n).map(|k| x.powi(k as i32) / (1..=k).map(|j| (j as f64).sqrt()).product::<f64>()).collect::<Vec<_>>();
        let (ca, cm) = (fock(alpha, space.photon_cutoff()), fock(mu, space.magnon_cutoff()));
        let mut v = DVector::zeros(space.dim());
        for (na, a) in ca.iter().enumerate() {
            for (nm, m) in cm.iter().enumerate() {
                v[space.index(label(na, 0, nm)).unwrap()] = C64::new(a * m, 0.0);
            }
        }
        StateVector::new(*space, v).unwrap().normalized().unwrap().to_density()
    }

    #[test]
    fn weighted_pair_mixture() {
        let s = build_space(2, 1, 2).unwrap();
        let rho = mixture(&s, &[(0.9, label(0, 0, 0)), (0.1, label(1, 0, 1))]);
        assert!((cross_g2_zero(&rho, Pair::Am).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(bundle_g2_zero(&rho, Pair::Am).unwrap(), 0.0);
        assert!(matches!(cross_g2_zero(&rho, Pair::Ab), Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn weak_coherent_product_is_uncorrelated() {
        let s = build_space(6, 1, 6).unwrap();
        let rho = coherent(&s, 0.05, 0.04);
        assert!((cross_g2_zero(&rho, Pair::Am).unwrap() - 1.0).abs() < 1e-9);
        assert!((bundle_g2_zero(&rho, Pair::Am).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn thermal_mode_has_g2_of_two() {
        let s = build_space(20, 1, 1).unwrap();
        let ops = SystemOperators::new(&s);
        let (nth, kappa) = (0.3, 0.5);
        let h = &ops.number(Mode::Photon) * 1.0;
        let l = build_liouvillian(
            &h,
            &[(ops.a.clone(), kappa * (1.0 + nth)), (ops.a.dag(), kappa * nth), (ops.b.clone(), 1.0), (ops.m.clone(), 1.0), (ops.sigma.clone(), 1.0)],
        )
        .unwrap();
        let rho = steady_state(&l).unwrap();
        assert!((operator_g2_zero(&rho, &ops.a).unwrap() - 2.0).abs() < 1e-8);
        let taus = [0.0, 2.0, 40.0];
        let g = operator_g2_delayed(&l, &rho, &ops.a, &taus).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8);
        assert!((g[1] - (1.0 + (-kappa * 2.0f64).exp())).abs() < 1e-6);
        assert!((g[2] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cross_correlation_is_symmetric() {
        let s = build_space(2, 2, 1).unwrap();
        let rho = mixture(&s, &[(0.5, label(0, 0, 0)), (0.3, label(1, 1, 0)), (0.2, label(2, 1, 0))]);
        let ops = SystemOperators::new(&s);
        let (na, nb) = (ops.number(Mode::Photon), ops.number(Mode::Phonon));
        let ab = expect_real(&rho, &(&na * &nb)).unwrap();
        let ba = expect_real(&rho, &(&nb * &na)).unwrap();
        assert!((ab - ba).abs() < 1e-15);
        assert!(cross_g2_zero(&rho, Pair::Ab).unwrap() > 1.0);
    }

    #[test]
    fn decoupled_modes_stay_empty() {
        let s = build_space(1, 1, 1).unwrap();
        let mut p = ModelParams::reference().with_kappa(0.05);
        p.lambda_ab = 0.0;
        p.lambda_am = 0.0;
        let t = occupation_spectrum(&p, &s, &[1.2, 1.3, 1.4], DriveSide::Left).unwrap();
        assert_eq!(t.failures(), 0);
        assert!(t.rows.iter().all(|r| r.phonon.abs() < 1e-12 && r.magnon.abs() < 1e-12));
    }
}
