//! Physical parameters, the effective Hamiltonian, Fizeau shift, dressed
//! atom states, multiquanta resonance conditions and the mean-field
//! linearization from lab-frame parameters.
//!
//! Everything here is dimensionless in units of the phonon frequency ω_b,
//! except [`ResonatorGeometry`] and [`LabParams`], which carry physical units.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::hilbert::{atom_lowering, mode_annihilator, AtomLevel, BasisLabel, Mode, Operator, SpaceDescriptor, StateVector};
use crate::linalg::eigh;
use crate::{Error, Result, C64};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveSide {
    Left,
    Right,
}

impl DriveSide {
    /// Sign carried by the Fizeau shift: +1 for left, −1 for right.
    pub fn sign(self) -> f64 {
        match self {
            DriveSide::Left => 1.0,
            DriveSide::Right => -1.0,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            DriveSide::Left => DriveSide::Right,
            DriveSide::Right => DriveSide::Left,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DriveSide::Left => "left",
            DriveSide::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub delta_ad: f64,
    pub delta_sigma_a: f64,
    pub omega_b: f64,
    pub omega_m: f64,
    /// Signed: positive for a left drive, negative for a right drive.
    pub delta_f: f64,
    pub lambda_ab: f64,
    pub lambda_am: f64,
    pub lambda_a_sigma: f64,
    pub xi: f64,
    pub gamma: f64,
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub kappa_m: f64,
}

impl ModelParams {
    /// The reference regime: Δ_σa = −3.1, ω_m = 1.05, |Δ_F| = 0.025 (left),
    /// λ_aσ = 0.3, λ_ab = λ_am = 0.022, ξ = 0.8, γ = 0.001, κ = 0.005,
    /// with Δ_ad near the left photon–magnon resonance.
    pub fn reference() -> Self {
        Self {
            delta_ad: 1.3191,
            delta_sigma_a: -3.1,
            omega_b: 1.0,
            omega_m: 1.05,
            delta_f: 0.025,
            lambda_ab: 0.022,
            lambda_am: 0.022,
            lambda_a_sigma: 0.3,
            xi: 0.8,
            gamma: 0.001,
            kappa_a: 0.005,
            kappa_b: 0.005,
            kappa_m: 0.005,
        }
    }

    /// Atom–drive detuning Δ_σd = Δ_σa + Δ_ad.
    pub fn delta_sigma_d(&self) -> f64 {
        self.delta_sigma_a + self.delta_ad
    }

    pub fn side(&self) -> DriveSide {
        if self.delta_f < 0.0 {
            DriveSide::Right
        } else {
            DriveSide::Left
        }
    }

    /// Same |Δ_F| with the sign of `side`.
    pub fn with_side(mut self, side: DriveSide) -> Self {
        self.delta_f = side.sign() * self.delta_f.abs();
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa_a = kappa;
        self.kappa_b = kappa;
        self.kappa_m = kappa;
        self
    }

    pub fn with_delta_ad(mut self, delta_ad: f64) -> Self {
        self.delta_ad = delta_ad;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("delta_ad", self.delta_ad),
            ("delta_sigma_a", self.delta_sigma_a),
            ("omega_b", self.omega_b),
            ("omega_m", self.omega_m),
            ("delta_f", self.delta_f),
            ("lambda_ab", self.lambda_ab),
            ("lambda_am", self.lambda_am),
            ("lambda_a_sigma", self.lambda_a_sigma),
            ("xi", self.xi),
            ("gamma", self.gamma),
            ("kappa_a", self.kappa_a),
            ("kappa_b", self.kappa_b),
            ("kappa_m", self.kappa_m),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} is not finite")));
            }
        }
        if self.omega_b <= 0.0 {
            return Err(Error::InvalidArgument("omega_b must be positive".into()));
        }
        for (name, v) in [("gamma", self.gamma), ("kappa_a", self.kappa_a), ("kappa_b", self.kappa_b), ("kappa_m", self.kappa_m)] {
            if v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.xi < 0.0 {
            return Err(Error::InvalidArgument("xi must be >= 0".into()));
        }
        Ok(())
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::reference()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorGeometry {
    /// Meters.
    pub radius: f64,
    pub refractive_index: f64,
    /// (λ/n_r)(dn_r/dλ).
    pub dispersion_term: f64,
    /// Optical angular frequency, rad/s.
    pub omega_a: f64,
}

impl ResonatorGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::InvalidArgument("radius must be positive".into()));
        }
        if !(self.refractive_index > 1.0) {
            return Err(Error::InvalidArgument("refractive_index must exceed 1".into()));
        }
        if !self.dispersion_term.is_finite() || !self.omega_a.is_finite() {
            return Err(Error::InvalidArgument("geometry entries must be finite".into()));
        }
        Ok(())
    }
}

/// Sagnac–Fizeau shift in the units of `geometry.omega_a` (rad/s).
pub fn fizeau_shift(geometry: &ResonatorGeometry, angular_velocity: f64, side: DriveSide) -> Result<f64> {
    geometry.validate()?;
    if !(angular_velocity >= 0.0) {
        return Err(Error::InvalidArgument("angular velocity must be >= 0".into()));
    }
    let n = geometry.refractive_index;
    let mag = geometry.radius * n * geometry.omega_a * angular_velocity / SPEED_OF_LIGHT
        * (1.0 - 1.0 / (n * n) - geometry.dispersion_term);
    Ok(side.sign() * mag)
}

/// Eigenpair data of the driven atom Δ_σd σ†σ + ξ(σ† + σ).
///
/// `|+⟩ = c₊|g⟩ + c₋|e⟩` and `|−⟩ = c₋|g⟩ − c₊|e⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DressedPair {
    pub e_plus: f64,
    pub e_minus: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    /// Set when Δ_σd = ξ = 0; the amplitudes are then an arbitrary choice (|+⟩ = |g⟩).
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DressedLevel {
    Plus,
    Minus,
}

impl DressedPair {
    /// Amplitudes (on |g⟩, on |e⟩) of a dressed level.
    pub fn amplitudes(&self, level: DressedLevel) -> (f64, f64) {
        match level {
            DressedLevel::Plus => (self.c_plus, self.c_minus),
            DressedLevel::Minus => (self.c_minus, -self.c_plus),
        }
    }

    pub fn energy(&self, level: DressedLevel) -> f64 {
        match level {
            DressedLevel::Plus => self.e_plus,
            DressedLevel::Minus => self.e_minus,
        }
    }

    /// `|n_a n_b n_m⟩ ⊗ |level⟩` on `space`.
    pub fn product_state(&self, space: &SpaceDescriptor, na: usize, nb: usize, nm: usize, level: DressedLevel) -> Result<StateVector> {
        let (cg, ce) = self.amplitudes(level);
        let mut v = DVector::zeros(space.dim());
        v[space.index(BasisLabel { atom: AtomLevel::Ground, na, nb, nm })?] = C64::new(cg, 0.0);
        v[space.index(BasisLabel { atom: AtomLevel::Excited, na, nb, nm })?] = C64::new(ce, 0.0);
        StateVector::new(*space, v)
    }
}

pub fn dressed_states(delta_sigma_d: f64, xi: f64) -> Result<DressedPair> {
    if !(xi >= 0.0) || !delta_sigma_d.is_finite() || !xi.is_finite() {
        return Err(Error::InvalidArgument(format!("need finite Δ_σd and ξ >= 0, got ({delta_sigma_d}, {xi})")));
    }
    let d = delta_sigma_d;
    let r = (d * d + 4.0 * xi * xi).sqrt();
    if r == 0.0 {
        return Ok(DressedPair { e_plus: 0.0, e_minus: 0.0, c_plus: 1.0, c_minus: 0.0, degenerate: true });
    }
    // c₊² = (R − Δ)/2R and c₋² = (R + Δ)/2R, each taken from whichever form avoids cancellation.
    let (cp2, cm2) = if d >= 0.0 {
        let cm2 = (r + d) / (2.0 * r);
        (2.0 * xi * xi / (r * (r + d)), cm2)
    } else {
        let cp2 = (r - d) / (2.0 * r);
        (cp2, 2.0 * xi * xi / (r * (r - d)))
    };
    Ok(DressedPair {
        e_plus: 0.5 * (d + r),
        e_minus: 0.5 * (d - r),
        c_plus: cp2.sqrt(),
        c_minus: cm2.sqrt(),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResonanceKind {
    PhotonMagnon,
    PhotonPhonon,
}

impl ResonanceKind {
    /// The partner mode of the photon in the bundle.
    pub fn partner(self) -> Mode {
        match self {
            ResonanceKind::PhotonMagnon => Mode::Magnon,
            ResonanceKind::PhotonPhonon => Mode::Phonon,
        }
    }

    fn partner_frequency(self, p: &ModelParams) -> f64 {
        match self {
            ResonanceKind::PhotonMagnon => p.omega_m,
            ResonanceKind::PhotonPhonon => p.omega_b,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ResonanceKind::PhotonMagnon => "photon_magnon",
            ResonanceKind::PhotonPhonon => "photon_phonon",
        }
    }
}

/// Energy of the photon-plus-partner bundle for the given side: ω_x ± |Δ_F|.
fn bundle_offset(kind: ResonanceKind, side: DriveSide, p: &ModelParams) -> f64 {
    kind.partner_frequency(p) + side.sign() * p.delta_f.abs()
}

/// Residual of the unsquared resonance condition
/// `(Δ_ad ± |Δ_F|) + ω_x − √((Δ_σa + Δ_ad)² + 4ξ²)`.
pub fn resonance_residual(kind: ResonanceKind, side: DriveSide, p: &ModelParams, delta_ad: f64) -> f64 {
    let dsd = p.delta_sigma_a + delta_ad;
    delta_ad + bundle_offset(kind, side, p) - (dsd * dsd + 4.0 * p.xi * p.xi).sqrt()
}

/// Closed-form Δ_ad at which `|000+⟩` is degenerate with the one-photon,
/// one-partner state on the lower dressed level.
///
/// Only `|Δ_F|` is read from `p`; `side` picks the sign.
pub fn resonance_detuning(kind: ResonanceKind, side: DriveSide, p: &ModelParams) -> Result<f64> {
    let w = bundle_offset(kind, side, p);
    let denom = 2.0 * (w - p.delta_sigma_a);
    if denom.abs() < 1e-14 {
        return Err(Error::SingularConfiguration(format!(
            "{} {} resonance: ω_x ± |Δ_F| equals Δ_σa",
            kind.as_str(),
            side.as_str()
        )));
    }
    let dsa = p.delta_sigma_a;
    let delta_ad = (dsa * dsa + 4.0 * p.xi * p.xi - w * w) / denom;
    let res = resonance_residual(kind, side, p, delta_ad);
    if res.abs() >= 1e-9 {
        return Err(Error::NoResonance(format!(
            "{} {} closed form {delta_ad} leaves residual {res:e}",
            kind.as_str(),
            side.as_str()
        )));
    }
    Ok(delta_ad)
}

/// The elementary operators of the model on one space.
#[derive(Debug, Clone)]
pub struct SystemOperators {
    pub a: Operator,
    pub b: Operator,
    pub m: Operator,
    pub sigma: Operator,
}

impl SystemOperators {
    pub fn new(space: &SpaceDescriptor) -> Self {
        Self {
            a: mode_annihilator(space, Mode::Photon),
            b: mode_annihilator(space, Mode::Phonon),
            m: mode_annihilator(space, Mode::Magnon),
            sigma: atom_lowering(space),
        }
    }

    pub fn mode(&self, mode: Mode) -> &Operator {
        match mode {
            Mode::Photon => &self.a,
            Mode::Phonon => &self.b,
            Mode::Magnon => &self.m,
        }
    }

    pub fn number(&self, mode: Mode) -> Operator {
        let o = self.mode(mode);
        &o.dag() * o
    }

    pub fn excited_projector(&self) -> Operator {
        &self.sigma.dag() * &self.sigma
    }
}

pub fn build_hamiltonian(p: &ModelParams, space: &SpaceDescriptor) -> Operator {
    build_hamiltonian_with(p, &SystemOperators::new(space))
}

pub fn build_hamiltonian_with(p: &ModelParams, ops: &SystemOperators) -> Operator {
    let SystemOperators { a, b, m, sigma } = ops;
    let (ad, bd, md, sd) = (a.dag(), b.dag(), m.dag(), sigma.dag());
    let xa = a + &ad;
    let mut h = &(&ad * a) * (p.delta_ad + p.delta_f);
    h = &h + &(&(&bd * b) * p.omega_b);
    h = &h + &(&(&md * m) * p.omega_m);
    h = &h + &(&(&sd * sigma) * p.delta_sigma_d());
    h = &h + &(&(&xa * &(b + &bd)) * p.lambda_ab);
    h = &h + &(&(&xa * &(m + &md)) * p.lambda_am);
    h = &h + &(&(&(a * &sd) + &(&ad * sigma)) * p.lambda_a_sigma);
    h = &h + &(&(sigma + &sd) * p.xi);
    h
}

/// Result of [`locate_resonance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Anticrossing {
    pub delta_ad: f64,
    /// Splitting of the two hybridized levels at `delta_ad`; sets the super-Rabi period 2π/gap.
    pub gap: f64,
    /// Closed-form seed the search started from.
    pub closed_form: f64,
}

/// Signed energy difference of the eigenstates that carry `|000+⟩` and the
/// bundle state, together with their splitting.
fn dressed_difference(kind: ResonanceKind, p: &ModelParams, space: &SpaceDescriptor, ops: &SystemOperators) -> Result<(f64, f64)> {
    let h = build_hamiltonian_with(p, ops).to_dense();
    let (vals, vecs) = eigh(&h);
    let dp = dressed_states(p.delta_sigma_d(), p.xi)?;
    let vac = dp.product_state(space, 0, 0, 0, DressedLevel::Plus)?;
    let (nb, nm) = match kind {
        ResonanceKind::PhotonMagnon => (0, 1),
        ResonanceKind::PhotonPhonon => (1, 0),
    };
    let bundle = dp.product_state(space, 1, nb, nm, DressedLevel::Minus)?;
    let ov = |t: &StateVector| -> Vec<f64> { (0..vals.len()).map(|k| vecs.column(k).dotc(t.amplitudes()).norm_sqr()).collect() };
    let (oa, ob) = (ov(&vac), ov(&bundle));
    let top2 = |o: &[f64]| {
        let mut idx: Vec<usize> = (0..o.len()).collect();
        idx.sort_by(|&i, &j| o[j].total_cmp(&o[i]));
        [idx[0], idx[1]]
    };
    let (ta, tb) = (top2(&oa), top2(&ob));
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for &i in &ta {
        for &j in &tb {
            if i != j && oa[i] + ob[j] > best.0 {
                best = (oa[i] + ob[j], i, j);
            }
        }
    }
    let (_, i, j) = best;
    Ok((vals[i] - vals[j], (vals[i] - vals[j]).abs()))
}

/// Locates the multiquanta resonance of the full truncated Hamiltonian.
///
/// The closed form of [`resonance_detuning`] ignores the level shifts induced
/// by the Jaynes–Cummings and linear couplings, which move the true
/// anticrossing by an amount comparable to its distance from neighbouring
/// resonances. Starting from the closed form, this scans Δ_ad for the point
/// where the eigenstates carrying `|000+⟩` and `|1,·,·,−⟩` exchange
/// character and refines it by bisection.
pub fn locate_resonance(kind: ResonanceKind, side: DriveSide, p: &ModelParams, space: &SpaceDescriptor) -> Result<Anticrossing> {
    let seed = resonance_detuning(kind, side, p)?;
    let base = p.with_side(side);
    let ops = SystemOperators::new(space);
    let eval = |x: f64| dressed_difference(kind, &base.with_delta_ad(x), space, &ops);
    let step = 0.0025;
    let (lo_off, hi_off): (f64, f64) = (-0.03, 0.06);
    let n = ((hi_off - lo_off) / step).round() as usize;
    let grid: Vec<f64> = (0..=n).map(|k| seed + lo_off + k as f64 * step).collect();
    let vals = grid.iter().map(|&x| eval(x).map(|v| v.0)).collect::<Result<Vec<_>>>()?;
    let mut bracket: Option<(f64, f64, f64)> = None;
    for k in 0..n {
        if vals[k].signum() != vals[k + 1].signum() {
            let mid = 0.5 * (grid[k] + grid[k + 1]);
            let dist = (mid - seed).abs();
            if bracket.is_none_or(|(_, _, d)| dist < d) {
                bracket = Some((grid[k], grid[k + 1], dist));
            }
        }
    }
    let (mut lo, mut hi, _) = bracket.ok_or_else(|| {
        Error::NoResonance(format!("no anticrossing of {} ({}) within [{:.4}, {:.4}]", kind.as_str(), side.as_str(), grid[0], grid[n]))
    })?;
    let s_lo = eval(lo)?.0.signum();
    while hi - lo > 1e-11 {
        let mid = 0.5 * (lo + hi);
        if eval(mid)?.0.signum() == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let gap = eval(lo)?.1.min(eval(hi)?.1);
    Ok(Anticrossing { delta_ad: x, gap, closed_form: seed })
}

/// Lab-frame parameters before linearization (any consistent frequency unit).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabParams {
    pub omega_a: f64,
    pub omega_sigma: f64,
    pub omega_d: f64,
    pub omega_b: f64,
    pub omega_m: f64,
    pub lambda_ab: f64,
    pub lambda_am: f64,
    pub lambda_a_sigma: f64,
    pub xi_d: f64,
    pub xi_p: f64,
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub kappa_m: f64,
    pub gamma: f64,
    pub delta_f: f64,
}

impl LabParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("omega_a", self.omega_a),
            ("omega_sigma", self.omega_sigma),
            ("omega_d", self.omega_d),
            ("omega_b", self.omega_b),
            ("omega_m", self.omega_m),
            ("lambda_ab", self.lambda_ab),
            ("lambda_am", self.lambda_am),
            ("lambda_a_sigma", self.lambda_a_sigma),
            ("xi_d", self.xi_d),
            ("xi_p", self.xi_p),
            ("kappa_a", self.kappa_a),
            ("kappa_b", self.kappa_b),
            ("kappa_m", self.kappa_m),
            ("gamma", self.gamma),
            ("delta_f", self.delta_f),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} is not finite")));
            }
        }
        for (name, v) in [("xi_d", self.xi_d), ("xi_p", self.xi_p)] {
            if v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.omega_b > 0.0) {
            return Err(Error::InvalidArgument("omega_b must be positive".into()));
        }
        for (name, v) in [("gamma", self.gamma), ("kappa_a", self.kappa_a), ("kappa_b", self.kappa_b), ("kappa_m", self.kappa_m)] {
            if v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanFieldSolution {
    pub alpha: C64,
    pub beta: C64,
    pub mu: C64,
    /// Effective parameters normalized by ω_b.
    pub effective: ModelParams,
    /// Every real nonnegative root |α|² of the reduced cubic, ascending.
    pub roots: Vec<f64>,
    /// Index into `roots` of this solution.
    pub branch: usize,
}

/// Residuals of the three classical steady-state equations, divided by ω_b.
pub fn mean_field_residuals(lab: &LabParams, alpha: C64, beta: C64, mu: C64) -> [f64; 3] {
    let i = C64::new(0.0, 1.0);
    let xb = 2.0 * beta.re;
    let xm = 2.0 * mu.re;
    let ra = (lab.omega_a - lab.omega_d + lab.delta_f) * alpha + lab.lambda_ab * alpha * xb + lab.lambda_am * alpha * xm + lab.xi_d
        - 0.5 * i * lab.kappa_a * alpha;
    let n = alpha.norm_sqr();
    let rb = lab.omega_b * beta + lab.lambda_ab * n - 0.5 * i * lab.kappa_b * beta;
    let rm = lab.omega_m * mu + lab.lambda_am * n - 0.5 * i * lab.kappa_m * mu;
    [ra.norm() / lab.omega_b, rb.norm() / lab.omega_b, rm.norm() / lab.omega_b]
}

/// Real nonnegative roots of `n((Δ₀ − G n)² + κ²/4) = ξ_d²`.
fn intensity_roots(delta0: f64, g: f64, kappa: f64, xi_d: f64) -> Vec<f64> {
    let f = |n: f64| n * ((delta0 - g * n).powi(2) + 0.25 * kappa * kappa) - xi_d * xi_d;
    if xi_d == 0.0 {
        return vec![0.0];
    }
    // Critical points of the cubic split [0, ∞) into monotone pieces.
    let (a3, a2, a1) = (3.0 * g * g, -4.0 * delta0 * g, delta0 * delta0 + 0.25 * kappa * kappa);
    let mut knots = vec![0.0];
    if a3 > 0.0 {
        let disc = a2 * a2 - 4.0 * a3 * a1;
        if disc > 0.0 {
            let s = disc.sqrt();
            let mut c = [(-a2 - s) / (2.0 * a3), (-a2 + s) / (2.0 * a3)];
            c.sort_by(f64::total_cmp);
            knots.extend(c.iter().filter(|&&x| x > 0.0));
        }
    }
    let mut hi = knots.last().copied().unwrap_or(0.0).max(1.0);
    while f(hi) <= 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            break;
        }
    }
    knots.push(hi);
    let mut roots = Vec::new();
    for w in knots.windows(2) {
        let (mut lo, mut up) = (w[0], w[1]);
        let (flo, fup) = (f(lo), f(up));
        if flo == 0.0 {
            roots.push(lo);
            continue;
        }
        if flo.signum() == fup.signum() {
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + up);
            if mid <= lo || mid >= up {
                break;
            }
            if f(mid).signum() == flo.signum() {
                lo = mid;
            } else {
                up = mid;
            }
        }
        roots.push(0.5 * (lo + up));
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1.0));
    roots
}

/// All classical steady-state branches, ordered by |α|².
pub fn mean_field_branches(lab: &LabParams) -> Result<Vec<MeanFieldSolution>> {
    lab.validate()?;
    let i = C64::new(0.0, 1.0);
    let delta0 = lab.omega_a - lab.omega_d + lab.delta_f;
    let gb = 2.0 * lab.lambda_ab.powi(2) * lab.omega_b / (lab.omega_b.powi(2) + 0.25 * lab.kappa_b.powi(2));
    let gm = 2.0 * lab.lambda_am.powi(2) * lab.omega_m / (lab.omega_m.powi(2) + 0.25 * lab.kappa_m.powi(2));
    let g = gb + gm;
    let roots = intensity_roots(delta0, g, lab.kappa_a, lab.xi_d);
    let mut out = Vec::new();
    for (branch, &n) in roots.iter().enumerate() {
        let beta = -lab.lambda_ab * n / (lab.omega_b - 0.5 * i * lab.kappa_b);
        let mu = -lab.lambda_am * n / (lab.omega_m - 0.5 * i * lab.kappa_m);
        let det = delta0 + lab.lambda_ab * 2.0 * beta.re + lab.lambda_am * 2.0 * mu.re - 0.5 * i * lab.kappa_a;
        let alpha = if lab.xi_d == 0.0 {
            C64::new(0.0, 0.0)
        } else if det.norm() == 0.0 {
            return Err(Error::InfeasibleParameters("classical amplitude diverges (zero detuning and zero loss)".into()));
        } else {
            -lab.xi_d / det
        };
        let shift = lab.lambda_ab * 2.0 * beta.re + lab.lambda_am * 2.0 * mu.re;
        let amp = alpha.norm();
        let wb = lab.omega_b;
        let effective = ModelParams {
            delta_ad: (lab.omega_a - lab.omega_d + shift) / wb,
            delta_sigma_a: (lab.omega_sigma - lab.omega_a - shift) / wb,
            omega_b: 1.0,
            omega_m: lab.omega_m / wb,
            delta_f: lab.delta_f / wb,
            lambda_ab: lab.lambda_ab * amp / wb,
            lambda_am: lab.lambda_am * amp / wb,
            lambda_a_sigma: lab.lambda_a_sigma / wb,
            xi: (lab.lambda_a_sigma * amp + lab.xi_p) / wb,
            gamma: lab.gamma / wb,
            kappa_a: lab.kappa_a / wb,
            kappa_b: lab.kappa_b / wb,
            kappa_m: lab.kappa_m / wb,
        };
        out.push(MeanFieldSolution { alpha, beta, mu, effective, roots: roots.clone(), branch });
    }
    if out.is_empty() {
        return Err(Error::InfeasibleParameters("no real nonnegative root of the intensity cubic".into()));
    }
    Ok(out)
}

/// Lowest-intensity classical branch.
pub fn mean_field_steady(lab: &LabParams) -> Result<MeanFieldSolution> {
    Ok(mean_field_branches(lab)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::build_space;
    use nalgebra::DMatrix;

    #[test]
    fn dressed_examples() {
        let d = dressed_states(0.0, 0.8).unwrap();
        assert!((d.e_plus - 0.8).abs() < 1e-15 && (d.e_minus + 0.8).abs() < 1e-15);
        assert!((d.c_plus - 0.5f64.sqrt()).abs() < 1e-15 && (d.c_minus - 0.5f64.sqrt()).abs() < 1e-15);
        let d = dressed_states(2.0, 0.0).unwrap();
        assert_eq!((d.e_plus, d.e_minus), (2.0, 0.0));
        let d = dressed_states(-3.1 + 1.3191, 0.8).unwrap();
        assert!((d.e_plus - d.e_minus - 2.3941).abs() < 1e-4);
        assert!(dressed_states(0.0, 0.0).unwrap().degenerate);
        assert!(dressed_states(1.0, -0.1).is_err());
    }

    #[test]
    fn dressed_energies_diagonalize_atom_block() {
        for &(d, xi) in &[(-1.78, 0.8), (0.3, 0.01), (-5.0, 2.0), (1e-3, 4.0), (-2.0, 0.0)] {
            let dp = dressed_states(d, xi).unwrap();
            let h = DMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(xi, 0.0), C64::new(xi, 0.0), C64::new(d, 0.0)]);
            let (vals, _) = eigh(&h);
            assert!((vals[0] - dp.e_minus).abs() < 1e-12 && (vals[1] - dp.e_plus).abs() < 1e-12);
            assert!((dp.c_plus.powi(2) + dp.c_minus.powi(2) - 1.0).abs() < 1e-12);
            for level in [DressedLevel::Plus, DressedLevel::Minus] {
                let (g, e) = dp.amplitudes(level);
                let v = nalgebra::DVector::from_vec(vec![C64::new(g, 0.0), C64::new(e, 0.0)]);
                let r = &h * &v - v.scale(dp.energy(level));
                assert!(r.norm() < 1e-12, "{d} {xi} {level:?}");
            }
        }
    }

    #[test]
    fn closed_form_resonances() {
        let p = ModelParams::reference();
        let want = [
            (ResonanceKind::PhotonMagnon, DriveSide::Left, 1.3191),
            (ResonanceKind::PhotonMagnon, DriveSide::Right, 1.3478),
            (ResonanceKind::PhotonPhonon, DriveSide::Left, 1.3478),
            (ResonanceKind::PhotonPhonon, DriveSide::Right, 1.3766),
        ];
        for (k, s, v) in want {
            let x = resonance_detuning(k, s, &p).unwrap();
            assert!((x - v).abs() < 1e-4, "{k:?} {s:?} {x}");
            assert!(resonance_residual(k, s, &p, x).abs() < 1e-12);
        }
    }

    #[test]
    fn resonance_degeneracy_of_bare_ladder() {
        let p = ModelParams::reference();
        let x = resonance_detuning(ResonanceKind::PhotonMagnon, DriveSide::Left, &p).unwrap();
        let q = p.with_delta_ad(x);
        let dp = dressed_states(q.delta_sigma_d(), q.xi).unwrap();
        let e000 = dp.e_plus;
        let e101 = (q.delta_ad + q.delta_f) + q.omega_m + dp.e_minus;
        assert!((e000 - e101).abs() < 1e-9);
    }

    #[test]
    fn vanishing_denominator_is_singular() {
        let mut p = ModelParams::reference();
        p.delta_sigma_a = p.omega_m + p.delta_f.abs();
        assert!(matches!(
            resonance_detuning(ResonanceKind::PhotonMagnon, DriveSide::Left, &p),
            Err(Error::SingularConfiguration(_))
        ));
    }

    #[test]
    fn hamiltonian_elements() {
        let s = build_space(2, 2, 2).unwrap();
        let p = ModelParams::reference();
        let h = build_hamiltonian(&p, &s);
        let l = |atom, na, nb, nm| BasisLabel { atom, na, nb, nm };
        use AtomLevel::{Excited as E, Ground as G};
        assert_eq!(h.element(l(E, 0, 0, 0), l(G, 0, 0, 0)).unwrap().re, p.xi);
        assert_eq!(h.element(l(G, 1, 0, 0), l(E, 0, 0, 0)).unwrap().re, p.lambda_a_sigma);
        assert_eq!(h.element(l(G, 1, 1, 0), l(G, 0, 0, 0)).unwrap().re, p.lambda_ab);
        assert_eq!(h.element(l(G, 1, 0, 1), l(G, 0, 0, 0)).unwrap().re, p.lambda_am);
        let diag = h.element(l(E, 1, 1, 1), l(E, 1, 1, 1)).unwrap().re;
        let want = p.delta_ad + p.delta_f + p.omega_b + p.omega_m + p.delta_sigma_d();
        assert!((diag - want).abs() < 1e-14);
        assert!(h.hermiticity_error() < 1e-12);
    }

    #[test]
    fn fizeau_sign_and_zero() {
        let g = ResonatorGeometry { radius: 1.1e-3, refractive_index: 1.44, dispersion_term: 0.0, omega_a: 2.0 * std::f64::consts::PI * 193e12 };
        assert_eq!(fizeau_shift(&g, 0.0, DriveSide::Left).unwrap(), 0.0);
        let l = fizeau_shift(&g, 3000.0, DriveSide::Left).unwrap();
        let r = fizeau_shift(&g, 3000.0, DriveSide::Right).unwrap();
        assert!(l > 0.0 && l == -r);
    }

    fn lab_linear() -> LabParams {
        LabParams {
            omega_a: 10.0,
            omega_sigma: 7.0,
            omega_d: 9.0,
            omega_b: 1.0,
            omega_m: 1.05,
            lambda_ab: 0.0,
            lambda_am: 0.0,
            lambda_a_sigma: 0.01,
            xi_d: 0.3,
            xi_p: 0.1,
            kappa_a: 0.2,
            kappa_b: 0.01,
            kappa_m: 0.01,
            gamma: 0.001,
            delta_f: 0.025,
        }
    }

    #[test]
    fn mean_field_linear_limit() {
        let lab = lab_linear();
        let s = mean_field_steady(&lab).unwrap();
        let want = -lab.xi_d / C64::new(lab.omega_a - lab.omega_d + lab.delta_f, -0.5 * lab.kappa_a);
        assert!((s.alpha - want).norm() < 1e-12);
        assert_eq!((s.beta, s.mu), (C64::new(0.0, 0.0), C64::new(0.0, 0.0)));
        let mut undriven = lab;
        undriven.xi_d = 0.0;
        let z = mean_field_steady(&undriven).unwrap();
        assert_eq!(z.alpha.norm() + z.beta.norm() + z.mu.norm(), 0.0);
    }

    #[test]
    fn mean_field_bistable_branches() {
        let mut lab = lab_linear();
        lab.lambda_ab = 0.05;
        lab.lambda_am = 0.04;
        lab.kappa_a = 0.02;
        lab.xi_d = 0.2;
        lab.omega_d = 9.0 - 0.3;
        let all = mean_field_branches(&lab).unwrap();
        assert!(!all.is_empty());
        for s in &all {
            let r = mean_field_residuals(&lab, s.alpha, s.beta, s.mu);
            assert!(r.iter().all(|&x| x < 1e-10), "{r:?}");
            assert!((s.effective.lambda_ab - lab.lambda_ab * s.alpha.norm()).abs() < 1e-14);
        }
        assert!(all.windows(2).all(|w| w[0].alpha.norm() <= w[1].alpha.norm()));
    }
}
