//! Quantum-jump unraveling of the master equation.
//!
//! Between jumps the unnormalized state follows `H_eff = H − (i/2) Σ c†c`. A
//! jump fires when ‖ψ‖² falls to a uniform threshold. Propagation uses dense
//! exponentials of `−i H_eff h/2^k` for a base step `h` and k = 0..levels, so
//! the crossing time is located by dyadic descent with one product per level.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::correlations::Pair;
use crate::hilbert::{AtomLevel, BasisLabel, Mode, Operator, SpaceDescriptor, StateVector, QuantumState};
use crate::linalg::expm;
use crate::model::{build_hamiltonian_with, DressedLevel, DressedPair, ModelParams, SystemOperators};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Photon,
    Phonon,
    Magnon,
    Atom,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Photon, Channel::Phonon, Channel::Magnon, Channel::Atom];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Photon => "photon",
            Channel::Phonon => "phonon",
            Channel::Magnon => "magnon",
            Channel::Atom => "atom",
        }
    }

    pub fn of_mode(mode: Mode) -> Self {
        match mode {
            Mode::Photon => Channel::Photon,
            Mode::Phonon => Channel::Phonon,
            Mode::Magnon => Channel::Magnon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: Channel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryOptions {
    /// Base propagation step; grid intervals are covered by dyadic fractions of it.
    pub max_step: f64,
    /// Number of halvings available to locate a jump (resolution `max_step / 2^levels`).
    pub levels: usize,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self { max_step: 1.0, levels: 40 }
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub times: Vec<f64>,
    /// Normalized.
    pub states: Vec<StateVector>,
    pub jumps: Vec<JumpEvent>,
}

impl TrajectoryRecord {
    pub fn jumps_of(&self, channel: Channel) -> impl Iterator<Item = f64> + '_ {
        self.jumps.iter().filter(move |j| j.channel == channel).map(|j| j.time)
    }
}

/// Prepared jump problem: propagators and weighted collapse operators.
#[derive(Debug, Clone)]
pub struct JumpSolver {
    space: SpaceDescriptor,
    h_eff: DMatrix<C64>,
    channels: Vec<(Channel, DMatrix<C64>)>,
    opts: TrajectoryOptions,
}

/// Propagator ladders `exp(−i H_eff h/2^k)` for every distinct interval of a time grid,
/// with `h` the interval split into pieces no longer than `max_step`.
struct Ladders {
    steps: Vec<(u64, f64, Vec<DMatrix<C64>>)>,
}

impl Ladders {
    fn get(&self, interval: f64) -> (f64, &[DMatrix<C64>]) {
        let (_, h, l) = self.steps.iter().find(|(b, _, _)| *b == interval.to_bits()).expect("ladder prepared for every interval");
        (*h, l)
    }
}

impl JumpSolver {
    /// `channels` carry their rates; zero-rate channels are dropped.
    pub fn new(h: &Operator, channels: &[(Channel, Operator, f64)], opts: TrajectoryOptions) -> Result<Self> {
        let space = *h.space();
        if h.hermiticity_error() > 1e-12 {
            return Err(Error::InvalidArgument("Hamiltonian is not Hermitian".into()));
        }
        if !(opts.max_step > 0.0) || !opts.max_step.is_finite() || opts.levels == 0 || opts.levels > 60 {
            return Err(Error::InvalidArgument("max_step must be positive and levels in 1..=60".into()));
        }
        let i = C64::new(0.0, 1.0);
        let mut h_eff = h.to_dense();
        let mut kept = Vec::new();
        for (ch, c, r) in channels {
            if c.space() != &space {
                return Err(Error::SpaceMismatch);
            }
            if !(*r >= 0.0) || !r.is_finite() {
                return Err(Error::InvalidArgument(format!("{} rate must be finite and >= 0", ch.as_str())));
            }
            if *r > 0.0 {
                let sc = c.to_dense() * C64::new(r.sqrt(), 0.0);
                h_eff -= (sc.adjoint() * &sc) * (i * 0.5);
                kept.push((*ch, sc));
            }
        }
        Ok(Self { space, h_eff, channels: kept, opts })
    }

    /// Model channels √κ_a a, √κ_b b, √κ_m m, √γ σ.
    pub fn from_model(p: &ModelParams, space: &SpaceDescriptor, opts: TrajectoryOptions) -> Result<Self> {
        p.validate()?;
        let ops = SystemOperators::new(space);
        let channels = [
            (Channel::Photon, ops.a.clone(), p.kappa_a),
            (Channel::Phonon, ops.b.clone(), p.kappa_b),
            (Channel::Magnon, ops.m.clone(), p.kappa_m),
            (Channel::Atom, ops.sigma.clone(), p.gamma),
        ];
        Self::new(&build_hamiltonian_with(p, &ops), &channels, opts)
    }

    pub fn space(&self) -> &SpaceDescriptor {
        &self.space
    }

    pub fn effective_hamiltonian(&self) -> &DMatrix<C64> {
        &self.h_eff
    }

    fn check(&self, psi0: &StateVector, times: &[f64]) -> Result<()> {
        if psi0.space() != &self.space {
            return Err(Error::SpaceMismatch);
        }
        if (psi0.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("initial state has norm {}", psi0.norm())));
        }
        if times.is_empty() || times.iter().any(|t| !t.is_finite() || *t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("time grid must be nonempty, finite, nonnegative and nondecreasing".into()));
        }
        Ok(())
    }

    fn ladders(&self, times: &[f64]) -> Ladders {
        let gen = &self.h_eff * C64::new(0.0, -1.0);
        let mut steps: Vec<(u64, f64, Vec<DMatrix<C64>>)> = Vec::new();
        let mut prev = 0.0;
        for &t in times {
            let interval = t - prev;
            prev = t;
            if interval <= 0.0 || steps.iter().any(|(b, _, _)| *b == interval.to_bits()) {
                continue;
            }
            let h = interval / (interval / self.opts.max_step).ceil();
            let ladder = (0..=self.opts.levels).map(|k| expm(&(&gen * C64::new(h / 2f64.powi(k as i32), 0.0)))).collect();
            steps.push((interval.to_bits(), h, ladder));
        }
        Ladders { steps }
    }

    pub fn run(&self, psi0: &StateVector, times: &[f64], seed: u64) -> Result<TrajectoryRecord> {
        self.check(psi0, times)?;
        self.run_prepared(psi0, times, seed, &self.ladders(times))
    }

    fn run_prepared(&self, psi0: &StateVector, times: &[f64], seed: u64, ladders: &Ladders) -> Result<TrajectoryRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut psi = psi0.amplitudes().clone();
        let mut threshold: f64 = rng.random();
        let mut t = 0.0;
        let mut jumps = Vec::new();
        let mut states = Vec::with_capacity(times.len());
        let levels = self.opts.levels;
        for &target in times {
            if target > t {
                let (h, ladder) = ladders.get(target - t);
                let finest = h / 2f64.powi(levels as i32);
                // Smallest level allowed next; raised while homing in on a crossing.
                let mut min_level = 0;
                while target - t > 0.5 * finest {
                    let remaining = target - t;
                    let Some(level) = (min_level..=levels).find(|&k| h / 2f64.powi(k as i32) <= remaining * (1.0 + 1e-12)) else {
                        break;
                    };
                    let dt = h / 2f64.powi(level as i32);
                    let phi = &ladder[level] * &psi;
                    let n2 = phi.norm_squared();
                    if !n2.is_finite() {
                        return Err(Error::Integrator(format!("non-finite norm at t = {t}")));
                    }
                    if n2 > threshold {
                        psi = phi;
                        t += dt;
                    } else if level < levels {
                        min_level = level + 1;
                    } else {
                        t += dt;
                        psi = self.jump(&phi, &mut rng, t, &mut jumps)?;
                        threshold = rng.random();
                        min_level = 0;
                    }
                }
                // Sub-resolution remainder left after a jump.
                let rest = target - t;
                if rest > 0.0 {
                    let k = &self.h_eff * &psi * C64::new(0.0, -rest);
                    psi += k;
                }
            }
            t = target;
            let n = psi.norm();
            states.push(StateVector::new(self.space, psi.unscale(n))?);
        }
        Ok(TrajectoryRecord { seed, times: times.to_vec(), states, jumps })
    }

    fn jump(&self, phi: &DVector<C64>, rng: &mut ChaCha8Rng, t: f64, jumps: &mut Vec<JumpEvent>) -> Result<DVector<C64>> {
        let cands: Vec<DVector<C64>> = self.channels.iter().map(|(_, c)| c * phi).collect();
        let weights: Vec<f64> = cands.iter().map(|v| v.norm_squared()).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Integrator(format!("jump at t = {t} with no active channel")));
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = weights.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            if u < *w {
                pick = k;
                break;
            }
            u -= w;
        }
        jumps.push(JumpEvent { time: t, channel: self.channels[pick].0 });
        let v = &cands[pick];
        Ok(v.unscale(v.norm()))
    }

    /// Independent trajectories with seeds `seed0, seed0 + 1, …`, averaged over `observables`.
    pub fn ensemble(&self, psi0: &StateVector, times: &[f64], n: usize, seed0: u64, observables: &[(String, Operator)]) -> Result<EnsembleSummary> {
        if n == 0 {
            return Err(Error::InvalidArgument("ensemble needs at least one trajectory".into()));
        }
        self.check(psi0, times)?;
        let ladders = self.ladders(times);
        let runs: Vec<(Vec<Vec<f64>>, Vec<JumpEvent>)> = (0..n as u64)
            .into_par_iter()
            .map(|k| {
                let rec = self.run_prepared(psi0, times, seed0.wrapping_add(k), &ladders)?;
                let series = observables
                    .iter()
                    .map(|(_, op)| rec.states.iter().map(|s| s.expect(op).map(|z| z.re)).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?;
                Ok((series, rec.jumps))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut series = Vec::with_capacity(observables.len());
        for (o, (name, _)) in observables.iter().enumerate() {
            let mut mean = vec![0.0; times.len()];
            let mut sq = vec![0.0; times.len()];
            for (s, _) in &runs {
                for (i, v) in s[o].iter().enumerate() {
                    mean[i] += v;
                    sq[i] += v * v;
                }
            }
            let nf = n as f64;
            let stderr = mean
                .iter()
                .zip(&sq)
                .map(|(m, q)| if n > 1 { ((q - m * m / nf) / (nf - 1.0)).max(0.0).sqrt() / nf.sqrt() } else { 0.0 })
                .collect();
            series.push(ObservableSeries { name: name.clone(), mean: mean.iter().map(|m| m / nf).collect(), stderr });
        }
        let jumps: Vec<Vec<JumpEvent>> = runs.into_iter().map(|(_, j)| j).collect();
        Ok(EnsembleSummary { n_trajectories: n, seed0, times: times.to_vec(), observables: series, jumps })
    }
}

pub fn run_trajectory(p: &ModelParams, space: &SpaceDescriptor, psi0: &StateVector, times: &[f64], seed: u64) -> Result<TrajectoryRecord> {
    JumpSolver::from_model(p, space, TrajectoryOptions::default())?.run(psi0, times, seed)
}

/// Ensemble of the model with ⟨a†a⟩, ⟨b†b⟩, ⟨m†m⟩ and ⟨σ†σ⟩ tracked.
pub fn ensemble_average(p: &ModelParams, space: &SpaceDescriptor, psi0: &StateVector, times: &[f64], n: usize, seed0: u64) -> Result<EnsembleSummary> {
    let solver = JumpSolver::from_model(p, space, TrajectoryOptions::default())?;
    solver.ensemble(psi0, times, n, seed0, &default_observables(space))
}

pub fn default_observables(space: &SpaceDescriptor) -> Vec<(String, Operator)> {
    let ops = SystemOperators::new(space);
    vec![
        ("n_photon".into(), ops.number(Mode::Photon)),
        ("n_phonon".into(), ops.number(Mode::Phonon)),
        ("n_magnon".into(), ops.number(Mode::Magnon)),
        ("p_excited".into(), ops.excited_projector()),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableSeries {
    pub name: String,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub n_trajectories: usize,
    pub seed0: u64,
    pub times: Vec<f64>,
    pub observables: Vec<ObservableSeries>,
    /// Jump records in seed order.
    pub jumps: Vec<Vec<JumpEvent>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpHistogram {
    pub channel: Channel,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl EnsembleSummary {
    pub fn series(&self, name: &str) -> Option<&ObservableSeries> {
        self.observables.iter().find(|s| s.name == name)
    }

    pub fn jump_times(&self, channel: Channel) -> Vec<f64> {
        self.jumps.iter().flatten().filter(|j| j.channel == channel).map(|j| j.time).collect()
    }

    /// Jump-time histogram over the sampled window with `bins` equal bins.
    pub fn histogram(&self, channel: Channel, bins: usize) -> JumpHistogram {
        let (t0, t1) = (self.times[0], *self.times.last().unwrap());
        let bins = bins.max(1);
        let w = (t1 - t0) / bins as f64;
        let edges = (0..=bins).map(|k| t0 + w * k as f64).collect();
        let mut counts = vec![0; bins];
        for t in self.jump_times(channel) {
            if w > 0.0 {
                counts[(((t - t0) / w) as usize).min(bins - 1)] += 1;
            }
        }
        JumpHistogram { channel, edges, counts }
    }

    pub fn pair_delays(&self, pair: Pair) -> DelayStatistics {
        pair_delays(&self.jumps, pair)
    }
}

/// Delays within and between photon–partner pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayStatistics {
    /// Time from the first to the second quantum of each completed pair.
    pub intra: Vec<f64>,
    /// Time from the end of one pair to the start of the next, within a trajectory.
    pub inter: Vec<f64>,
    /// Mode jumps that could not be paired.
    pub unpaired: usize,
}

impl DelayStatistics {
    pub fn fraction_intra_below(&self, cutoff: f64) -> f64 {
        if self.intra.is_empty() {
            return f64::NAN;
        }
        self.intra.iter().filter(|&&d| d < cutoff).count() as f64 / self.intra.len() as f64
    }
}

/// Pairs successive photon and partner jumps greedily in time order; atom
/// jumps and the third mode are ignored.
pub fn pair_delays(jumps: &[Vec<JumpEvent>], pair: Pair) -> DelayStatistics {
    let partner = Channel::of_mode(pair.partner());
    let mut out = DelayStatistics { intra: Vec::new(), inter: Vec::new(), unpaired: 0 };
    for record in jumps {
        let mut pending: Option<JumpEvent> = None;
        let mut last_end: Option<f64> = None;
        for j in record.iter().filter(|j| j.channel == Channel::Photon || j.channel == partner) {
            match pending {
                Some(p) if p.channel != j.channel => {
                    out.intra.push(j.time - p.time);
                    if let Some(e) = last_end {
                        out.inter.push(p.time - e);
                    }
                    last_end = Some(j.time);
                    pending = None;
                }
                Some(_) => {
                    out.unpaired += 1;
                    pending = Some(*j);
                }
                None => pending = Some(*j),
            }
        }
        out.unpaired += pending.is_some() as usize;
    }
    out
}

/// Label of a dressed product state `|n_a n_b n_m, level⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct DressedLabel {
    pub na: usize,
    pub nb: usize,
    pub nm: usize,
    pub level: DressedLevel,
}

/// |⟨n_a n_b n_m ±|ψ⟩|² for every retained Fock label, ordered by (n_a, n_b, n_m) then +, −.
pub fn dressed_populations(psi: &StateVector, dressed: &DressedPair) -> Vec<(DressedLabel, f64)> {
    let s = psi.space();
    let amp = psi.amplitudes();
    let mut out = Vec::with_capacity(s.dim());
    for na in 0..=s.photon_cutoff() {
        for nb in 0..=s.phonon_cutoff() {
            for nm in 0..=s.magnon_cutoff() {
                let at = |atom| amp[s.index(BasisLabel { atom, na, nb, nm }).expect("label within cutoffs")];
                let (g, e) = (at(AtomLevel::Ground), at(AtomLevel::Excited));
                for level in [DressedLevel::Plus, DressedLevel::Minus] {
                    let (cg, ce) = dressed.amplitudes(level);
                    out.push((DressedLabel { na, nb, nm, level }, (g * cg + e * ce).norm_sqr()));
                }
            }
        }
    }
    out
}

/// Single dressed population.
pub fn dressed_population(psi: &StateVector, dressed: &DressedPair, label: DressedLabel) -> Result<f64> {
    let s = psi.space();
    let amp = psi.amplitudes();
    let g = amp[s.index(BasisLabel { atom: AtomLevel::Ground, na: label.na, nb: label.nb, nm: label.nm })?];
    let e = amp[s.index(BasisLabel { atom: AtomLevel::Excited, na: label.na, nb: label.nb, nm: label.nm })?];
    let (cg, ce) = dressed.amplitudes(label.level);
    Ok((g * cg + e * ce).norm_sqr())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn kolmogorov_smirnov(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if samples.is_empty() || samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("KS test needs finite samples".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs.iter().enumerate().fold(0.0f64, |acc, (i, &x)| {
        let f = cdf(x);
        acc.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    });
    let sq = n.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    Ok(KsResult { statistic: d, p_value: kolmogorov_q(lambda) })
}

/// Q_KS(λ) = 2 Σ_{j≥1} (−1)^{j−1} exp(−2 j² λ²).
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
