use nalgebra::{DMatrix, DVector};

use super::Liouvillian;
use crate::hilbert::{hermitian_part, DensityMatrix, Operator, QuantumState, StateVector};
use crate::linalg::eigh;
use crate::{Error, Result, C64};

/// States sampled on a time grid plus named real expectation series.
#[derive(Debug, Clone)]
pub struct EvolutionRecord<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    pub observables: Vec<(String, Vec<f64>)>,
}

impl<S: QuantumState> EvolutionRecord<S> {
    /// Appends the series Re⟨op⟩(t).
    pub fn observe(&mut self, name: &str, op: &Operator) -> Result<&[f64]> {
        let v = self.states.iter().map(|s| s.expect(op).map(|z| z.re)).collect::<Result<Vec<_>>>()?;
        self.observables.push((name.to_string(), v));
        Ok(&self.observables.last().unwrap().1)
    }

    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.observables.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("empty time grid".into()));
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("time grid must be finite, nonnegative and nondecreasing".into()));
    }
    Ok(())
}

/// Exact Schrödinger evolution through the spectral decomposition of H.
pub fn evolve_closed(psi0: &StateVector, h: &Operator, times: &[f64]) -> Result<EvolutionRecord<StateVector>> {
    check_times(times)?;
    if psi0.space() != h.space() {
        return Err(Error::SpaceMismatch);
    }
    if (psi0.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidState(format!("initial state has norm {}", psi0.norm())));
    }
    let (vals, vecs) = eigh(&h.to_dense());
    let coeff = vecs.adjoint() * psi0.amplitudes();
    let mut states = Vec::with_capacity(times.len());
    for &t in times {
        let phased = DVector::from_fn(vals.len(), |k, _| coeff[k] * C64::from_polar(1.0, -vals[k] * t));
        states.push(StateVector::new(*psi0.space(), &vecs * phased)?);
    }
    Ok(EvolutionRecord { times: times.to_vec(), states, observables: Vec::new() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpenOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OpenOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, max_steps: 50_000_000 }
    }
}

pub fn evolve_open(rho0: &DensityMatrix, l: &Liouvillian, times: &[f64]) -> Result<EvolutionRecord<DensityMatrix>> {
    evolve_open_with(rho0, l, times, &OpenOptions::default())
}

/// Master-equation evolution sampled on `times` (t = 0 is `rho0`).
pub fn evolve_open_with(rho0: &DensityMatrix, l: &Liouvillian, times: &[f64], opts: &OpenOptions) -> Result<EvolutionRecord<DensityMatrix>> {
    if rho0.space() != l.space() {
        return Err(Error::SpaceMismatch);
    }
    rho0.validate()?;
    let raw = propagate_operator(l, rho0.matrix(), times, opts)?;
    let states = raw.into_iter().map(|m| DensityMatrix::new(*l.space(), hermitian_part(&m))).collect::<Result<Vec<_>>>()?;
    Ok(EvolutionRecord { times: times.to_vec(), states, observables: Vec::new() })
}

// Dormand–Prince 5(4) tableau; the generator is time independent so the nodes are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates dX/dt = L(X) for an arbitrary (not necessarily physical) X,
/// returning X at each requested time.
pub fn propagate_operator(l: &Liouvillian, x0: &DMatrix<C64>, times: &[f64], opts: &OpenOptions) -> Result<Vec<DMatrix<C64>>> {
    check_times(times)?;
    let d = l.space().dim();
    if x0.nrows() != d || x0.ncols() != d {
        return Err(Error::InvalidArgument("initial operator has the wrong shape".into()));
    }
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut y = x0.clone();
    let mut k1 = l.apply(&y);
    let scale0 = l.k().norm_inf() * 2.0 + l.jumps().iter().map(|(c, _)| c.norm_inf().powi(2)).sum::<f64>();
    let mut h = if scale0 > 0.0 { 0.5 / scale0 } else { 1.0 };
    let mut steps = 0usize;
    for &target in times {
        while t < target {
            if steps >= opts.max_steps {
                return Err(Error::Integrator(format!("step budget exhausted at t = {t}")));
            }
            let last = target - t <= h * (1.0 + 1e-12);
            let hs = if last { target - t } else { h };
            if hs <= 1e-14 * t.abs().max(1.0) && !last {
                return Err(Error::Integrator(format!("step size underflow at t = {t}")));
            }
            let mut ks: Vec<DMatrix<C64>> = Vec::with_capacity(7);
            ks.push(k1.clone());
            for s in 1..7 {
                let mut ys = y.clone();
                for (j, kj) in ks.iter().enumerate() {
                    if A[s][j] != 0.0 {
                        ys += kj * C64::new(hs * A[s][j], 0.0);
                    }
                }
                if s == 6 {
                    ks.push(l.apply(&ys));
                    // ys is the fifth-order solution.
                    let mut err = DMatrix::<C64>::zeros(d, d);
                    for (j, kj) in ks.iter().enumerate() {
                        if E[j] != 0.0 {
                            err += kj * C64::new(hs * E[j], 0.0);
                        }
                    }
                    let mut acc = 0.0;
                    for (e, (a, b)) in err.iter().zip(y.iter().zip(ys.iter())) {
                        let sc = opts.atol + opts.rtol * a.norm().max(b.norm());
                        acc += (e.norm() / sc).powi(2);
                    }
                    let en = (acc / (d * d) as f64).sqrt();
                    if !en.is_finite() {
                        return Err(Error::Integrator(format!("non-finite error estimate at t = {t}")));
                    }
                    steps += 1;
                    let factor = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
                    if en <= 1.0 {
                        t = if last { target } else { t + hs };
                        y = ys;
                        k1 = ks.pop().unwrap();
                        if !last || factor < 1.0 {
                            h = hs * factor;
                        }
                    } else {
                        h = hs * factor.min(1.0);
                    }
                    break;
                }
                ks.push(l.apply(&ys));
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{build_space, AtomLevel, BasisLabel, Mode};
    use crate::liouvillian::{build_liouvillian, steady_state};
    use crate::model::SystemOperators;

    fn label(atom: AtomLevel, na: usize) -> BasisLabel {
        BasisLabel { atom, na, nb: 0, nm: 0 }
    }

    #[test]
    fn rabi_oscillation() {
        let s = build_space(1, 1, 1).unwrap();
        let ops = SystemOperators::new(&s);
        let xi = 0.37;
        let h = &(&ops.sigma + &ops.sigma.dag()) * xi;
        let g = StateVector::basis(&s, label(AtomLevel::Ground, 0)).unwrap();
        let times: Vec<f64> = (0..200).map(|k| k as f64 * 0.173).collect();
        let mut rec = evolve_closed(&g, &h, &times).unwrap();
        let pe = rec.observe("pe", &ops.excited_projector()).unwrap().to_vec();
        for (t, p) in times.iter().zip(pe) {
            assert!((p - (xi * t).sin().powi(2)).abs() < 1e-8);
        }
        assert!(rec.states.iter().all(|s| (s.norm() - 1.0).abs() < 1e-8));
    }

    #[test]
    fn zero_hamiltonian_is_constant() {
        let s = build_space(1, 1, 1).unwrap();
        let psi = StateVector::basis(&s, label(AtomLevel::Excited, 1)).unwrap();
        let rec = evolve_closed(&psi, &Operator::zero(&s), &[0.0, 1.0, 50.0]).unwrap();
        assert!(rec.states.iter().all(|x| (x.amplitudes() - psi.amplitudes()).norm() < 1e-14));
        let l = build_liouvillian(&Operator::zero(&s), &[]).unwrap();
        let rec = evolve_open(&psi.to_density(), &l, &[0.0, 3.0]).unwrap();
        assert!((rec.states[1].matrix() - psi.to_density().matrix()).norm() < 1e-14);
    }

    #[test]
    fn cavity_decay_closed_form() {
        let s = build_space(3, 1, 1).unwrap();
        let ops = SystemOperators::new(&s);
        let kappa = 0.3;
        let h = &ops.number(Mode::Photon) * 0.9;
        let l = build_liouvillian(&h, &[(ops.a.clone(), kappa)]).unwrap();
        let one = StateVector::basis(&s, label(AtomLevel::Ground, 1)).unwrap().to_density();
        let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.5).collect();
        let mut rec = evolve_open(&one, &l, &times).unwrap();
        let n = rec.observe("n", &ops.number(Mode::Photon)).unwrap().to_vec();
        for (t, v) in times.iter().zip(n) {
            assert!((v - (-kappa * t).exp()).abs() < 1e-7, "{t} {v}");
        }
        assert!(rec.states.iter().all(|r| (r.trace().re - 1.0).abs() < 1e-8));
    }

    #[test]
    fn long_time_limit_reaches_steady_state() {
        let s = build_space(1, 1, 1).unwrap();
        let p = crate::model::ModelParams::reference().with_kappa(0.4).with_delta_ad(0.5);
        let mut p = p;
        p.gamma = 0.3;
        let l = crate::liouvillian::model_liouvillian(&p, &s).unwrap();
        let g = StateVector::basis(&s, label(AtomLevel::Ground, 0)).unwrap().to_density();
        let rec = evolve_open(&g, &l, &[0.0, 200.0]).unwrap();
        let ss = steady_state(&l).unwrap();
        assert!(rec.states[1].trace_distance(&ss).unwrap() < 1e-6);
    }
}
