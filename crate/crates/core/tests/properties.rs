use nalgebra::DMatrix;
use nrbundle::hilbert::build_space;
use nrbundle::liouvillian::model_liouvillian;
use nrbundle::model::{build_hamiltonian, resonance_detuning, DriveSide, ModelParams, ResonanceKind};
use nrbundle::C64;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = ModelParams> {
    (-4.0..-1.0f64, 0.8..1.2f64, 0.0..0.05f64, 0.0..0.1f64, 0.0..0.1f64, 0.0..0.5f64, 0.2..1.0f64, 0.5..2.0f64, 0.0..0.02f64).prop_map(
        |(dsa, wm, df, lab, lam, las, xi, dad, k)| ModelParams {
            delta_ad: dad,
            delta_sigma_a: dsa,
            omega_b: 1.0,
            omega_m: wm,
            delta_f: df,
            lambda_ab: lab,
            lambda_am: lam,
            lambda_a_sigma: las,
            xi,
            gamma: 0.001,
            kappa_a: k,
            kappa_b: k,
            kappa_m: k,
        },
    )
}

/// Root of the unsquared resonance condition by plain bisection.
fn bisect(p: &ModelParams, partner: f64, side: DriveSide) -> f64 {
    let shift = match side {
        DriveSide::Left => p.delta_f.abs(),
        DriveSide::Right => -p.delta_f.abs(),
    };
    let f = |x: f64| x + shift + partner - ((p.delta_sigma_a + x).powi(2) + 4.0 * p.xi * p.xi).sqrt();
    let (mut lo, mut hi) = (-100.0, 100.0);
    assert!(f(lo) < 0.0 && f(hi) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hamiltonian_is_hermitian(p in params(), left in any::<bool>()) {
        let p = p.with_side(if left { DriveSide::Left } else { DriveSide::Right });
        let s = build_space(2, 1, 1).unwrap();
        prop_assert!(build_hamiltonian(&p, &s).hermiticity_error() < 1e-14);
    }

    #[test]
    fn closed_form_matches_bisection(p in params(), left in any::<bool>(), magnon in any::<bool>()) {
        let side = if left { DriveSide::Left } else { DriveSide::Right };
        let (kind, partner) = if magnon { (ResonanceKind::PhotonMagnon, p.omega_m) } else { (ResonanceKind::PhotonPhonon, p.omega_b) };
        let x = resonance_detuning(kind, side, &p).unwrap();
        prop_assert!((x - bisect(&p, partner, side)).abs() < 1e-9);
    }

    #[test]
    fn generator_preserves_trace_and_hermiticity(p in params(), seed in any::<u64>()) {
        let s = build_space(1, 1, 1).unwrap();
        let l = model_liouvillian(&p, &s).unwrap();
        let d = s.dim();
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let g = DMatrix::from_fn(d, d, |_, _| C64::new(next(), next()));
        let rho = &g * g.adjoint();
        let out = l.apply(&rho);
        prop_assert!(out.trace().norm() < 1e-12);
        prop_assert!((&out - out.adjoint()).norm() < 1e-12);
    }
}
