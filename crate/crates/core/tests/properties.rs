use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sixbq::control::{dual_basis, ControlConfig, ControlSynthesizer};
use sixbq::data::{random_admissible, random_smooth};
use sixbq::linear::{build_basis, project_state, reconstruct, w_group};
use sixbq::nonlinear::{evolve, EvolveOptions};
use sixbq::spectral::{
    from_grid, to_grid, xs_norm, Beta, FourierField, GOperator, GProfile, NormConvention, SobolevIndex, StateVector, C64,
};
use sixbq::stabilization::{decay_fit, energy, evolve_closed_loop, mean_shift_transform, ClosedLoopOptions};
use sixbq::linear::LinearSymbol;

fn beta() -> impl Strategy<Value = Beta> {
    prop_oneof![Just(Beta::Plus), Just(Beta::Minus)]
}

fn field(n: usize) -> impl Strategy<Value = FourierField> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2 * n + 1)
        .prop_map(move |v| FourierField::from_coeffs(n, v.into_iter().map(|(a, b)| C64::new(a, b)).collect()).unwrap())
}

fn real_state(n: usize, beta: Beta, seed: u64, mean: f64) -> StateVector {
    random_smooth(n, beta, 1.0, 2.0, mean, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Nonnegative `g = (1 + a cos(kx) + b sin(kx))/2π` with `a² + b² ≤ 1`.
fn profile() -> impl Strategy<Value = GProfile> {
    (1i64..4, 0.0f64..1.0, 0.0f64..std::f64::consts::TAU).prop_map(|(k, r, th)| {
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut f = FourierField::constant(k as usize, 1.0 / two_pi);
        let c = C64::from_polar(r / (2.0 * two_pi), th);
        f.set(k, c);
        f.set(-k, c.conj());
        GProfile::custom(f).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_round_trip(n in 1usize..20, seed in any::<u64>()) {
        let w = real_state(n, Beta::Plus, seed, 0.3);
        let back = from_grid(&to_grid(&w.u, 2 * n + 1).unwrap(), n).unwrap();
        prop_assert!((&back - &w.u).max_abs() < 1e-13 * w.u.max_abs().max(1.0));
    }

    #[test]
    fn g_output_mean_free_and_self_adjoint(g in profile(), (f, h) in (1usize..12).prop_flat_map(|n| (field(n), field(n)))) {
        let gop = GOperator::new(&g, f.max_mode()).unwrap();
        let (gf, gh) = (gop.apply(&f).unwrap(), gop.apply(&h).unwrap());
        prop_assert!(gf.coeff(0).norm() < 1e-14);
        let scale = (f.norm_sqr() * h.norm_sqr()).sqrt();
        prop_assert!((gf.inner(&h).unwrap() - f.inner(&gh).unwrap()).norm() < 1e-13 * scale);
        // Positive semidefinite: ⟨Gf, f⟩ ≥ 0.
        prop_assert!(gf.inner(&f).unwrap().re > -1e-14 * f.norm_sqr());
    }

    #[test]
    fn group_law_and_norm_conservation(b in beta(), seed in any::<u64>(), s in 0.0f64..3.0, t1 in -2.0f64..2.0, t2 in -2.0f64..2.0) {
        let mut w = real_state(8, b, seed, 0.0);
        w.v.set(0, C64::new(0.0, 0.0));
        let lhs = w_group(&w_group(&w, t1, b), t2, b);
        let rhs = w_group(&w, t1 + t2, b);
        prop_assert!((&lhs.u - &rhs.u).max_abs() + (&lhs.v - &rhs.v).max_abs() < 1e-12);
        let s = SobolevIndex::new(s).unwrap();
        let n0 = xs_norm(&w, s, NormConvention::Equivalent, b);
        let n1 = xs_norm(&w_group(&w, t1, b), s, NormConvention::Equivalent, b);
        prop_assert!((n1 - n0).abs() < 1e-12 * n0);
    }

    #[test]
    fn projection_round_trip(b in beta(), seed in any::<u64>(), s in 0.0f64..2.0, mean in -1.0f64..1.0) {
        let basis = build_basis(6, b, SobolevIndex::new(s).unwrap()).unwrap();
        let w = real_state(6, b, seed, mean);
        let back = reconstruct(&project_state(&w, &basis).unwrap(), &basis).unwrap();
        prop_assert!((&back.u - &w.u).max_abs() + (&back.v - &w.v).max_abs() < 1e-12);
    }

    #[test]
    fn energy_is_nonnegative(b in beta(), seed in any::<u64>(), mean in -1.0f64..1.0) {
        let w = real_state(10, b, seed, mean);
        prop_assert!(energy(&w, &LinearSymbol::standard(b)) >= 0.0);
    }

    #[test]
    fn fit_recovers_exponential(gamma in -3.0f64..3.0, c in 0.1f64..10.0) {
        let t: Vec<f64> = (0..40).map(|i| i as f64 * 0.05).collect();
        let y: Vec<f64> = t.iter().map(|t| c * (-gamma * t).exp()).collect();
        let f = decay_fit(&t, &y, (0.0, 2.0)).unwrap();
        prop_assert!((f.gamma_hat - gamma).abs() < 1e-10);
        prop_assert!((0.0..=1.0).contains(&f.r_squared));
    }

    #[test]
    fn mean_shift_removes_mean(eta in -2.0f64..2.0, seed in any::<u64>()) {
        let w = real_state(5, Beta::Plus, seed, eta);
        let m = mean_shift_transform(&w, Beta::Plus);
        prop_assert!((m.eta - eta).abs() < 1e-15);
        prop_assert!(m.shifted.u.coeff(0).norm() < 1e-15);
        prop_assert!((m.symbol.k2_coeff - (1.0 - 2.0 * eta)).abs() < 1e-15);
        prop_assert_eq!(m.warning.is_some(), 1.0 - 2.0 * eta <= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn dual_basis_is_biorthogonal(b in beta(), t in 0.5f64..3.0, n in 1usize..8) {
        let basis = build_basis(n, b, SobolevIndex::ZERO).unwrap();
        let db = dual_basis(t, &basis.frequencies(), 1e12).unwrap();
        prop_assert!(db.duality_residual < 1e-9, "{}", db.duality_residual);
    }

    #[test]
    fn closed_loop_dissipates_and_keeps_means(b in beta(), g in profile(), gain in 0.1f64..4.0, seed in any::<u64>(), mean in -0.5f64..0.5) {
        let w = real_state(4, b, seed, mean);
        let (traj, series) = evolve_closed_loop(&w, &g, &ClosedLoopOptions::new(gain, 2.0, 1e-2, b)).unwrap();
        prop_assert!(series.max_increase() <= 1e-12 * series.energy[0]);
        for s in &traj.states {
            prop_assert!(s.v.coeff(0).norm() < 1e-12);
            prop_assert!((s.u.coeff(0).re - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn nonlinear_flow_stays_real(b in beta(), seed in any::<u64>()) {
        let w = random_smooth(8, b, 1e-2, 2.0, 0.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let ev = evolve(&w, &GProfile::raised_cosine(), None, &EvolveOptions::new(0.5, 1e-3, b)).unwrap();
        prop_assert!(ev.trajectory.is_real(1e-14));
    }

    #[test]
    fn control_map_is_linear(b in beta(), seed in any::<u64>(), c1 in -2.0f64..2.0, c2 in -2.0f64..2.0) {
        let syn = ControlSynthesizer::new(&ControlConfig::new(1.0, b), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || random_admissible(4, b, SobolevIndex::ZERO, 1.0, 0.0, &mut rng).unwrap();
        let (a0, a1, b0, b1) = (draw(), draw(), draw(), draw());
        let (ha, _) = syn.synthesize(&a0, &a1).unwrap();
        let (hb, _) = syn.synthesize(&b0, &b1).unwrap();
        let (hc, _) = syn
            .synthesize(&(&a0.scale(c1) + &b0.scale(c2)), &(&a1.scale(c1) + &b1.scale(c2)))
            .unwrap();
        for t in [0.0, 0.37, 1.0] {
            let lhs = hc.eval(t);
            let rhs = &ha.eval(t).scale(c1) + &hb.eval(t).scale(c2);
            prop_assert!((&lhs - &rhs).max_abs() < 1e-10 * (1.0 + rhs.max_abs()));
        }
    }
}
