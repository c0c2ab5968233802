use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use tightbind::classical::{ClassicalModel, ClassicalState};
use tightbind::drive::DriveProtocol;
use tightbind::floquet::invariant_on_state;
use tightbind::lattice::{coherence_parameters, LatticeState, Window};
use tightbind::observables::{expect_n, expect_n_polar, variance_n, variance_n_polar};
use tightbind::propagator::{bloch_phase, element, evolve, EvolveOptions, Method};
use tightbind::Exec;

fn protocol() -> impl Strategy<Value = DriveProtocol> {
    let g0 = 0.05..1.0f64;
    let f0 = -1.5..1.5f64;
    prop_oneof![
        (f0.clone(), g0.clone()).prop_map(|(f0, g0)| DriveProtocol::dc(f0, g0).unwrap()),
        (f0.clone(), 0.0..3.0f64, 0.3..2.5f64, g0.clone())
            .prop_map(|(f0, f1, w, g0)| DriveProtocol::harmonic(f0, f1, w, g0).unwrap()),
        (f0, prop::collection::vec(-1.5..1.5f64, 1..4), 0.3..2.5f64, g0)
            .prop_map(|(f0, modes, w, g0)| DriveProtocol::fourier(f0, modes, w, g0).unwrap()),
    ]
}

/// Random state supported on `[−6, 6]` inside a 65-site window.
fn state() -> impl Strategy<Value = LatticeState> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 13).prop_filter_map("zero norm", |pairs| {
        let window = Window::centered(32);
        let amps = window
            .sites()
            .map(|n| {
                if n.abs() <= 6 {
                    let (re, im) = pairs[(n + 6) as usize];
                    Complex64::new(re, im)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        LatticeState::normalized(window, amps).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rows_are_normalised(p in protocol(), t in 0.0..30.0f64, n in -10i64..10) {
        let row: f64 = (n - 60..=n + 60).map(|np| element(&p, t, n, np).unwrap().norm_sqr()).sum();
        prop_assert!((row - 1.0).abs() < 1e-10);
    }

    #[test]
    fn chi_matches_uv(p in protocol(), t in 0.0..30.0f64) {
        let (u, v) = p.uv(t);
        let chi = p.chi(t);
        prop_assert!((2.0 * chi - Complex64::new(u, -v)).norm() < 1e-9 * (1.0 + chi.norm()));
    }

    #[test]
    fn bloch_phase_is_unimodular(p in protocol(), t in 0.0..30.0f64, k in -PI..PI) {
        prop_assert!((bloch_phase(&p, t, k).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn evolution_preserves_norm(p in protocol(), s in state(), t in 0.0..8.0f64) {
        let out = evolve(&s, &p, t, &EvolveOptions::default()).unwrap();
        prop_assert!((out.state.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn site_and_bloch_paths_agree(p in protocol(), s in state(), t in 0.0..8.0f64) {
        let site = evolve(&s, &p, t, &EvolveOptions::default()).unwrap();
        let bloch = evolve(&s, &p, t, &EvolveOptions::default().with_method(Method::Bloch)).unwrap();
        prop_assert!(site.state.max_deviation(&bloch.state) < 1e-12);
    }

    #[test]
    fn moment_forms_agree(p in protocol(), s in state(), t in 0.0..30.0f64) {
        let coh = coherence_parameters(&s);
        let scale = 1.0 + p.chi(t).norm().powi(2);
        prop_assert!((expect_n(&coh, &p, t) - expect_n_polar(&coh, &p, t)).abs() < 1e-10 * scale);
        prop_assert!((variance_n(&coh, &p, t) - variance_n_polar(&coh, &p, t)).abs() < 1e-10 * scale);
    }

    #[test]
    fn closed_form_moments_match_evolved_state(p in protocol(), s in state(), t in 0.0..6.0f64) {
        let coh = coherence_parameters(&s);
        let out = evolve(&s, &p, t, &EvolveOptions::default()).unwrap();
        let (mean, var) = out.state.position_moments();
        prop_assert!((expect_n(&coh, &p, t) - mean).abs() < 1e-9);
        prop_assert!((variance_n(&coh, &p, t) - var).abs() < 1e-8);
    }

    #[test]
    fn variance_is_nonnegative(p in protocol(), s in state(), t in 0.0..100.0f64) {
        let coh = coherence_parameters(&s);
        prop_assert!(variance_n(&coh, &p, t) >= -1e-10);
    }

    #[test]
    fn invariant_is_conserved(p in protocol(), s in state(), t in 0.0..6.0f64) {
        let out = evolve(&s, &p, t, &EvolveOptions::default()).unwrap();
        let value = invariant_on_state(&out.state, &p, t);
        let n0 = s.position_moments().0;
        prop_assert!((value.k_form - n0).abs() < 1e-9);
        prop_assert!((value.cs_form - value.k_form).abs() < 1e-10);
    }

    #[test]
    fn classical_invariant_is_conserved(p in protocol(), q in -5.0..5.0f64, th in -PI..PI, t in 0.0..20.0f64) {
        let model = ClassicalModel::default();
        let s0 = ClassicalState { p: th, q };
        let st = model.trajectory(&s0, &p, t);
        prop_assert!((model.invariant(&st, &p, t) - q).abs() < 1e-9);
    }

    #[test]
    fn series_is_exec_independent(p in protocol(), s in state()) {
        use tightbind::observables::ObservableSeries;
        let coh = coherence_parameters(&s);
        let times: Vec<f64> = (0..40).map(|j| 0.25 * j as f64).collect();
        let a = ObservableSeries::compute(&coh, &p, &times, Exec::Sequential);
        let b = ObservableSeries::compute(&coh, &p, &times, Exec::Parallel);
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn variance_nonnegative_many_states(p in protocol(), s in state(), t in 0.0..50.0f64) {
        let coh = coherence_parameters(&s);
        prop_assert!(variance_n(&coh, &p, t) >= -1e-10);
        prop_assert!(coh.var_n() >= -1e-12);
    }
}
