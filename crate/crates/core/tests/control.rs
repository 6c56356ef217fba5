mod common;

use std::time::Instant;

use biharmonic::coeffs::ProfileSpec;
use biharmonic::control::{
    hum_operator, moments_for_null, relative_l2_difference, synthesize_hum_control, synthesize_moment_control,
    ControlOptions, Method,
};
use biharmonic::dynamics::{evolve_controlled, sobolev_norm, ModalState};
use biharmonic::eigen::SpectralData;
use biharmonic::observability::{boundary_output, gram, hermitian_extremes, quadratic_form};
use biharmonic::{Complex64, Error};
use common::*;
use proptest::prelude::*;

fn two_mode_state(s: &SpectralData, n: usize) -> ModalState {
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    c[0] = Complex64::new(1.0, 0.0);
    c[1] = Complex64::new(1.0, 0.0);
    ModalState::new(s, c).unwrap()
}

fn rel_state(a: &ModalState, b: &[Complex64]) -> f64 {
    let diff = ModalState {
        coefficients: a.coefficients.iter().zip(b).map(|(x, y)| x - y).collect(),
        ..a.clone()
    };
    let reference = ModalState { coefficients: b.to_vec(), ..a.clone() };
    sobolev_norm(&diff, -0.5) / sobolev_norm(&reference, -0.5)
}

#[test]
fn single_mode_control_is_scalar_moment() {
    let s = spectrum(&unit_spec(), 256, 12);
    let state = ModalState::new(&s, vec![Complex64::new(0.3, -1.2)]).unwrap();
    let sol = synthesize_moment_control(&state, &s, 1.0, 0.8, &ControlOptions::default()).unwrap();
    let m = moments_for_null(&state, &s, 1.0).unwrap().values[0];
    assert!((sol.beta[0] - m / 0.8).norm() <= 1e-15 * m.norm());
    assert!(sol.residual_final <= 1e-12);
    let lam = hum_operator(&s, 0.8, 1, 1.0).unwrap();
    let expected = s.traces[0].powi(2) * 0.8;
    assert!((lam[(0, 0)].re - expected).abs() <= 1e-14 * expected && lam[(0, 0)].im == 0.0);
}

#[test]
fn two_mode_datum_is_steered_to_rest() {
    for spec in [unit_spec(), variable_spec()] {
        let s = spectrum(&spec, 512, 12);
        let sigma = s.sigma_end();
        let state = two_mode_state(&s, 12);
        let start = Instant::now();
        let moment = synthesize_moment_control(&state, &s, sigma, 0.5, &ControlOptions::default()).unwrap();
        let hum = synthesize_hum_control(&state, &s, sigma, 0.5, &ControlOptions::default()).unwrap();
        assert!(start.elapsed().as_secs_f64() < 10.0);
        assert!(moment.residual_final <= 1e-8, "{}", moment.residual_final);
        assert!(hum.residual_final <= 1e-8, "{}", hum.residual_final);
        assert_eq!((moment.method, hum.method), (Method::Moment, Method::Hum));
        assert!(relative_l2_difference(&hum, &moment).unwrap() <= 1e-8);
        assert!(hum.cg.as_ref().unwrap().converged);
    }
}

#[test]
fn first_mode_only_hum() {
    let s = spectrum(&unit_spec(), 512, 12);
    let mut c = vec![Complex64::new(0.0, 0.0); 12];
    c[0] = Complex64::new(1.0, 0.0);
    let state = ModalState::new(&s, c).unwrap();
    let hum = synthesize_hum_control(&state, &s, 1.0, 0.5, &ControlOptions::default()).unwrap();
    assert!(hum.residual_final <= 1e-8);
}

#[test]
fn random_data_across_horizons() {
    let s = spectrum(&variable_spec(), 512, 15);
    let sigma = s.sigma_end();
    let mut r = rng(21);
    for horizon in [0.25, 0.5, 1.0] {
        for _ in 0..4 {
            let state = ModalState::new(&s, random_complex(&mut r, 15)).unwrap();
            let m = synthesize_moment_control(&state, &s, sigma, horizon, &ControlOptions::default()).unwrap();
            let h = synthesize_hum_control(&state, &s, sigma, horizon, &ControlOptions::default()).unwrap();
            assert!(m.residual_final <= 1e-8 && h.residual_final <= 1e-8);
            assert!(relative_l2_difference(&h, &m).unwrap() <= 1e-8);
        }
    }
}

#[test]
fn zero_state_needs_no_control() {
    let s = spectrum(&unit_spec(), 256, 12);
    let state = ModalState::zero(&s, 12).unwrap();
    let m = synthesize_moment_control(&state, &s, 1.0, 0.5, &ControlOptions::default()).unwrap();
    let h = synthesize_hum_control(&state, &s, 1.0, 0.5, &ControlOptions::default()).unwrap();
    assert!(m.beta.iter().chain(&h.beta).all(|b| b.norm() == 0.0));
    assert!(h.hum_datum.unwrap().iter().all(|c| c.norm() == 0.0));
    assert_eq!((m.control_norm, m.residual_final), (0.0, 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn controls_are_linear_in_data(seed in any::<u64>(), scale in -3.0f64..3.0) {
        let s = spectrum(&unit_spec(), 256, 12);
        let mut r = rng(seed);
        let (a, b) = (random_complex(&mut r, 12), random_complex(&mut r, 12));
        let sum: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * scale + y).collect();
        let opts = ControlOptions::default();
        let solve = |c: Vec<Complex64>| {
            synthesize_moment_control(&ModalState::new(&s, c).unwrap(), &s, 1.0, 0.5, &opts).unwrap()
        };
        let (fa, fb, fs) = (solve(a), solve(b), solve(sum));
        let combined: Vec<Complex64> = fa.beta.iter().zip(&fb.beta).map(|(x, y)| x * scale + y).collect();
        let g = gram(&fs.frequencies, 0.5, None).unwrap();
        let diff: Vec<Complex64> = combined.iter().zip(&fs.beta).map(|(x, y)| x - y).collect();
        prop_assert!(g.energy(&diff).sqrt() <= 1e-10 * g.energy(&fs.beta).sqrt());
        let m = moments_for_null(&ModalState::new(&s, fa.moments.clone()).unwrap(), &s, 1.0).unwrap();
        prop_assert_eq!(m.values.len(), 12);
    }

    #[test]
    fn longer_horizon_never_costs_more(seed in any::<u64>(), horizon in 0.25f64..1.0) {
        let s = spectrum(&variable_spec(), 256, 12);
        let state = ModalState::new(&s, random_complex(&mut rng(seed), 12)).unwrap();
        let opts = ControlOptions::default();
        let short = synthesize_moment_control(&state, &s, s.sigma_end(), horizon, &opts).unwrap();
        let long = synthesize_moment_control(&state, &s, s.sigma_end(), 2.0 * horizon, &opts).unwrap();
        prop_assert!(long.control_norm <= short.control_norm * (1.0 + 1e-10));
    }
}

#[test]
fn moments_scale_with_data() {
    let s = spectrum(&unit_spec(), 256, 12);
    let c = random_complex(&mut rng(2), 12);
    let base = moments_for_null(&ModalState::new(&s, c.clone()).unwrap(), &s, 1.0).unwrap();
    let scaled = moments_for_null(&ModalState::new(&s, c.iter().map(|x| x * 2.5).collect()).unwrap(), &s, 1.0).unwrap();
    for (a, b) in base.values.iter().zip(&scaled.values) {
        assert!((b - a * 2.5).norm() <= 1e-15 * b.norm());
    }
    assert!(base.excluded.is_empty());
    assert!(moments_for_null(&ModalState::new(&s, c).unwrap(), &s, 0.0).is_err());
}

#[test]
fn control_norm_matches_quadrature() {
    // long beam keeps the integrand resolvable by brute force
    let s = spectrum(&ProfileSpec::constant(4.0, 1.0, 1.0, 0.0), 128, 12);
    let state = ModalState::new(&s, random_complex(&mut rng(8), 12)).unwrap();
    let sol = synthesize_moment_control(&state, &s, 1.0, 1.0, &ControlOptions::default()).unwrap();
    let f = sol.control();
    let panels = (s.lambdas[11] * 1.0) as usize + 64;
    let oracle = fine_integral(1.0, panels, |t| f.eval(t).norm_sqr()).sqrt();
    assert!((sol.control_norm - oracle).abs() <= 1e-10 * oracle);
    let g = gram(&sol.frequencies, 1.0, None).unwrap();
    assert!((quadratic_form(&g.g, &sol.beta).sqrt() - sol.control_norm).abs() <= 1e-14 * oracle);
}

#[test]
fn hum_operator_is_positive_and_matches_output_energy() {
    let s = spectrum(&unit_spec(), 512, 12);
    let lam = hum_operator(&s, 0.5, 12, 1.0).unwrap();
    assert!(hermitian_extremes(&lam).0 > 0.0);
    let long = spectrum(&ProfileSpec::constant(4.0, 1.0, 1.0, 0.0), 128, 12);
    let sigma = 1.0;
    let lam = hum_operator(&long, 1.0, 12, sigma).unwrap();
    let mut r = rng(4);
    for _ in 0..5 {
        let c = random_complex(&mut r, 12);
        let state = ModalState::new(&long, c.clone()).unwrap();
        let panels = (long.lambdas[11]) as usize + 64;
        let oracle = sigma * fine_integral(1.0, panels, |t| boundary_output(&state, &long, t).unwrap().norm_sqr());
        let q = quadratic_form(&lam, &c);
        assert!((q - oracle).abs() <= 1e-10 * oracle, "{q} vs {oracle}");
    }
}

#[test]
fn time_reversed_control_steers_from_rest() {
    let s = spectrum(&variable_spec(), 512, 12);
    let sigma = s.sigma_end();
    let horizon = 0.5;
    let state = ModalState::new(&s, random_complex(&mut rng(13), 12)).unwrap();
    let sol = synthesize_moment_control(&state, &s, sigma, horizon, &ControlOptions::default()).unwrap();
    let rest = ModalState::zero(&s, 12).unwrap();
    // the reversed, conjugated control reaches the conjugate datum
    let reached = evolve_controlled(&rest, &s, sigma, &sol.time_reversed(), horizon).unwrap();
    let target: Vec<Complex64> = state.coefficients.iter().map(|c| c.conj()).collect();
    assert!(rel_state(&reached, &target) <= 1e-8);
    // the original control applied from rest reaches −e^{iλT}a(0)
    let forward = evolve_controlled(&rest, &s, sigma, &sol.control(), horizon).unwrap();
    let target: Vec<Complex64> = state
        .coefficients
        .iter()
        .zip(&s.lambdas)
        .map(|(c, &l)| -c * Complex64::from_polar(1.0, l * horizon))
        .collect();
    assert!(rel_state(&forward, &target) <= 1e-8);
}

#[test]
fn refuses_ill_conditioned_gram() {
    let s = spectrum(&unit_spec(), 256, 12);
    let state = two_mode_state(&s, 12);
    let opts = ControlOptions { gram_cap: 1.0001, ..ControlOptions::default() };
    for result in [
        synthesize_moment_control(&state, &s, 1.0, 0.5, &opts),
        synthesize_hum_control(&state, &s, 1.0, 0.5, &opts),
    ] {
        match result {
            Err(e @ Error::Conditioning { .. }) => assert!(e.to_string().contains("increase T or decrease N")),
            other => panic!("expected refusal, got {other:?}"),
        }
    }
    // a horizon far below the fastest period leaves the exponentials nearly collinear
    let tiny = synthesize_moment_control(&state, &s, 1.0, 1e-7, &ControlOptions::default());
    assert!(matches!(tiny, Err(Error::Conditioning { .. })), "{tiny:?}");
    assert!(synthesize_moment_control(&state, &s, 1.0, 0.0, &ControlOptions::default()).is_err());
}

#[test]
fn waveform_samples_control() {
    let s = spectrum(&unit_spec(), 256, 12);
    let sol = synthesize_moment_control(&two_mode_state(&s, 12), &s, 1.0, 0.5, &ControlOptions::default()).unwrap();
    let w = sol.waveform(11);
    assert_eq!(w.len(), 11);
    assert_eq!((w[0].0, w[10].0), (0.0, 0.5));
    assert_eq!(w[3].1, sol.control().eval(w[3].0));
}
