//! Property tests for the model invariants.

use approx::assert_relative_eq;
use proptest::prelude::*;
use sfwm::analysis::{extract_mu_p, fit_loglog_slope, fit_quadratic};
use sfwm::counting::{expected_rates, power_for_singles, Experiment};
use sfwm::entanglement::{
    chsh_from_counts, fit_visibility, s_from_visibility, ChshCounts, EntangledSourceSpec, FringeScan,
};
use sfwm::fiber::{dispersion_d, FiberSpec, PumpSpec, MODEL_WINDOW_NM};
use sfwm::phase_matching::{delta_k, phase_matched_detuning, KModel, MismatchOptions, PhaseMismatch};
use sfwm::spectrum::{mu_p, pgr, spectrum_sweep, PairGain};
use sfwm::phase_matching::DetuningGrid;

fn fringe_grid() -> Vec<f64> {
    (0..=144).map(|k| -180.0 + 2.5 * k as f64).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dispersion_sign_follows_zero_gvd_wavelength(lambda in MODEL_WINDOW_NM.0..MODEL_WINDOW_NM.1) {
        let fiber = FiberSpec::smf28_paper(1.0);
        let d = dispersion_d(lambda, &fiber).unwrap();
        let side = lambda - fiber.lambda_zgvd_nm;
        prop_assume!(side.abs() > 1e-9);
        prop_assert_eq!(d.signum(), side.signum());
    }

    #[test]
    fn delta_k_is_even(nu in 0.0f64..5000.0, p in 0.01f64..20.0, l in 1.0f64..1000.0) {
        let (pump, fiber) = (PumpSpec::standard(p), FiberSpec::smf28_paper(l));
        prop_assert_eq!(delta_k(nu, &pump, &fiber).unwrap(), delta_k(-nu, &pump, &fiber).unwrap());
    }

    #[test]
    fn delta_k_increases_with_detuning(a in 0.0f64..4999.0, gap in 1e-3f64..1000.0, p in 0.01f64..20.0) {
        let (pump, fiber) = (PumpSpec::standard(p), FiberSpec::smf28_paper(10.0));
        let b = (a + gap).min(5000.0);
        prop_assert!(delta_k(b, &pump, &fiber).unwrap() > delta_k(a, &pump, &fiber).unwrap());
    }

    #[test]
    fn phase_matched_detuning_scales_as_sqrt_power(p in 0.1f64..20.0, alpha in 0.25f64..4.0) {
        let fiber = FiberSpec::smf28_paper(100.0);
        let r = phase_matched_detuning(&PumpSpec::standard(alpha * p), &fiber).unwrap()
            / phase_matched_detuning(&PumpSpec::standard(p), &fiber).unwrap();
        prop_assert!((r / alpha.sqrt() - 1.0).abs() < 0.01, "ratio {r} vs √α {}", alpha.sqrt());
    }

    #[test]
    fn truncated_mismatch_matches_exact_k(nu in 1.0f64..1000.0) {
        let pump = PumpSpec::standard(3.0);
        let fiber = FiberSpec::smf28_paper(10.0);
        let opts = |model| MismatchOptions { include_spm: false, model, ..MismatchOptions::default() };
        let t = PhaseMismatch::new(&pump, &fiber, opts(KModel::Truncated)).unwrap().eval(nu);
        let e = PhaseMismatch::new(&pump, &fiber, opts(KModel::Exact)).unwrap().eval(nu);
        prop_assert!((t - e).abs() <= 0.01 * e.abs());
    }

    #[test]
    fn mu_p_is_even(nu in 0.0f64..5000.0, l in 1.0f64..500.0) {
        let (pump, fiber) = (PumpSpec::standard(3.0), FiberSpec::smf28_paper(l));
        prop_assert_eq!(mu_p(nu, &pump, &fiber, 75.0).unwrap(), mu_p(-nu, &pump, &fiber, 75.0).unwrap());
    }

    #[test]
    fn normalized_spectrum_lies_in_unit_interval(l in 1.0f64..1000.0, p in 0.01f64..20.0) {
        let grid = DetuningGrid::uniform(-5000.0, 5000.0, 37.0).unwrap();
        let s = spectrum_sweep(&grid, &PumpSpec::standard(p), &FiberSpec::smf28_paper(l), 75.0).unwrap();
        prop_assert!(s.normalized().iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
    }

    #[test]
    fn pair_rate_is_quadratic_in_power_and_length(
        nu in 100.0f64..2000.0, p in 0.05f64..10.0, l in 1.0f64..300.0,
    ) {
        // the P² and L² prefactors are exact; SPM and L also enter sinc²
        let pump = PumpSpec::standard(p);
        let fiber = FiberSpec::smf28_paper(l);
        let sinc2 = |pump: &PumpSpec, fiber: &FiberSpec| PairGain::new(pump, fiber).unwrap().sinc2(nu);
        let base = pgr(nu, &pump, &fiber, 75.0).unwrap();
        prop_assume!(base > 1e-300 && sinc2(&pump, &fiber) > 1e-12);
        let pump2 = pump.with_power(2.0 * p);
        let r_p = pgr(nu, &pump2, &fiber, 75.0).unwrap() / base;
        let want_p = 4.0 * sinc2(&pump2, &fiber) / sinc2(&pump, &fiber);
        prop_assert!((r_p / want_p - 1.0).abs() < 1e-9);
        let fiber2 = fiber.with_length(2.0 * l);
        let r_l = pgr(nu, &pump, &fiber2, 75.0).unwrap() / base;
        let want_l = 4.0 * sinc2(&pump, &fiber2) / sinc2(&pump, &fiber);
        prop_assert!((r_l / want_l - 1.0).abs() < 1e-9);
    }

    #[test]
    fn singles_calibration_is_monotone_in_target(a in 200.0f64..9000.0, b in 200.0f64..9000.0) {
        prop_assume!((a - b).abs() > 1.0);
        let exp = Experiment::standard(FiberSpec::smf28_paper(11.4), 1.0);
        let (pa, pb) = (power_for_singles(&exp, a).unwrap(), power_for_singles(&exp, b).unwrap());
        prop_assert_eq!(pa < pb, a < b);
    }

    #[test]
    fn dead_time_only_loses_counts(dead_us in 0.0f64..20.0, l in 1.0f64..300.0) {
        let mut exp = Experiment::standard(FiberSpec::smf28_paper(l), 3.0);
        let base = expected_rates(&exp).unwrap().singles_s;
        exp.det_s.dead_time_s = dead_us * 1e-6;
        let shorter = expected_rates(&exp).unwrap().singles_s;
        exp.det_s.dead_time_s = 0.0;
        let none = expected_rates(&exp).unwrap().singles_s;
        prop_assert!(none >= shorter);
        if dead_us <= 10.0 {
            prop_assert!(shorter >= base);
        }
    }

    #[test]
    fn correlations_are_bounded(counts in prop::array::uniform16(0.0f64..1e6)) {
        let mut c = [[0.0; 4]; 4];
        for (k, v) in counts.iter().enumerate() {
            c[k / 4][k % 4] = *v;
        }
        if let Ok(r) = chsh_from_counts(&ChshCounts { counts: c }) {
            prop_assert!(r.correlations.iter().all(|e| e.value.abs() <= 1.0 + 1e-12));
            prop_assert!(r.s_error >= 0.0);
        }
    }

    #[test]
    fn fringe_fit_ignores_count_scale(v in 0.0f64..1.0, phase in -90.0f64..90.0, k in 1e-3f64..1e3) {
        let src = EntangledSourceSpec::new(v, 200.0, 10.0);
        let scan = FringeScan::expected(phase, &fringe_grid(), &src);
        let scaled = FringeScan { counts: scan.counts.iter().map(|c| c * k).collect(), ..scan.clone() };
        let (a, b) = (fit_visibility(&scan).unwrap(), fit_visibility(&scaled).unwrap());
        prop_assert!((a.visibility - b.visibility).abs() < 1e-9);
    }

    #[test]
    fn fitted_visibility_falls_with_accidental_floor(v in 0.05f64..1.0, a in 0.0f64..500.0, da in 1.0f64..500.0) {
        let fit = |floor| {
            let src = EntangledSourceSpec::new(v, 200.0, floor);
            fit_visibility(&FringeScan::expected(0.0, &fringe_grid(), &src)).unwrap().visibility
        };
        prop_assert!(fit(a + da) < fit(a));
    }

    #[test]
    fn extraction_is_scale_equivariant(alpha in 10.0f64..1e4, floor in 1.0f64..50.0, k in 0.5f64..20.0) {
        let powers = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
        let cc: Vec<(f64, f64)> = powers.iter().map(|&p| (p, alpha * p * p + floor)).collect();
        let ca: Vec<(f64, f64)> = powers.iter().map(|&p| (p, floor)).collect();
        let scale = |v: &[(f64, f64)]| v.iter().map(|&(p, c)| (p, c * k)).collect::<Vec<_>>();
        let a = extract_mu_p(&cc, &ca, 10.0, 0.03, 0.03, 600.0).unwrap();
        let b = extract_mu_p(&scale(&cc), &scale(&ca), 10.0, 0.03, 0.03, 600.0).unwrap();
        assert_relative_eq!(b.mu_p, k * a.mu_p, max_relative = 1e-9);
        let net: Vec<(f64, f64)> = cc.iter().zip(&ca).map(|(c, a)| (c.0, c.1 - a.1)).collect();
        let (sa, sb) = (fit_loglog_slope(&net).unwrap(), fit_loglog_slope(&scale(&net)).unwrap());
        prop_assert!((sa.slope() - sb.slope()).abs() < 1e-9);
    }
}

#[test]
fn chsh_on_expected_counts_is_exact_for_eleven_visibilities() {
    for i in 0..=10 {
        let v = i as f64 / 10.0;
        let r = chsh_from_counts(&ChshCounts::expected(&EntangledSourceSpec::new(v, 125.0, 0.0))).unwrap();
        assert!((r.s_value - s_from_visibility(v)).abs() <= 1e-12, "V = {v}");
    }
    // linear and increasing
    let s: Vec<f64> = (0..=10).map(|i| s_from_visibility(i as f64 / 10.0)).collect();
    assert!(s.windows(2).all(|w| w[1] > w[0]));
    assert_relative_eq!(s[10] - s[9], s[1] - s[0], max_relative = 1e-12);
}

#[test]
fn quadratic_fit_of_noiseless_data_has_zero_residual() {
    let x = [0.5, 1.0, 2.0, 4.0];
    let y: Vec<f64> = x.iter().map(|p| 7.25 * p * p).collect();
    let fit = fit_quadratic(&x, &y, &[1.0; 4]).unwrap();
    assert_relative_eq!(fit.coefficients[0], 7.25, max_relative = 1e-12);
    assert!(fit.residual_norm < 1e-10);
}

#[test]
fn singles_loss_is_singles_times_dead_time() {
    let base = Experiment::standard(FiberSpec::smf28_paper(11.4), 1.0);
    let p = power_for_singles(&base, 3000.0).unwrap();
    let mut exp = base.with_power(p);
    let with = expected_rates(&exp).unwrap().singles_s;
    exp.det_s.dead_time_s = 0.0;
    let without = expected_rates(&exp).unwrap().singles_s;
    let loss = 1.0 - with / without;
    // roughly 3000 cps × 10 µs
    assert!((loss - 0.03).abs() < 0.003, "loss {loss}");
    assert!(without > with);
}

#[test]
fn long_fiber_spectrum_peaks_at_phase_matching_short_one_does_not() {
    let pump = PumpSpec::standard(3.0);
    let long = FiberSpec::smf28_paper(308.0);
    let root = phase_matched_detuning(&pump, &long).unwrap();
    let at = |nu: f64, f: &FiberSpec| mu_p(nu, &pump, f, 75.0).unwrap();
    assert!(at(root, &long) > at(root - 5.0, &long) && at(root, &long) > at(root + 5.0, &long));
    assert!(at(root, &long) > at(0.0, &long));

    let short = FiberSpec::smf28_paper(3.8);
    // up to the first zero of sinc²; side lobes follow
    let values: Vec<f64> = (0..=245)
        .map(|k| root + 20.0 * k as f64)
        .take_while(|&nu| delta_k(nu, &pump, &short).unwrap() * 3.8 / 2.0 < std::f64::consts::PI)
        .map(|nu| at(nu, &short))
        .collect();
    assert!(values.len() > 50);
    assert!(values.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
}

#[test]
fn short_fiber_mu_p_falls_across_the_channel_plan() {
    let pump = PumpSpec::standard(3.0);
    let fiber = FiberSpec::smf28_paper(3.8);
    let v: Vec<f64> = [400.0, 600.0, 800.0].iter().map(|&nu| mu_p(nu, &pump, &fiber, 75.0).unwrap()).collect();
    assert!(v[0] > v[1] && v[1] > v[2], "{v:?}");
}
