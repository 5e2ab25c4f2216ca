use memqubit::coherence::{
    chi, chi_ramsey, compose_rates, extract_noise_point, fit_exponential, CoherenceMeasurement, DecayPoint,
};
use memqubit::montecarlo::{run_trial, SimConfig};
use memqubit::physics::{fit_field_sensitivity, fit_rf_power_shift, raman_scattering_rate, BeamConfig};
use memqubit::specfit::{fit_with_model, CostModel, SpecFitOptions, SpectroscopyDataset};
use memqubit::spectrum::{synthesize, Convention, NoiseSpectrum};
use memqubit::PulseSequence;
use proptest::prelude::*;
use std::f64::consts::PI;

fn cheap() -> ProptestConfig {
    ProptestConfig::with_cases(24)
}

/// Composite Simpson over each sign-constant segment.
fn numerical_transform(seq: &PulseSequence, omega: f64) -> (f64, f64) {
    let (mut re, mut im) = (0.0, 0.0);
    for (lo, hi, sign) in seq.segments() {
        let n = 400;
        let h = (hi - lo) / n as f64;
        for k in 0..=n {
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            let t = lo + h * k as f64;
            re += sign * w * (omega * t).cos() * h / 3.0;
            im += sign * w * (omega * t).sin() * h / 3.0;
        }
    }
    (re, im)
}

fn fwhm(seq: &PulseSequence) -> f64 {
    let wc = PI / seq.tau();
    let f = |w: f64| seq.filter_magnitude_sq(w);
    let (mut peak_w, mut peak) = (wc, f(wc));
    for k in -200..=200 {
        let w = wc * (1.0 + k as f64 * 1e-3);
        if f(w) > peak {
            peak = f(w);
            peak_w = w;
        }
    }
    let edge = |dir: f64| {
        let (mut a, mut b) = (peak_w, peak_w);
        let step = dir * wc * 1e-3;
        while f(b) > peak / 2.0 {
            a = b;
            b += step;
        }
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if f(m) > peak / 2.0 {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    };
    edge(1.0) - edge(-1.0)
}

fn spectrum_strategy() -> impl Strategy<Value = NoiseSpectrum> {
    (0.0..0.05f64, 1e-3..0.05f64, 0.0..0.01f64, 0.1..3.0f64)
        .prop_map(|(a, b, c, d)| NoiseSpectrum::with_default_band([a, b, c, d], Convention::Hz).unwrap())
}

proptest! {
    #[test]
    fn filter_is_even_and_non_negative(n in 0u32..60, tau in 1e-3..1.0f64, w in 1e-3..1e4f64) {
        let seq = if n == 0 { PulseSequence::ramsey(tau).unwrap() } else { PulseSequence::cpmg(n, tau).unwrap() };
        let plus = seq.filter_magnitude_sq(w);
        let minus = seq.filter_magnitude_sq(-w);
        prop_assert!(plus >= 0.0);
        prop_assert!((plus - minus).abs() <= 1e-12 * plus.max(1e-300));
    }

    #[test]
    fn closed_form_matches_numerical_transform(n in 1u32..=50, tau in 1e-2..1.0f64, x in 0.01..20.0f64) {
        let seq = PulseSequence::cpmg(n, tau).unwrap();
        let omega = x * PI / tau;
        let y = seq.transform(omega);
        let (re, im) = numerical_transform(&seq, omega);
        let scale = seq.total_delay();
        prop_assert!((y.re - re).abs() < 1e-7 * scale, "re {} vs {}", y.re, re);
        prop_assert!((y.im - im).abs() < 1e-7 * scale, "im {} vs {}", y.im, im);
    }

    #[test]
    fn fundamental_width_halves_when_pulses_double(n in 8u32..=64, tau in 1e-2..1.0f64) {
        let a = fwhm(&PulseSequence::cpmg(n, tau).unwrap());
        let b = fwhm(&PulseSequence::cpmg(2 * n, tau).unwrap());
        prop_assert!((a / b - 2.0).abs() < 0.1, "ratio {}", a / b);
    }

    #[test]
    fn spectrum_is_monotone_about_its_minimum(spec in spectrum_strategy(), u in 0.01..0.99f64, v in 0.01..0.99f64) {
        let w_star = spec.minimum_frequency().unwrap();
        let (lo, hi) = (u.min(v), u.max(v));
        prop_assume!(hi - lo > 1e-3);
        prop_assert!(spec.eval(w_star * lo).unwrap() >= spec.eval(w_star * hi).unwrap());
        prop_assert!(spec.eval(w_star / lo).unwrap() >= spec.eval(w_star / hi).unwrap());
        prop_assert!(spec.eval(w_star).unwrap() <= spec.eval(w_star * lo).unwrap());
    }

    #[test]
    fn synthesis_is_reproducible(spec in spectrum_strategy(), seed in any::<u64>(), t in 0.0..10.0f64) {
        let a = synthesize(&spec, 200, seed).unwrap();
        let b = synthesize(&spec, 200, seed).unwrap();
        prop_assert_eq!(a.sample_beta(t).to_bits(), b.sample_beta(t).to_bits());
    }

    #[test]
    fn compose_rates_is_symmetric_and_bounded(a in 1e-3..1e3f64, b in 1e-3..1e3f64) {
        let c = compose_rates(a, b).unwrap();
        prop_assert!(c <= a.min(b));
        prop_assert!((c - compose_rates(b, a).unwrap()).abs() <= 1e-12 * c);
    }

    #[test]
    fn flat_noise_point_round_trip(s0 in 1e-3..1.0f64, n in 1u32..200, tau in 1e-3..1.0f64) {
        let seq = PulseSequence::cpmg(n, tau).unwrap();
        let m = CoherenceMeasurement::from_chi(&seq, s0 * seq.total_delay() / 2.0, 1e-4).unwrap();
        let p = extract_noise_point(&m).unwrap();
        prop_assert!((p.s_value / s0 - 1.0).abs() < 1e-9);
        prop_assert!((p.omega_c - PI / tau).abs() < 1e-9 * p.omega_c);
    }

    #[test]
    fn field_fit_is_translation_equivariant(
        f0 in -1e3..1e3f64, b0 in 1.0..5.0f64, curv in 10.0..1000.0f64, shift in -10.0..10.0f64,
    ) {
        let data: Vec<(f64, f64)> = (0..9).map(|i| {
            let b = b0 - 0.4 + 0.1 * i as f64;
            (b, f0 + curv * (b - b0).powi(2))
        }).collect();
        let moved: Vec<(f64, f64)> = data.iter().map(|&(b, f)| (b + shift, f)).collect();
        let a = fit_field_sensitivity(&data).unwrap();
        let m = fit_field_sensitivity(&moved).unwrap();
        prop_assert!((m.b0 - a.b0 - shift).abs() < 1e-6);
        prop_assert!((m.curvature / a.curvature - 1.0).abs() < 1e-6);
        prop_assert!((m.f0 - a.f0).abs() < 1e-6 * (1.0 + a.f0.abs()));
    }

    #[test]
    fn rf_fit_recovers_pure_models(f0 in -1e3..1e3f64, c in 0.1..100.0f64, linear in any::<bool>()) {
        let data: Vec<(f64, f64)> = (0..8).map(|i| {
            let p = 0.5 * i as f64;
            (p, f0 + if linear { c * p } else { c * p.sqrt() })
        }).collect();
        let fit = fit_rf_power_shift(&data).unwrap();
        let (cl, cs) = if linear { (c, 0.0) } else { (0.0, c) };
        prop_assert!((fit.c_lin - cl).abs() < 1e-6 * c);
        prop_assert!((fit.c_sqrt - cs).abs() < 1e-6 * c);
        prop_assert!((fit.f0 - f0).abs() < 1e-6 * (1.0 + f0.abs()));
    }

    #[test]
    fn raman_rate_scales_with_power_over_detuning_squared(k in 0.1..10.0f64) {
        let beam = BeamConfig::detection_beam();
        let base = raman_scattering_rate(&beam).unwrap();
        let brighter = raman_scattering_rate(&BeamConfig { power: beam.power * k, ..beam }).unwrap();
        prop_assert!((brighter / base / k - 1.0).abs() < 1e-9);
        let moved = BeamConfig { wavelength: beam.transition_wavelength * 1.05, ..beam };
        let moved2 = BeamConfig { wavelength: beam.transition_wavelength * 1.1, ..beam };
        let r = raman_scattering_rate(&moved).unwrap() * moved.detuning().powi(2);
        let r2 = raman_scattering_rate(&moved2).unwrap() * moved2.detuning().powi(2);
        prop_assert!((r / r2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn noiseless_decay_is_recovered(a in 0.2..1.0f64, t2 in 0.5..200.0f64) {
        let points: Vec<DecayPoint> = (1..=8)
            .map(|i| {
                let t = t2 * 0.3 * i as f64;
                DecayPoint::new(t, a * (-t / t2).exp(), 1e-4)
            })
            .collect();
        let fit = fit_exponential(&points).unwrap();
        prop_assert!((fit.time_constant / t2 - 1.0).abs() < 1e-6);
        prop_assert!((fit.amplitude / a - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flags_never_precede_decay(seed in any::<u64>(), fidelity in 0.0..=1.0f64, idx in 0u64..1000) {
        let spec = NoiseSpectrum::flat(0.0, 1.0, 10.0).unwrap();
        let mut config = SimConfig::new(PulseSequence::cpmg(10, 0.1).unwrap(), spec);
        config.t_decay = 0.5;
        config.detection_fidelity = fidelity;
        config.master_seed = seed;
        let o = run_trial(&config, idx).unwrap();
        match (o.decay_time, o.flag_time) {
            (None, f) => prop_assert!(f.is_none()),
            (Some(d), Some(f)) => prop_assert!(f >= d),
            (Some(_), None) => {}
        }
        prop_assert_eq!(o, run_trial(&config, idx).unwrap());
    }
}

proptest! {
    #![proptest_config(cheap())]

    #[test]
    fn ramsey_is_the_zero_pulse_limit(spec in spectrum_strategy(), t in 0.01..5.0f64) {
        let direct = chi(&PulseSequence::ramsey(t).unwrap(), &spec).unwrap();
        let closed = chi_ramsey(&spec, t).unwrap();
        prop_assert!((direct / closed - 1.0).abs() < 1e-6, "{direct} vs {closed}");
    }

    #[test]
    fn decoherence_grows_with_delay(spec in spectrum_strategy(), n in 1u32..100, extra in 1u32..100, tau in 1e-3..0.5f64) {
        let a = chi(&PulseSequence::cpmg(n, tau).unwrap(), &spec).unwrap();
        let b = chi(&PulseSequence::cpmg(n + extra, tau).unwrap(), &spec).unwrap();
        prop_assert!(b >= a * (1.0 - 1e-9), "{a} then {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn spectrum_fit_never_increases_cost(
        start in prop::array::uniform4(0.0..0.5f64),
        noise in prop::collection::vec(-0.1..0.1f64, 12),
    ) {
        let truth = NoiseSpectrum::with_default_band([0.01, 0.01, 0.0, 1.0], Convention::Hz).unwrap();
        let data: Vec<_> = [2u32, 20, 200]
            .iter()
            .flat_map(|&n| [0.003, 0.02, 0.1, 0.5].map(move |tau| (n, tau)))
            .zip(&noise)
            .map(|((n, tau), e)| {
                let seq = PulseSequence::cpmg(n, tau).unwrap();
                let c = chi(&seq, &truth).unwrap();
                CoherenceMeasurement::from_chi(&seq, c * (1.0 + e), (0.05 * c).powi(2)).unwrap()
            })
            .collect();
        let ds = SpectroscopyDataset::new(data).unwrap();
        let opts = SpecFitOptions::new(Convention::Hz);
        let model = CostModel::new(&ds, &opts).unwrap();
        let fit = fit_with_model(&model, start, &opts).unwrap();
        prop_assert!(fit.cost <= model.cost(&start));
        prop_assert!(fit.spectrum.lambda().iter().all(|l| *l >= 0.0));
    }
}
