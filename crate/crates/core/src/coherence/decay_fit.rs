//! Weighted least-squares fit of `A·e^{-t/T}` to contrast data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One contrast sample `(t, contrast, variance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub t: f64,
    pub contrast: f64,
    pub variance: f64,
}

impl DecayPoint {
    pub fn new(t: f64, contrast: f64, variance: f64) -> Self {
        Self { t, contrast, variance }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertaintyMethod {
    Covariance,
    Bootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub method: UncertaintyMethod,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            method: UncertaintyMethod::Bootstrap,
            resamples: 200,
            seed: 0x5eed_dec0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub time_constant: f64,
    pub amplitude: f64,
    pub time_constant_sigma: f64,
    pub amplitude_sigma: f64,
    pub chi_squared: f64,
    pub method: UncertaintyMethod,
}

/// Fits with bootstrap uncertainties (200 seeded resamples).
pub fn fit_exponential(points: &[DecayPoint]) -> Result<DecayFit> {
    fit_exponential_with(points, FitOptions::default())
}

pub fn fit_exponential_with(points: &[DecayPoint], options: FitOptions) -> Result<DecayFit> {
    validate(points)?;
    let best = fit_point_estimate(points)?;
    let (cov_t, cov_a) = covariance_sigmas(points, best.amplitude, best.rate);
    let (time_constant_sigma, amplitude_sigma) = match options.method {
        UncertaintyMethod::Covariance => (cov_t, cov_a),
        UncertaintyMethod::Bootstrap => bootstrap_sigmas(points, options)?,
    };
    Ok(DecayFit {
        time_constant: 1.0 / best.rate,
        amplitude: best.amplitude,
        time_constant_sigma,
        amplitude_sigma,
        chi_squared: best.cost,
        method: options.method,
    })
}

fn validate(points: &[DecayPoint]) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::Argument(format!(
            "an exponential fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    for p in points {
        if !(p.t.is_finite() && p.contrast.is_finite() && p.variance.is_finite()) {
            return Err(Error::Argument(format!("non-finite decay point {p:?}")));
        }
        if p.variance <= 0.0 {
            return Err(Error::Argument(format!(
                "variance must be positive for a weighted fit, got {}",
                p.variance
            )));
        }
    }
    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.contrast), hi.max(p.contrast))
    });
    if hi - lo <= 1e-6 * hi.abs().max(lo.abs()) {
        return Err(Error::FitFailure(
            "contrast is constant over the data; no decay to fit".into(),
        ));
    }
    Ok(())
}

struct PointFit {
    amplitude: f64,
    rate: f64,
    cost: f64,
}

/// For fixed rate `k` the optimal amplitude is linear, so the fit reduces to
/// a one-dimensional minimisation of the profiled cost over `ln k`.
fn profile(points: &[DecayPoint], rate: f64) -> (f64, f64) {
    let (mut sce, mut see, mut scc) = (0.0, 0.0, 0.0);
    for p in points {
        let w = 1.0 / p.variance;
        let e = (-rate * p.t).exp();
        sce += w * p.contrast * e;
        see += w * e * e;
        scc += w * p.contrast * p.contrast;
    }
    if see <= 0.0 {
        return (0.0, scc);
    }
    let amp = sce / see;
    (amp, (scc - sce * amp).max(0.0))
}

fn fit_point_estimate(points: &[DecayPoint]) -> Result<PointFit> {
    let t_span = points.iter().map(|p| p.t).fold(f64::NEG_INFINITY, f64::max)
        - points.iter().map(|p| p.t).fold(f64::INFINITY, f64::min);
    if !(t_span > 0.0) {
        return Err(Error::FitFailure("all points share one time".into()));
    }
    let t_max = points.iter().map(|p| p.t.abs()).fold(0.0, f64::max);
    // rates from 1e-4 to 1e4 decays across the sampled span
    let (k_lo, k_hi) = (1e-4 / t_span, 1e4 / t_max.max(t_span));
    let n = 400;
    let cost = |lnk: f64| profile(points, lnk.exp()).1;
    let (a, b) = (k_lo.ln(), k_hi.ln());
    let step = (b - a) / n as f64;
    let (mut best_i, mut best_c) = (0, f64::INFINITY);
    for i in 0..=n {
        let c = cost(a + step * i as f64);
        if c < best_c {
            best_c = c;
            best_i = i;
        }
    }
    if best_i == 0 {
        return Err(Error::FitFailure(
            "data show no resolvable decay within the sampled time span".into(),
        ));
    }
    if best_i == n {
        return Err(Error::FitFailure(
            "decay is faster than the sampled time resolution".into(),
        ));
    }
    // golden-section refinement inside the bracketing cells
    let (mut lo, mut hi) = (a + step * (best_i - 1) as f64, a + step * (best_i + 1) as f64);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    for _ in 0..200 {
        if hi - lo < 1e-14 {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = cost(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = cost(x2);
        }
    }
    let rate = (0.5 * (lo + hi)).exp();
    let (amplitude, cost) = profile(points, rate);
    if !(amplitude > 0.0) {
        return Err(Error::FitFailure(format!(
            "fitted amplitude {amplitude} is not positive"
        )));
    }
    Ok(PointFit {
        amplitude,
        rate,
        cost,
    })
}

/// Linearised standard errors of `(T, A)` from `(JᵀWJ)⁻¹`.
fn covariance_sigmas(points: &[DecayPoint], amp: f64, rate: f64) -> (f64, f64) {
    let tc = 1.0 / rate;
    let (mut aa, mut at, mut tt) = (0.0, 0.0, 0.0);
    for p in points {
        let w = 1.0 / p.variance;
        let e = (-p.t * rate).exp();
        let d_a = e;
        let d_t = amp * e * p.t / (tc * tc);
        aa += w * d_a * d_a;
        at += w * d_a * d_t;
        tt += w * d_t * d_t;
    }
    let det = aa * tt - at * at;
    if !(det > 0.0) {
        return (f64::INFINITY, f64::INFINITY);
    }
    ((aa / det).sqrt(), (tt / det).sqrt())
}

fn bootstrap_sigmas(points: &[DecayPoint], options: FitOptions) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let n = points.len();
    let mut taus = Vec::with_capacity(options.resamples);
    let mut amps = Vec::with_capacity(options.resamples);
    let mut sample = Vec::with_capacity(n);
    for _ in 0..options.resamples {
        sample.clear();
        for _ in 0..n {
            sample.push(points[rng.random_range(0..n)]);
        }
        if validate(&sample).is_err() {
            continue;
        }
        if let Ok(fit) = fit_point_estimate(&sample) {
            taus.push(1.0 / fit.rate);
            amps.push(fit.amplitude);
        }
    }
    if taus.len() < 2 {
        return Err(Error::FitFailure(
            "too few bootstrap resamples produced a valid fit".into(),
        ));
    }
    Ok((std_dev(&taus), std_dev(&amps)))
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn exact(amp: f64, tc: f64, times: &[f64]) -> Vec<DecayPoint> {
        times
            .iter()
            .map(|&t| DecayPoint::new(t, amp * (-t / tc).exp(), 1e-4))
            .collect()
    }

    #[test]
    fn noiseless_recovery() {
        let fit = fit_exponential(&exact(1.0, 22.0, &[1.0, 5.0, 10.0, 20.0, 40.0])).unwrap();
        assert!((fit.time_constant / 22.0 - 1.0).abs() < 1e-6);
        assert!((fit.amplitude - 1.0).abs() < 1e-6);

        let fit = fit_exponential(&exact(0.5, 1.0, &[0.1, 0.5, 1.0, 2.0, 3.0])).unwrap();
        assert!((fit.time_constant - 1.0).abs() < 1e-6);
        assert!((fit.amplitude - 0.5).abs() < 1e-6);
    }

    #[test]
    fn error_paths() {
        let flat: Vec<_> = [1.0, 2.0, 3.0].iter().map(|&t| DecayPoint::new(t, 0.7, 1e-3)).collect();
        assert!(matches!(fit_exponential(&flat), Err(Error::FitFailure(_))));
        let mut pts = exact(1.0, 2.0, &[0.0, 1.0, 2.0]);
        pts[1].contrast = f64::NAN;
        assert!(matches!(fit_exponential(&pts), Err(Error::Argument(_))));
        assert!(fit_exponential(&exact(1.0, 2.0, &[0.0, 1.0])).is_err());
        let mut pts = exact(1.0, 2.0, &[0.0, 1.0, 2.0]);
        pts[0].variance = 0.0;
        assert!(matches!(fit_exponential(&pts), Err(Error::Argument(_))));
    }

    #[test]
    fn noisy_recovery_and_bootstrap_tracks_scatter() {
        let times: Vec<f64> = (1..=8).map(|i| 300.0 * f64::from(i) / 8.0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut fitted = Vec::new();
        let mut boot = Vec::new();
        for rep in 0..60 {
            let pts: Vec<DecayPoint> = times
                .iter()
                .map(|&t| {
                    let c = (-t / 136.0).exp();
                    DecayPoint::new(t, c + noise.sample(&mut rng), 0.05 * 0.05)
                })
                .collect();
            let fit = fit_exponential_with(
                &pts,
                FitOptions {
                    seed: rep,
                    ..FitOptions::default()
                },
            )
            .unwrap();
            if rep == 0 {
                assert!((fit.time_constant - 136.0).abs() / 136.0 < 0.2, "{}", fit.time_constant);
            }
            fitted.push(fit.time_constant);
            boot.push(fit.time_constant_sigma);
        }
        let within = fitted.iter().filter(|t| ((**t - 136.0) / 136.0).abs() < 0.2).count();
        assert!(within >= 45, "{within}/60 within 20%");
        let scatter = std_dev(&fitted);
        let mut sorted = boot.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        assert!(median > 0.5 * scatter && median < 2.0 * scatter, "{median} vs {scatter}");
    }

    #[test]
    fn covariance_sigma_matches_scatter() {
        let times: Vec<f64> = (0..10).map(|i| f64::from(i) * 3.0).collect();
        let sigma = 0.01;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, sigma).unwrap();
        let opts = FitOptions {
            method: UncertaintyMethod::Covariance,
            ..FitOptions::default()
        };
        let mut fitted = Vec::new();
        let mut predicted = 0.0;
        for _ in 0..300 {
            let pts: Vec<DecayPoint> = times
                .iter()
                .map(|&t| DecayPoint::new(t, 0.9 * (-t / 20.0).exp() + noise.sample(&mut rng), sigma * sigma))
                .collect();
            let fit = fit_exponential_with(&pts, opts).unwrap();
            fitted.push(fit.time_constant);
            predicted = fit.time_constant_sigma;
        }
        let scatter = std_dev(&fitted);
        assert!((predicted / scatter - 1.0).abs() < 0.25, "{predicted} vs {scatter}");
    }
}
