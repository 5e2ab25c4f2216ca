//! Coherence decay `χ(T) = ∫ S(ω)|ỹ(ω,T)|² dω` under a pulse sequence, the
//! flat-filter data reduction used for noise spectroscopy, decoherence-rate
//! composition and exponential decay fits.
//!
//! Contrast is the normalised fringe amplitude `e^{-χ}` in `[0, 1]`; the
//! raw Ramsey population `½(1 + e^{-χ})` maps onto it affinely.

mod decay_fit;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};
use crate::sequences::PulseSequence;
use crate::spectrum::{log_breaks, NoiseSpectrum};

pub use decay_fit::{fit_exponential, fit_exponential_with, DecayFit, DecayPoint, FitOptions, UncertaintyMethod};

const QUAD_TOL: Tolerance = Tolerance {
    abs: 1e-300,
    rel: 1e-10,
    max_bisections: 400_000,
};

/// Smallest `ω·d` at which a cosine tail is closed off asymptotically.
const TAIL_ONSET: f64 = 200.0;

/// `∫_{lo}^{hi} ω^p |ỹ(ω,T)|² dω`.
///
/// The filter is resolved by adaptive quadrature (panels one oscillation of
/// the longest lag wide, so every harmonic of the `π/τ` comb is bracketed)
/// up to `ω₁ = 200/unit`; beyond that `|ỹ|²` is a finite cosine series over
/// ω² and each term is integrated in closed form.
pub fn filter_power_integral(seq: &PulseSequence, p: i32, lo: f64, hi: f64) -> Result<f64> {
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Argument(format!("invalid integration band [{lo}, {hi}]")));
    }
    let lags = seq.lag_series();
    let split = (TAIL_ONSET / lags.unit).clamp(lo, hi);
    let t = seq.total_delay();
    let head = if split > lo {
        let breaks = oscillation_breaks(lo, split, 2.0 * PI / t);
        quad::integrate(|w| w.powi(p) * seq.filter_magnitude_sq(w), &breaks, QUAD_TOL)?.value
    } else {
        0.0
    };
    let tail = if split < hi {
        let q = p - 2;
        let mut acc = lags.coeffs[0] * quad::power_integral(q, split, hi);
        for (k, &c) in lags.coeffs.iter().enumerate().skip(1) {
            if c != 0.0 {
                acc += 2.0 * c * quad::power_cos_integral(q, k as f64 * lags.unit, split, hi);
            }
        }
        acc / (2.0 * PI)
    } else {
        0.0
    };
    Ok(head + tail)
}

/// Geometric breakpoints up to the first oscillation, then one breakpoint
/// per `period`.
fn oscillation_breaks(lo: f64, hi: f64, period: f64) -> Vec<f64> {
    let mut breaks = log_breaks(lo, hi.min(period).max(lo), 2.0);
    let mut k = (breaks.last().copied().unwrap_or(lo) / period).floor() + 1.0;
    while k * period < hi {
        breaks.push(k * period);
        k += 1.0;
    }
    breaks.push(hi);
    breaks.dedup_by(|a, b| *a <= *b);
    breaks
}

/// Coherence `χ(T) = ∫_{ω_min}^{ω_max} S(ω)|ỹ(ω,T)|² dω` (pure dephasing).
pub fn chi(seq: &PulseSequence, spec: &NoiseSpectrum) -> Result<f64> {
    let mut total = 0.0;
    for (c, p) in spec.power_terms() {
        if c != 0.0 {
            total += c * filter_power_integral(seq, p, spec.omega_min(), spec.omega_max())?;
        }
    }
    Ok(total.max(0.0))
}

/// Ramsey coherence from the sinc kernel,
/// `χ(T) = (1/4π)∫ sin²(ωT/2)/(ω/2)² S(ω) dω` over the (evenly extended) band.
pub fn chi_ramsey(spec: &NoiseSpectrum, total_delay: f64) -> Result<f64> {
    if !(total_delay.is_finite() && total_delay > 0.0) {
        return Err(Error::Argument(format!(
            "total delay must be positive, got {total_delay}"
        )));
    }
    let t = total_delay;
    let (lo, hi) = (spec.omega_min(), spec.omega_max());
    // (1/4π)·2·∫₀ sin²(ωT/2)/(ω/2)² S = (1/π)∫₀ 2 sin²(ωT/2) S/ω²
    let split = (TAIL_ONSET / t).clamp(lo, hi);
    let head = if split > lo {
        let breaks = oscillation_breaks(lo, split, 2.0 * PI / t);
        quad::integrate(
            |w| {
                let s = (0.5 * w * t).sin();
                2.0 * s * s * spec.density(w) / (w * w)
            },
            &breaks,
            QUAD_TOL,
        )?
        .value
    } else {
        0.0
    };
    let tail = if split < hi {
        spec.power_terms()
            .iter()
            .filter(|(c, _)| *c != 0.0)
            .map(|&(c, p)| {
                c * (quad::power_integral(p - 2, split, hi)
                    - quad::power_cos_integral(p - 2, t, split, hi))
            })
            .sum()
    } else {
        0.0
    };
    Ok(((head + tail) / PI).max(0.0))
}

/// Flat-filter approximation `χ(T) ≈ S(ω_c)·T/2` with `ω_c = π/τ`.
pub fn chi_flat(seq: &PulseSequence, spec: &NoiseSpectrum) -> Result<f64> {
    let wc = seq.center_frequency().ok_or_else(|| {
        Error::Argument("the flat-filter approximation needs a CPMG sequence".into())
    })?;
    Ok(spec.eval(wc)? * seq.total_delay() / 2.0)
}

/// How predicted coherence is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionMethod {
    /// Full filter integral including every harmonic up to `ω_max`.
    Full,
    /// Fundamental-only flat-filter approximation.
    Flat,
}

impl std::str::FromStr for PredictionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "flat" => Ok(Self::Flat),
            other => Err(Error::Argument(format!(
                "unknown prediction method '{other}', expected 'full' or 'flat'"
            ))),
        }
    }
}

pub fn predict_chi(seq: &PulseSequence, spec: &NoiseSpectrum, method: PredictionMethod) -> Result<f64> {
    match method {
        PredictionMethod::Full => chi(seq, spec),
        PredictionMethod::Flat => chi_flat(seq, spec),
    }
}

/// Total delay at which `e^{-χ}` of a CPMG train with spacing `tau` falls to
/// `1/e`.
///
/// The flat approximation is linear in `T` and solved exactly. The full
/// integral is bracketed over whole pulse counts and interpolated linearly in
/// `T` between the bracketing counts.
pub fn one_over_e_time(tau: f64, spec: &NoiseSpectrum, method: PredictionMethod) -> Result<f64> {
    if method == PredictionMethod::Flat {
        let wc = PI / tau;
        let s = spec.eval(wc)?;
        if s <= 0.0 {
            return Ok(f64::INFINITY);
        }
        return Ok(2.0 / s);
    }
    let chi_at = |n: u32| -> Result<f64> { chi(&PulseSequence::cpmg(n, tau)?, spec) };
    let (mut lo, mut hi) = (1u32, 2u32);
    let mut chi_hi = chi_at(hi)?;
    let mut chi_lo = chi_at(lo)?;
    if chi_lo >= 1.0 {
        return Ok(tau * f64::from(lo) / chi_lo);
    }
    while chi_hi < 1.0 {
        if hi > 1 << 24 {
            return Ok(f64::INFINITY);
        }
        lo = hi;
        chi_lo = chi_hi;
        hi *= 2;
        chi_hi = chi_at(hi)?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let c = chi_at(mid)?;
        if c < 1.0 {
            lo = mid;
            chi_lo = c;
        } else {
            hi = mid;
            chi_hi = c;
        }
    }
    let frac = (1.0 - chi_lo) / (chi_hi - chi_lo);
    Ok(tau * (f64::from(lo) + frac))
}

/// One experimental coherence point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceMeasurement {
    pub n_pulses: u32,
    pub tau: f64,
    pub total_delay: f64,
    /// Normalised contrast `e^{-χ}`.
    pub contrast: f64,
    /// Variance of `contrast`.
    pub variance: f64,
}

impl CoherenceMeasurement {
    pub fn new(n_pulses: u32, tau: f64, total_delay: f64, contrast: f64, variance: f64) -> Result<Self> {
        for (name, v) in [
            ("tau", tau),
            ("total_delay", total_delay),
            ("contrast", contrast),
            ("variance", variance),
        ] {
            crate::error::ensure_finite(name, v)?;
        }
        if variance < 0.0 {
            return Err(Error::Argument(format!("variance must be >= 0, got {variance}")));
        }
        let m = Self {
            n_pulses,
            tau,
            total_delay,
            contrast,
            variance,
        };
        let seq = m.sequence()?;
        if (seq.total_delay() - total_delay).abs() > 1e-9 * total_delay.max(1.0) {
            return Err(Error::Argument(format!(
                "total_delay {total_delay} differs from n_pulses * tau = {}",
                seq.total_delay()
            )));
        }
        Ok(m)
    }

    /// Builds a measurement from a coherence value `χ` and its variance.
    pub fn from_chi(seq: &PulseSequence, chi: f64, chi_variance: f64) -> Result<Self> {
        let contrast = (-chi).exp();
        Self::new(
            seq.n_pulses(),
            seq.tau(),
            seq.total_delay(),
            contrast,
            chi_variance * contrast * contrast,
        )
    }

    pub fn sequence(&self) -> Result<PulseSequence> {
        if self.n_pulses == 0 {
            PulseSequence::ramsey(self.total_delay)
        } else {
            PulseSequence::cpmg(self.n_pulses, self.tau)
        }
    }

    /// Measured coherence `χ = -ln(contrast)`.
    pub fn chi(&self) -> Result<f64> {
        check_contrast(self.contrast)?;
        Ok(-self.contrast.ln())
    }

    /// Variance of `χ` by first-order propagation, `σ_c² / c²`.
    pub fn chi_variance(&self) -> Result<f64> {
        check_contrast(self.contrast)?;
        Ok(self.variance / (self.contrast * self.contrast))
    }
}

fn check_contrast(c: f64) -> Result<()> {
    if !(c > 0.0) {
        return Err(Error::Domain(format!(
            "contrast {c} <= 0 corresponds to infinite coherence decay"
        )));
    }
    if c > 1.0 {
        return Err(Error::Domain(format!("contrast {c} exceeds 1")));
    }
    Ok(())
}

/// A flat-filter estimate of the spectrum at the CPMG centre frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePoint {
    /// `ω_c = π/τ`, rad/s.
    pub omega_c: f64,
    /// `S(ω_c)` per unit ω, s⁻¹.
    pub s_value: f64,
}

impl NoisePoint {
    /// The point re-expressed as (frequency, density) in the given convention.
    pub fn in_convention(&self, convention: crate::spectrum::Convention) -> (f64, f64) {
        match convention {
            crate::spectrum::Convention::Rad => (self.omega_c, self.s_value),
            crate::spectrum::Convention::Hz => (self.omega_c / (2.0 * PI), self.s_value * 2.0 * PI),
        }
    }
}

/// Inverts `χ = S(ω_c)T/2` for one CPMG measurement.
pub fn extract_noise_point(m: &CoherenceMeasurement) -> Result<NoisePoint> {
    if m.n_pulses == 0 {
        return Err(Error::Argument(
            "noise points need a CPMG measurement (n_pulses >= 1)".into(),
        ));
    }
    let chi = m.chi()?;
    if !(m.tau > 0.0 && m.total_delay > 0.0) {
        return Err(Error::Argument("tau and total_delay must be positive".into()));
    }
    Ok(NoisePoint {
        omega_c: PI / m.tau,
        s_value: 2.0 * chi / m.total_delay,
    })
}

/// `T₂ = 1/(1/T₁ + 1/T_φ)`; either input may be `+∞` for an absent channel.
pub fn compose_rates(t1: f64, t_phi: f64) -> Result<f64> {
    for (name, v) in [("t1", t1), ("t_phi", t_phi)] {
        if v.is_nan() || v <= 0.0 {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    let rate = 1.0 / t1 + 1.0 / t_phi;
    Ok(1.0 / rate)
}
