//! Power-law dephasing-noise spectrum, its autocorrelation, and synthesis of
//! stationary Gaussian noise trajectories `β(t)` consistent with it.
//!
//! All internal computation uses angular frequency ω in rad/s and a spectral
//! density in s⁻¹ normalised so that `⟨β(t)β(0)⟩ = (1/π)∫₀^∞ S(ω) cos(ωt) dω`.
//! The four coefficients can be read in one of two unit conventions, see
//! [`Convention`].

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};

/// Default band edges, rad/s.
pub const DEFAULT_OMEGA_MIN: f64 = 2.0 * PI * 0.01;
pub const DEFAULT_OMEGA_MAX: f64 = 2.0 * PI * 1e6;
/// Default number of harmonics in a synthesized trajectory.
pub const DEFAULT_GRID_POINTS: usize = 2000;

/// How the coefficients `λ₀..λ₃` of `λ₀ + λ₁x + λ₂/x + λ₃/x²` are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// `x = ω` in rad/s and the polynomial is the density per unit ω.
    Rad,
    /// `x = f = ω/2π` in Hz and the polynomial is the density per Hz, so
    /// `S_ω(ω) = S_f(ω/2π) / 2π`.
    Hz,
}

impl Convention {
    pub fn note(self) -> &'static str {
        match self {
            Convention::Rad => {
                "rad: lambda coefficients multiply powers of angular frequency omega [rad/s]; \
                 S is a density per unit omega"
            }
            Convention::Hz => {
                "hz: lambda coefficients multiply powers of ordinary frequency f = omega/2pi [Hz]; \
                 S is a density per Hz, S_omega(omega) = S_f(omega/2pi)/2pi"
            }
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Convention::Rad => "rad",
            Convention::Hz => "hz",
        })
    }
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rad" => Ok(Convention::Rad),
            "hz" => Ok(Convention::Hz),
            other => Err(Error::Argument(format!(
                "unknown unit convention '{other}', expected 'rad' or 'hz'"
            ))),
        }
    }
}

/// `S(x) = λ₀ + λ₁x + λ₂/x + λ₃/x²` on the band `[omega_min, omega_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpectrum", into = "RawSpectrum")]
pub struct NoiseSpectrum {
    lambda: [f64; 4],
    omega_min: f64,
    omega_max: f64,
    convention: Convention,
}

#[derive(Serialize, Deserialize)]
struct RawSpectrum {
    lambda: [f64; 4],
    omega_min: f64,
    omega_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    convention: Option<Convention>,
}

impl TryFrom<RawSpectrum> for NoiseSpectrum {
    type Error = Error;

    fn try_from(raw: RawSpectrum) -> Result<Self> {
        Self::new(
            raw.lambda,
            raw.omega_min,
            raw.omega_max,
            raw.convention.unwrap_or(Convention::Rad),
        )
    }
}

impl From<NoiseSpectrum> for RawSpectrum {
    fn from(s: NoiseSpectrum) -> Self {
        RawSpectrum {
            lambda: s.lambda,
            omega_min: s.omega_min,
            omega_max: s.omega_max,
            convention: Some(s.convention),
        }
    }
}

/// Reads a spectrum document, reporting whether it named its convention.
pub fn spectrum_from_json(text: &str) -> Result<(NoiseSpectrum, Option<Convention>)> {
    let raw: RawSpectrum = serde_json::from_str(text)
        .map_err(|e| Error::Argument(format!("malformed spectrum JSON: {e}")))?;
    let declared = raw.convention;
    Ok((NoiseSpectrum::try_from(raw)?, declared))
}

impl NoiseSpectrum {
    pub fn new(
        lambda: [f64; 4],
        omega_min: f64,
        omega_max: f64,
        convention: Convention,
    ) -> Result<Self> {
        if lambda.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::Argument(format!(
                "spectral coefficients must be finite and non-negative, got {lambda:?}"
            )));
        }
        if !(omega_min.is_finite() && omega_max.is_finite() && omega_min > 0.0 && omega_min < omega_max)
        {
            return Err(Error::Argument(format!(
                "band limits must satisfy 0 < omega_min < omega_max, got [{omega_min}, {omega_max}]"
            )));
        }
        Ok(Self {
            lambda,
            omega_min,
            omega_max,
            convention,
        })
    }

    /// Spectrum on the default band.
    pub fn with_default_band(lambda: [f64; 4], convention: Convention) -> Result<Self> {
        Self::new(lambda, DEFAULT_OMEGA_MIN, DEFAULT_OMEGA_MAX, convention)
    }

    /// White spectrum `S(ω) = level` (per unit ω) on the given band.
    pub fn flat(level: f64, omega_min: f64, omega_max: f64) -> Result<Self> {
        Self::new([level, 0.0, 0.0, 0.0], omega_min, omega_max, Convention::Rad)
    }

    pub fn lambda(&self) -> [f64; 4] {
        self.lambda
    }

    pub fn omega_min(&self) -> f64 {
        self.omega_min
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn with_convention(mut self, convention: Convention) -> Self {
        self.convention = convention;
        self
    }

    pub fn with_band(self, omega_min: f64, omega_max: f64) -> Result<Self> {
        Self::new(self.lambda, omega_min, omega_max, self.convention)
    }

    /// All coefficients multiplied by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.lambda.map(|l| l * factor),
            self.omega_min,
            self.omega_max,
            self.convention,
        )
    }

    /// The spectrum as `Σ cᵢ ω^{pᵢ}` in rad/s, one term per coefficient.
    pub fn power_terms(&self) -> [(f64, i32); 4] {
        let [l0, l1, l2, l3] = self.lambda;
        match self.convention {
            Convention::Rad => [(l0, 0), (l1, 1), (l2, -1), (l3, -2)],
            Convention::Hz => [
                (l0 / (2.0 * PI), 0),
                (l1 / (4.0 * PI * PI), 1),
                (l2, -1),
                (l3 * 2.0 * PI, -2),
            ],
        }
    }

    /// `S(ω)` without domain checks.
    #[inline]
    pub(crate) fn density(&self, omega: f64) -> f64 {
        let [(c0, _), (c1, _), (c2, _), (c3, _)] = self.power_terms();
        let inv = 1.0 / omega;
        c0 + c1 * omega + inv * (c2 + c3 * inv)
    }

    /// `S(ω)` in s⁻¹ for ω in rad/s.
    pub fn eval(&self, omega: f64) -> Result<f64> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::Domain(format!(
                "spectrum is singular at omega = {omega}; omega must be positive"
            )));
        }
        Ok(self.density(omega))
    }

    /// Frequency (rad/s) minimising `S`, when the spectrum rises on both
    /// sides; `None` otherwise.
    pub fn minimum_frequency(&self) -> Option<f64> {
        let [_, (c1, _), (c2, _), (c3, _)] = self.power_terms();
        if c1 <= 0.0 || (c2 <= 0.0 && c3 <= 0.0) {
            return None;
        }
        // S'(ω)·ω³ = c1 ω³ - c2 ω - 2 c3, increasing for ω beyond its root.
        let g = |w: f64| c1 * w * w * w - c2 * w - 2.0 * c3;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while g(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// Autocorrelation `R(t) = (1/π)∫_{ω_min}^{ω_max} S(ω) cos(ωt) dω`.
    pub fn autocorrelation(&self, t: f64) -> Result<f64> {
        let t = t.abs();
        if !t.is_finite() {
            return Err(Error::Argument(format!("lag must be finite, got {t}")));
        }
        let (lo, hi) = (self.omega_min, self.omega_max);
        let tol = Tolerance {
            abs: 1e-300,
            rel: 1e-11,
            ..Tolerance::default()
        };
        if t == 0.0 {
            let breaks = log_breaks(lo, hi, 8.0);
            let est = quad::integrate(|w| self.density(w), &breaks, tol)?;
            return Ok(est.value / PI);
        }
        // Head: resolve up to where the cosine tail can be closed off
        // asymptotically (ω·t >= 200).
        let split = (200.0 / t).clamp(lo, hi);
        let mut breaks = log_breaks(lo, split.min(PI / t).max(lo), 2.0);
        let half = PI / t;
        let mut k = (breaks.last().copied().unwrap_or(lo) / half).floor() + 1.0;
        while k * half < split {
            breaks.push(k * half);
            k += 1.0;
        }
        if *breaks.last().unwrap() < split {
            breaks.push(split);
        }
        breaks.dedup_by(|a, b| *a <= *b);
        let head = quad::integrate(|w| self.density(w) * (w * t).cos(), &breaks, tol)?.value;
        let tail: f64 = if split < hi {
            self.power_terms()
                .iter()
                .map(|&(c, p)| {
                    if c == 0.0 {
                        0.0
                    } else {
                        c * quad::power_cos_integral(p, t, split, hi)
                    }
                })
                .sum()
        } else {
            0.0
        };
        Ok((head + tail) / PI)
    }

    /// Variance of `β`, i.e. `R(0)`.
    pub fn variance(&self) -> Result<f64> {
        self.autocorrelation(0.0)
    }
}

/// Logarithmically spaced breakpoints with `per_octave`-ish density
/// (`ratio = 2^{1/per_octave}`), always including both ends.
pub(crate) fn log_breaks(lo: f64, hi: f64, per_octave: f64) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let n = (((hi / lo).log2() * per_octave).ceil() as usize).max(1);
    let ratio = (hi / lo).powf(1.0 / n as f64);
    let mut v: Vec<f64> = (0..n).map(|i| lo * ratio.powi(i as i32)).collect();
    v.push(hi);
    v
}

/// One component `A cos(ωt + φ)` of a synthesized trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub omega: f64,
    pub amplitude: f64,
    pub phase: f64,
}

/// A stationary Gaussian noise trajectory `β(t) = Σ A_k cos(ω_k t + φ_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicNoise {
    pub harmonics: Vec<Harmonic>,
    pub seed: u64,
}

impl HarmonicNoise {
    /// `β(t)` in rad/s.
    pub fn sample_beta(&self, t: f64) -> f64 {
        self.harmonics
            .iter()
            .map(|h| h.amplitude * (h.omega * t + h.phase).cos())
            .sum()
    }

    /// Ensemble variance `Σ A_k²/2` of trajectories on this grid.
    pub fn nominal_variance(&self) -> f64 {
        self.harmonics.iter().map(|h| 0.5 * h.amplitude * h.amplitude).sum()
    }
}

/// Where each harmonic sits inside its logarithmic bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencySampling {
    /// Geometric centre of the bin; frequencies are identical for every seed.
    #[default]
    Centered,
    /// Uniform draw inside the bin, per seed. Averaged over seeds the
    /// harmonic sum integrates any filter exactly, with no aliasing against
    /// features narrower than a bin.
    Jittered,
}

/// Logarithmic partition of `[lo, hi]` into `n` bins.
#[derive(Debug, Clone)]
pub struct LogGrid {
    edges: Vec<f64>,
}

impl LogGrid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Argument("grid needs at least one point".into()));
        }
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Argument(format!("invalid grid band [{lo}, {hi}]")));
        }
        let ln_ratio = (hi / lo).ln();
        let mut edges: Vec<f64> = (0..=n)
            .map(|k| lo * (ln_ratio * k as f64 / n as f64).exp())
            .collect();
        edges[0] = lo;
        edges[n] = hi;
        Ok(Self { edges })
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bin(&self, k: usize) -> (f64, f64) {
        (self.edges[k], self.edges[k + 1])
    }
}

/// Synthesizes a trajectory on a centred logarithmic grid.
pub fn synthesize(spec: &NoiseSpectrum, grid_points: usize, seed: u64) -> Result<HarmonicNoise> {
    synthesize_with(spec, grid_points, seed, FrequencySampling::Centered)
}

/// Synthesizes `grid_points` harmonics with `A_k = √(2 S(ω_k) Δω_k / π)` and
/// uniform phases drawn from a ChaCha8 stream seeded with `seed`.
pub fn synthesize_with(
    spec: &NoiseSpectrum,
    grid_points: usize,
    seed: u64,
    sampling: FrequencySampling,
) -> Result<HarmonicNoise> {
    if grid_points == 0 {
        return Err(Error::Argument("grid_points must be at least 1".into()));
    }
    let grid = LogGrid::new(spec.omega_min, spec.omega_max, grid_points)?;
    Ok(synthesize_on(&grid, spec, seed, sampling))
}

/// As [`synthesize_with`] on a prepared grid (the grid's band is used).
pub fn synthesize_on(
    grid: &LogGrid,
    spec: &NoiseSpectrum,
    seed: u64,
    sampling: FrequencySampling,
) -> HarmonicNoise {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let harmonics = (0..grid.len())
        .map(|k| {
            let (a, b) = grid.bin(k);
            let omega = match sampling {
                FrequencySampling::Centered => (a * b).sqrt(),
                FrequencySampling::Jittered => a + (b - a) * rng.random::<f64>(),
            };
            let phase = 2.0 * PI * rng.random::<f64>();
            let amplitude = (2.0 * spec.density(omega) * (b - a) / PI).sqrt();
            Harmonic {
                omega,
                amplitude,
                phase,
            }
        })
        .collect();
    HarmonicNoise { harmonics, seed }
}
