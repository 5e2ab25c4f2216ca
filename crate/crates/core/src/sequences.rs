//! Ramsey and CPMG pulse sequences and their frequency-domain filter.
//!
//! π pulses are instantaneous. A sequence with `N >= 1` pulses spaced by `τ`
//! has pulse times `t_j = τ/2 + (j-1)τ` and total delay `T = Nτ`; the
//! modulation function `y(t)` starts at +1 and flips sign at every pulse.
//! `N = 0` is a plain Ramsey delay of length `T`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this value of `|ω|·T` the filter is evaluated from its Taylor series.
const SERIES_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSequence", into = "RawSequence")]
pub struct PulseSequence {
    n_pulses: u32,
    tau: f64,
    total_delay: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSequence {
    n_pulses: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    total_delay: Option<f64>,
}

impl TryFrom<RawSequence> for PulseSequence {
    type Error = Error;

    fn try_from(raw: RawSequence) -> Result<Self> {
        if raw.n_pulses == 0 {
            let t = raw
                .total_delay
                .ok_or_else(|| Error::Argument("a Ramsey sequence needs total_delay".into()))?;
            return Self::ramsey(t);
        }
        let seq = match (raw.tau, raw.total_delay) {
            (Some(tau), _) => Self::cpmg(raw.n_pulses, tau)?,
            (None, Some(t)) => Self::cpmg(raw.n_pulses, t / f64::from(raw.n_pulses))?,
            (None, None) => {
                return Err(Error::Argument(
                    "a CPMG sequence needs tau or total_delay".into(),
                ))
            }
        };
        if let Some(t) = raw.total_delay {
            if (t - seq.total_delay).abs() > 1e-9 * t.abs().max(1.0) {
                return Err(Error::Argument(format!(
                    "total_delay {t} is not n_pulses * tau = {}",
                    seq.total_delay
                )));
            }
        }
        Ok(seq)
    }
}

impl From<PulseSequence> for RawSequence {
    fn from(seq: PulseSequence) -> Self {
        if seq.n_pulses == 0 {
            RawSequence {
                n_pulses: 0,
                tau: None,
                total_delay: Some(seq.total_delay),
            }
        } else {
            RawSequence {
                n_pulses: seq.n_pulses,
                tau: Some(seq.tau),
                total_delay: None,
            }
        }
    }
}

/// Cosine-series form of `F(ω) = |ω·Y(ω)|²`, where `Y` is the Fourier
/// transform of the modulation function:
/// `F(ω) = c₀ + 2 Σ_{k≥1} c_k cos(ω·k·unit)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagSeries {
    pub unit: f64,
    pub coeffs: Vec<f64>,
}

impl LagSeries {
    pub fn eval(&self, omega: f64) -> f64 {
        let mut acc = self.coeffs[0];
        for (k, c) in self.coeffs.iter().enumerate().skip(1) {
            acc += 2.0 * c * (omega * k as f64 * self.unit).cos();
        }
        acc
    }

    /// Period of `F` in ω.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.unit
    }
}

impl PulseSequence {
    /// Plain Ramsey delay of length `total_delay`.
    pub fn ramsey(total_delay: f64) -> Result<Self> {
        if !(total_delay.is_finite() && total_delay > 0.0) {
            return Err(Error::Argument(format!(
                "total delay must be positive and finite, got {total_delay}"
            )));
        }
        Ok(Self {
            n_pulses: 0,
            tau: total_delay,
            total_delay,
        })
    }

    /// CPMG sequence of `n_pulses >= 1` π pulses spaced by `tau`.
    pub fn cpmg(n_pulses: u32, tau: f64) -> Result<Self> {
        if n_pulses == 0 {
            return Err(Error::Argument(
                "a CPMG sequence needs at least one pulse; use PulseSequence::ramsey".into(),
            ));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::Argument(format!(
                "pulse spacing must be positive and finite, got {tau}"
            )));
        }
        Ok(Self {
            n_pulses,
            tau,
            total_delay: f64::from(n_pulses) * tau,
        })
    }

    /// Ramsey for `n_pulses == 0`, CPMG otherwise.
    pub fn new(n_pulses: u32, tau: f64) -> Result<Self> {
        if n_pulses == 0 {
            Self::ramsey(tau)
        } else {
            Self::cpmg(n_pulses, tau)
        }
    }

    pub fn n_pulses(&self) -> u32 {
        self.n_pulses
    }

    /// Inter-pulse spacing. For Ramsey this equals the total delay.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn total_delay(&self) -> f64 {
        self.total_delay
    }

    pub fn is_ramsey(&self) -> bool {
        self.n_pulses == 0
    }

    /// Centre `ω_c = π/τ` of the CPMG pass band; `None` for Ramsey.
    pub fn center_frequency(&self) -> Option<f64> {
        (!self.is_ramsey()).then(|| PI / self.tau)
    }

    pub fn pulse_times(&self) -> Vec<f64> {
        (0..self.n_pulses)
            .map(|j| self.tau * (0.5 + f64::from(j)))
            .collect()
    }

    /// Boundary times `t₀ = 0, t₁ … t_N, t_{N+1} = T`.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut times = Vec::with_capacity(self.n_pulses as usize + 2);
        times.push(0.0);
        times.extend(self.pulse_times());
        times.push(self.total_delay);
        times
    }

    /// Value of the modulation function at `t`: `(-1)^j` on `[t_j, t_{j+1})`,
    /// with the last segment closed at `T`.
    pub fn modulation(&self, t: f64) -> Result<i8> {
        if !(0.0..=self.total_delay).contains(&t) {
            return Err(Error::Domain(format!(
                "t = {t} lies outside [0, {}]",
                self.total_delay
            )));
        }
        if self.is_ramsey() {
            return Ok(1);
        }
        // Number of pulses at or before t.
        let flips = ((t / self.tau + 0.5).floor() as i64).clamp(0, i64::from(self.n_pulses));
        Ok(if flips % 2 == 0 { 1 } else { -1 })
    }

    /// Piecewise-constant segments `(start, end, sign)` of the modulation.
    pub fn segments(&self) -> Vec<(f64, f64, f64)> {
        let b = self.boundaries();
        b.windows(2)
            .enumerate()
            .map(|(j, w)| (w[0], w[1], if j % 2 == 0 { 1.0 } else { -1.0 }))
            .collect()
    }

    /// Moments `∫₀ᵀ t^k y(t) dt` for `k = 0, 1, 2`.
    pub fn moments(&self) -> [f64; 3] {
        let mut m = [0.0; 3];
        for (lo, hi, s) in self.segments() {
            m[0] += s * (hi - lo);
            m[1] += s * (hi * hi - lo * lo) / 2.0;
            m[2] += s * (hi.powi(3) - lo.powi(3)) / 3.0;
        }
        m
    }

    /// Unnormalised transform `Y(ω) = ∫₀ᵀ y(t) e^{iωt} dt`.
    ///
    /// The filter used throughout is `ỹ(ω) = Y(ω)/√(2π)`.
    pub fn transform(&self, omega: f64) -> Complex64 {
        if omega.abs() * self.total_delay < SERIES_THRESHOLD {
            return self.transform_series(omega);
        }
        if self.is_ramsey() {
            let half = 0.5 * omega * self.total_delay;
            return cis(half) * (2.0 * half.sin() / omega);
        }
        self.transform_cpmg(omega)
    }

    fn transform_series(&self, omega: f64) -> Complex64 {
        let [m0, m1, m2] = self.moments();
        Complex64::new(m0 - 0.5 * omega * omega * m2, omega * m1)
    }

    /// Closed-form CPMG transform: two half-length end segments plus a
    /// geometric series over the `N - 1` full interior segments.
    fn transform_cpmg(&self, omega: f64) -> Complex64 {
        let n = self.n_pulses;
        // every phase below is built from e^{iωτ/4} and e^{iωT} (T = Nτ)
        let (s4, c4) = (0.25 * omega * self.tau).sin_cos();
        let q = Complex64::new(c4, s4);
        let e_t = cis(omega * self.total_delay);
        let end_len = 2.0 * s4 / omega;
        let last_sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
        let ends = (q + e_t * q.conj() * last_sign) * end_len;
        if n == 1 {
            return ends;
        }
        let q2 = q * q;
        let e_tau = q2 * q2;
        let mid_len = 2.0 * q2.im / omega;
        // Σ_{j=1}^{N-1} r^j with r = -e^{iωτ}
        let r = -e_tau;
        let one_minus_r = Complex64::new(1.0, 0.0) - r;
        let m = n - 1;
        let series = if one_minus_r.norm_sqr() > 1e-6 {
            let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
            let r_m = e_t * e_tau.conj() * sign;
            r * (Complex64::new(1.0, 0.0) - r_m) / one_minus_r
        } else {
            (1..=m)
                .map(|j| {
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    cis(f64::from(j) * omega * self.tau) * sign
                })
                .sum()
        };
        ends + series * mid_len
    }

    /// Reference evaluation of `Y(ω)` summing every segment explicitly.
    pub fn transform_by_segments(&self, omega: f64) -> Complex64 {
        if omega == 0.0 {
            return Complex64::new(self.moments()[0], 0.0);
        }
        self.segments()
            .into_iter()
            .map(|(lo, hi, s)| {
                let len = hi - lo;
                cis(0.5 * omega * (lo + hi)) * (s * 2.0 * (0.5 * omega * len).sin() / omega)
            })
            .sum()
    }

    /// Filter `|ỹ(ω,T)|² = |Y(ω)|²/(2π)`, in s².
    pub fn filter_magnitude_sq(&self, omega: f64) -> f64 {
        self.transform(omega).norm_sqr() / (2.0 * PI)
    }

    /// Cosine series of `|Σ_j w_j e^{iωt_j}|²` over the boundary times.
    ///
    /// All boundary times are integer multiples of `τ/2` (CPMG) or `T`
    /// (Ramsey), so the lags collapse onto a small integer grid.
    pub fn lag_series(&self) -> LagSeries {
        let (unit, points): (f64, Vec<(usize, f64)>) = if self.is_ramsey() {
            (self.total_delay, vec![(0, -1.0), (1, 1.0)])
        } else {
            let n = self.n_pulses as usize;
            let mut pts = Vec::with_capacity(n + 2);
            pts.push((0, -1.0));
            for i in 1..=n {
                let w = if i % 2 == 1 { 2.0 } else { -2.0 };
                pts.push((2 * i - 1, w));
            }
            pts.push((2 * n, if n.is_multiple_of(2) { 1.0 } else { -1.0 }));
            (0.5 * self.tau, pts)
        };
        let max_lag = points.last().map(|p| p.0).unwrap_or(0);
        let mut coeffs = vec![0.0; max_lag + 1];
        for &(a, wa) in &points {
            for &(b, wb) in &points {
                if a >= b {
                    coeffs[a - b] += wa * wb;
                }
            }
        }
        // Off-diagonal pairs were counted once; the series form carries the factor 2.
        LagSeries { unit, coeffs }
    }
}

#[inline]
pub(crate) fn cis(x: f64) -> Complex64 {
    let (s, c) = x.sin_cos();
    Complex64::new(c, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pulse_times_follow_half_spacing_convention() {
        let seq = PulseSequence::cpmg(2, 0.1).unwrap();
        let t = seq.pulse_times();
        assert!((t[0] - 0.05).abs() < 1e-15 && (t[1] - 0.15).abs() < 1e-15);
        assert_eq!(PulseSequence::cpmg(1, 1.0).unwrap().pulse_times(), vec![0.5]);
        assert!(PulseSequence::ramsey(3.0).unwrap().pulse_times().is_empty());
    }

    #[test]
    fn modulation_examples() {
        let r = PulseSequence::ramsey(2.0).unwrap();
        for t in [0.0, 0.3, 2.0] {
            assert_eq!(r.modulation(t).unwrap(), 1);
        }
        let echo = PulseSequence::cpmg(1, 1.0).unwrap();
        assert_eq!(echo.modulation(0.25).unwrap(), 1);
        assert_eq!(echo.modulation(0.75).unwrap(), -1);
        let seq = PulseSequence::cpmg(2, 0.1).unwrap();
        assert_eq!(seq.modulation(0.1).unwrap(), -1);
        assert_eq!(seq.modulation(0.2).unwrap(), 1);
        assert!(matches!(seq.modulation(0.21), Err(Error::Domain(_))));
        assert!(matches!(seq.modulation(-1e-9), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(PulseSequence::cpmg(0, 0.1).is_err());
        assert!(PulseSequence::cpmg(3, 0.0).is_err());
        assert!(PulseSequence::ramsey(-1.0).is_err());
        assert!(PulseSequence::ramsey(f64::NAN).is_err());
    }

    #[test]
    fn ramsey_filter_matches_sinc_kernel() {
        let t = 1.7;
        let seq = PulseSequence::ramsey(t).unwrap();
        for omega in [0.01, 0.5, 3.0, 40.0] {
            let expect = (omega * t / 2.0).sin().powi(2) / (2.0 * PI * (omega / 2.0).powi(2));
            let got = seq.filter_magnitude_sq(omega);
            assert!((got - expect).abs() <= 1e-12 * expect.max(1e-300), "{omega}");
        }
        assert!(seq.filter_magnitude_sq(2.0 * PI / t) < 1e-25);
    }

    #[test]
    fn zero_frequency_limits() {
        let r = PulseSequence::ramsey(2.0).unwrap();
        assert!((r.filter_magnitude_sq(0.0) - 4.0 / (2.0 * PI)).abs() < 1e-15);
        for n in [1, 2, 7] {
            let seq = PulseSequence::cpmg(n, 0.3).unwrap();
            assert!(seq.filter_magnitude_sq(0.0) < 1e-30);
            // continuity across the series threshold
            let w = 0.9 * SERIES_THRESHOLD / seq.total_delay();
            let w2 = 1.1 * SERIES_THRESHOLD / seq.total_delay();
            let a = seq.filter_magnitude_sq(w);
            let b = seq.filter_magnitude_sq(w2);
            assert!(a <= b * 1.5 + 1e-40 && b <= (w2 / w).powi(4) * a * 1.5 + 1e-40);
        }
    }

    #[test]
    fn closed_form_matches_segment_sum() {
        for n in [1u32, 2, 3, 20, 51] {
            let seq = PulseSequence::cpmg(n, 0.137).unwrap();
            for &omega in &[0.3, 1.0, PI / 0.137, 3.0 * PI / 0.137 + 1e-7, 55.5, 1234.5] {
                let a = seq.transform(omega);
                let b = seq.transform_by_segments(omega);
                assert!((a - b).norm() <= 1e-10 * (1.0 + b.norm()), "n={n} ω={omega}");
            }
        }
    }

    #[test]
    fn lag_series_reproduces_filter() {
        for seq in [
            PulseSequence::ramsey(0.8).unwrap(),
            PulseSequence::cpmg(1, 0.5).unwrap(),
            PulseSequence::cpmg(6, 0.2).unwrap(),
        ] {
            let lags = seq.lag_series();
            for omega in [0.7, 5.0, 31.0, 100.3] {
                let direct = seq.filter_magnitude_sq(omega);
                let series = lags.eval(omega) / (2.0 * PI * omega * omega);
                assert!((direct - series).abs() < 1e-11 * (1.0 + direct));
            }
        }
    }

    #[test]
    fn peak_sits_at_center_frequency() {
        let seq = PulseSequence::cpmg(20, 0.1).unwrap();
        let wc = seq.center_frequency().unwrap();
        let (mut best_w, mut best) = (0.0, 0.0);
        let mut w = 1.0;
        while w < 60.0 {
            let v = seq.filter_magnitude_sq(w);
            if v > best {
                best = v;
                best_w = w;
            }
            w += 0.001;
        }
        assert!((best_w - wc).abs() / wc < 0.01, "peak at {best_w}, expected {wc}");
    }

    #[test]
    fn serde_forms() {
        let seq: PulseSequence = serde_json::from_str(r#"{"n_pulses":20,"tau":0.1}"#).unwrap();
        assert!((seq.total_delay() - 2.0).abs() < 1e-12);
        let r: PulseSequence = serde_json::from_str(r#"{"n_pulses":0,"total_delay":3}"#).unwrap();
        assert!(r.is_ramsey());
        assert!(serde_json::from_str::<PulseSequence>(r#"{"n_pulses":2,"tau":0.1,"total_delay":5}"#).is_err());
        let back: PulseSequence = serde_json::from_str(&serde_json::to_string(&seq).unwrap()).unwrap();
        assert_eq!(back, seq);
    }
}
