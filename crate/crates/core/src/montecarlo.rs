//! Trial-level simulation of the memory experiment.
//!
//! Each trial draws a noise trajectory, integrates its phase exactly over the
//! sequence's ±1 segments, draws a spontaneous-decay time and an erasure
//! flag, and reads out at two analysis phases. Trials are seeded by
//! `trial_seed(master_seed, index)` and aggregated in index order, so results
//! do not depend on the number of worker threads.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::coherence::{fit_exponential, DecayFit, DecayPoint};
use crate::constants;
use crate::error::{Error, Result};
use crate::sequences::PulseSequence;
use crate::spectrum::{synthesize_on, FrequencySampling, HarmonicNoise, LogGrid, NoiseSpectrum};

fn default_t_decay() -> f64 {
    constants::D52_LIFETIME
}
fn default_check_interval() -> f64 {
    constants::CHECK_INTERVAL
}
fn default_fidelity() -> f64 {
    1.0
}
fn default_trials() -> usize {
    10_000
}
fn default_grid_points() -> usize {
    20_000
}
fn default_sampling() -> FrequencySampling {
    FrequencySampling::Jittered
}

/// `null` stands for an infinite lifetime.
fn lifetime<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub sequence: PulseSequence,
    pub spectrum: NoiseSpectrum,
    /// Mean time to spontaneous decay (s); `f64::INFINITY` disables decay.
    #[serde(default = "default_t_decay", deserialize_with = "lifetime")]
    pub t_decay: f64,
    #[serde(default = "default_check_interval")]
    pub check_interval: f64,
    #[serde(default = "default_fidelity")]
    pub detection_fidelity: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_sampling")]
    pub sampling: FrequencySampling,
}

impl SimConfig {
    /// A configuration with the experiment's decay and check parameters.
    pub fn new(sequence: PulseSequence, spectrum: NoiseSpectrum) -> Self {
        Self {
            sequence,
            spectrum,
            t_decay: default_t_decay(),
            check_interval: default_check_interval(),
            detection_fidelity: default_fidelity(),
            trials: default_trials(),
            master_seed: 0,
            grid_points: default_grid_points(),
            sampling: default_sampling(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_decay.is_nan() || self.t_decay <= 0.0 {
            return Err(Error::Argument(format!("t_decay must be positive, got {}", self.t_decay)));
        }
        let t = self.sequence.total_delay();
        if !(self.check_interval > 0.0 && self.check_interval < t) {
            return Err(Error::Argument(format!(
                "check_interval must lie in (0, {t}), got {}",
                self.check_interval
            )));
        }
        if !(0.0..=1.0).contains(&self.detection_fidelity) {
            return Err(Error::Argument(format!(
                "detection_fidelity must lie in [0, 1], got {}",
                self.detection_fidelity
            )));
        }
        if self.trials == 0 {
            return Err(Error::Argument("trials must be at least 1".into()));
        }
        if self.grid_points == 0 {
            return Err(Error::Argument("grid_points must be at least 1".into()));
        }
        Ok(())
    }

    fn grid(&self) -> Result<LogGrid> {
        LogGrid::new(self.spectrum.omega_min(), self.spectrum.omega_max(), self.grid_points)
    }

    fn is_noiseless(&self) -> bool {
        self.spectrum.lambda().iter().all(|&l| l == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// `θ = ∫ y(t) β(t) dt` (rad).
    pub accumulated_phase: f64,
    /// Time of spontaneous decay, when it happened before readout (s).
    pub decay_time: Option<f64>,
    /// Check at which a flagged decay was seen (s).
    pub flag_time: Option<f64>,
    pub erasure_flagged: bool,
    pub readout_bit_phase0: u8,
    pub readout_bit_phase_pi: u8,
}

impl TrialOutcome {
    fn difference(&self) -> f64 {
        f64::from(self.readout_bit_phase0) - f64::from(self.readout_bit_phase_pi)
    }
}

/// A sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub count: usize,
}

impl Estimate {
    /// Mean and standard error of `values`; no samples gives `NaN ± ∞`.
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let (mut n, mut s, mut s2) = (0usize, 0.0, 0.0);
        for v in values {
            n += 1;
            s += v;
            s2 += v * v;
        }
        if n == 0 {
            return Self {
                value: f64::NAN,
                std_error: f64::INFINITY,
                count: 0,
            };
        }
        let nf = n as f64;
        let mean = s / nf;
        let var = if n > 1 {
            ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        Self {
            value: mean,
            std_error: (var / nf).sqrt(),
            count: n,
        }
    }

    pub fn is_defined(&self) -> bool {
        self.count > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Contrast over trials with no flagged erasure.
    pub contrast_with_ld: Estimate,
    /// Contrast over all trials.
    pub contrast_without_ld: Estimate,
    /// Fraction of trials with no decay before readout.
    pub survival_fraction: f64,
    pub trials_used_ld: usize,
    pub trials: usize,
}

impl SimResult {
    /// `−ln(contrast)` of the post-selected estimate, with its delta-method
    /// standard error.
    pub fn chi_with_ld(&self) -> (f64, f64) {
        let c = self.contrast_with_ld;
        (-c.value.ln(), c.std_error / c.value)
    }
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `index`: `mix(mix(master) ^ index)`.
pub fn trial_seed(master_seed: u64, index: u64) -> u64 {
    mix(mix(master_seed) ^ index)
}

/// `θ = Σ A_k Re(e^{iφ_k} Y(ω_k))`, exact for piecewise-constant modulation.
pub fn accumulated_phase(seq: &PulseSequence, noise: &HarmonicNoise) -> f64 {
    noise
        .harmonics
        .iter()
        .map(|h| {
            let y = seq.transform(h.omega);
            h.amplitude * (y.re * h.phase.cos() - y.im * h.phase.sin())
        })
        .sum()
}

/// One trial of the protocol.
pub fn run_trial(config: &SimConfig, trial_index: u64) -> Result<TrialOutcome> {
    config.validate()?;
    Ok(trial(config, &config.grid()?, trial_index))
}

fn trial(config: &SimConfig, grid: &LogGrid, trial_index: u64) -> TrialOutcome {
    let seed = trial_seed(config.master_seed, trial_index);
    let theta = if config.is_noiseless() {
        0.0
    } else {
        let noise = synthesize_on(grid, &config.spectrum, seed, config.sampling);
        accumulated_phase(&config.sequence, &noise)
    };
    // decay and readout draws use an independent stream of the same seed
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let t = config.sequence.total_delay();
    let drawn = if config.t_decay.is_finite() {
        Exp::new(1.0 / config.t_decay)
            .expect("positive rate")
            .sample(&mut rng)
    } else {
        f64::INFINITY
    };
    let flag_draw: f64 = rng.random();
    let u0: f64 = rng.random();
    let upi: f64 = rng.random();
    let decay_time = (drawn < t).then_some(drawn);
    let erasure_flagged = decay_time.is_some() && flag_draw < config.detection_fidelity;
    let flag_time = erasure_flagged.then(|| {
        let k = (drawn / config.check_interval).ceil().max(1.0);
        (k * config.check_interval).min(t)
    });
    let (b0, bpi) = if decay_time.is_some() {
        (1, 1)
    } else {
        let p0 = 0.5 * (1.0 + theta.cos());
        let ppi = 0.5 * (1.0 + (theta + PI).cos());
        (u8::from(u0 < p0), u8::from(upi < ppi))
    };
    TrialOutcome {
        accumulated_phase: theta,
        decay_time,
        flag_time,
        erasure_flagged,
        readout_bit_phase0: b0,
        readout_bit_phase_pi: bpi,
    }
}

/// Runs `config.trials` trials and forms both contrast estimates.
///
/// Standard errors are those of the per-trial difference
/// `b(0) − b(π)`, which accounts for the two readouts sharing one phase.
pub fn simulate(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let grid = config.grid()?;
    let outcomes: Vec<TrialOutcome> = (0..config.trials as u64)
        .into_par_iter()
        .map(|i| trial(config, &grid, i))
        .collect();
    Ok(aggregate(&outcomes))
}

fn aggregate(outcomes: &[TrialOutcome]) -> SimResult {
    let with_ld = Estimate::of(
        outcomes
            .iter()
            .filter(|o| !o.erasure_flagged)
            .map(TrialOutcome::difference),
    );
    let without_ld = Estimate::of(outcomes.iter().map(TrialOutcome::difference));
    let survivors = outcomes.iter().filter(|o| o.decay_time.is_none()).count();
    SimResult {
        contrast_with_ld: with_ld,
        contrast_without_ld: without_ld,
        survival_fraction: survivors as f64 / outcomes.len() as f64,
        trials_used_ld: with_ld.count,
        trials: outcomes.len(),
    }
}

/// One point of a contrast-versus-delay curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub total_delay: f64,
    pub n_pulses: u32,
    pub result: SimResult,
}

/// Simulates the configured sequence family at each total delay.
///
/// CPMG points keep the configured spacing and use `round(T/τ)` pulses;
/// Ramsey points use `T` directly. Point `i` runs with master seed
/// `trial_seed(master_seed, i)`.
pub fn simulate_curve(config: &SimConfig, delays: &[f64]) -> Result<Vec<CurvePoint>> {
    delays
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let sequence = if config.sequence.is_ramsey() {
                PulseSequence::ramsey(t)?
            } else {
                let tau = config.sequence.tau();
                let n = (t / tau).round();
                if !(n >= 1.0 && n <= f64::from(u32::MAX)) {
                    return Err(Error::Argument(format!(
                        "delay {t} s is not reachable with pulse spacing {tau} s"
                    )));
                }
                PulseSequence::cpmg(n as u32, tau)?
            };
            let point = SimConfig {
                sequence,
                master_seed: trial_seed(config.master_seed, i as u64),
                ..config.clone()
            };
            let result = simulate(&point)?;
            Ok(CurvePoint {
                total_delay: sequence.total_delay(),
                n_pulses: sequence.n_pulses(),
                result,
            })
        })
        .collect()
}

/// Exponential fits of a curve with and without post-selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub with_ld: DecayFit,
    pub without_ld: DecayFit,
}

/// Fits `A·e^{−T/T₂}` to both contrast series. Standard errors are floored
/// at one trial's resolution so that noiseless points keep finite weight.
pub fn fit_curve(points: &[CurvePoint]) -> Result<CurveFit> {
    let series = |pick: fn(&SimResult) -> Estimate| -> Vec<DecayPoint> {
        points
            .iter()
            .filter_map(|p| {
                let e = pick(&p.result);
                e.is_defined().then(|| {
                    let floor = 1.0 / e.count as f64;
                    DecayPoint::new(p.total_delay, e.value, e.std_error.max(floor).powi(2))
                })
            })
            .collect()
    };
    Ok(CurveFit {
        with_ld: fit_exponential(&series(|r| r.contrast_with_ld))?,
        without_ld: fit_exponential(&series(|r| r.contrast_without_ld))?,
    })
}

/// Evenly spaced delays `lo, …, hi`.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}
