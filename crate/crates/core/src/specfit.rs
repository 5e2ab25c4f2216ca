//! Maximum-likelihood reconstruction of `λ₀..λ₃` from coherence data.
//!
//! Residuals are formed in χ-space, `χ_exp = −ln(contrast)` with
//! `σ_χ² = σ_c²/c²`. Because `χ` is linear in the coefficients, each
//! measurement's four basis integrals are computed once and the simplex
//! search runs on the resulting quadratic form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherence::{chi, CoherenceMeasurement};
use crate::error::{Error, Result};
use crate::spectrum::{Convention, NoiseSpectrum, DEFAULT_OMEGA_MAX, DEFAULT_OMEGA_MIN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectroscopyDataset {
    measurements: Vec<CoherenceMeasurement>,
}

impl SpectroscopyDataset {
    pub fn new(measurements: Vec<CoherenceMeasurement>) -> Result<Self> {
        if measurements.len() < 4 {
            return Err(Error::Argument(format!(
                "a four-parameter spectrum fit needs at least 4 measurements, got {}",
                measurements.len()
            )));
        }
        let mut centres: Vec<f64> = measurements
            .iter()
            .map(|m| if m.n_pulses == 0 { 0.0 } else { m.tau })
            .collect();
        centres.sort_by(f64::total_cmp);
        centres.dedup();
        if centres.len() < 2 {
            return Err(Error::Argument(
                "measurements must probe at least two distinct centre frequencies".into(),
            ));
        }
        for m in &measurements {
            m.chi()?;
            if m.variance <= 0.0 {
                return Err(Error::Argument(format!(
                    "measurement (N={}, tau={}) has zero variance",
                    m.n_pulses, m.tau
                )));
            }
        }
        Ok(Self { measurements })
    }

    pub fn measurements(&self) -> &[CoherenceMeasurement] {
        &self.measurements
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }
}

/// Band, unit convention and search controls of a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecFitOptions {
    pub convention: Convention,
    pub omega_min: f64,
    pub omega_max: f64,
    pub max_iterations: usize,
    pub starts: usize,
    pub seed: u64,
}

impl SpecFitOptions {
    pub fn new(convention: Convention) -> Self {
        Self {
            convention,
            omega_min: DEFAULT_OMEGA_MIN,
            omega_max: DEFAULT_OMEGA_MAX,
            max_iterations: 10_000,
            starts: 8,
            seed: 0x00c0_ffee,
        }
    }

    fn spectrum(&self, lambda: [f64; 4]) -> Result<NoiseSpectrum> {
        NoiseSpectrum::new(lambda, self.omega_min, self.omega_max, self.convention)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFitResult {
    pub spectrum: NoiseSpectrum,
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub convention_note: String,
    /// Normalised residuals `(χ_exp − χ_num)/σ_χ`, in dataset order.
    pub residuals: Vec<f64>,
    pub message: String,
}

/// `Σ (χ_exp − χ_num)²/σ²`, evaluating every `χ_num` by full quadrature.
pub fn cost(lambda: [f64; 4], dataset: &SpectroscopyDataset, options: &SpecFitOptions) -> Result<f64> {
    let spec = options.spectrum(lambda)?;
    let terms: Vec<f64> = dataset
        .measurements
        .par_iter()
        .map(|m| -> Result<f64> {
            let model = chi(&m.sequence()?, &spec)?;
            Ok((m.chi()? - model).powi(2) / m.chi_variance()?)
        })
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}

/// The fit cost with the per-measurement basis integrals precomputed.
#[derive(Debug, Clone)]
pub struct CostModel {
    chi_exp: Vec<f64>,
    weight: Vec<f64>,
    kernels: Vec<[f64; 4]>,
}

impl CostModel {
    pub fn new(dataset: &SpectroscopyDataset, options: &SpecFitOptions) -> Result<Self> {
        let unit: Vec<NoiseSpectrum> = (0..4)
            .map(|i| {
                let mut l = [0.0; 4];
                l[i] = 1.0;
                options.spectrum(l)
            })
            .collect::<Result<_>>()?;
        let kernels = dataset
            .measurements
            .par_iter()
            .map(|m| -> Result<[f64; 4]> {
                let seq = m.sequence()?;
                let mut k = [0.0; 4];
                for (i, s) in unit.iter().enumerate() {
                    k[i] = chi(&seq, s)?;
                }
                Ok(k)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut chi_exp = Vec::with_capacity(dataset.len());
        let mut weight = Vec::with_capacity(dataset.len());
        for m in &dataset.measurements {
            chi_exp.push(m.chi()?);
            weight.push(1.0 / m.chi_variance()?);
        }
        Ok(Self {
            chi_exp,
            weight,
            kernels,
        })
    }

    /// Basis integrals `χ(λ = eᵢ)` per measurement.
    pub fn kernels(&self) -> &[[f64; 4]] {
        &self.kernels
    }

    pub fn model(&self, lambda: &[f64; 4]) -> Vec<f64> {
        self.kernels
            .iter()
            .map(|k| k.iter().zip(lambda).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn residuals(&self, lambda: &[f64; 4]) -> Vec<f64> {
        self.model(lambda)
            .iter()
            .zip(&self.chi_exp)
            .zip(&self.weight)
            .map(|((m, x), w)| (x - m) * w.sqrt())
            .collect()
    }

    pub fn cost(&self, lambda: &[f64; 4]) -> f64 {
        self.kernels
            .iter()
            .zip(&self.chi_exp)
            .zip(&self.weight)
            .map(|((k, x), w)| {
                let m: f64 = k.iter().zip(lambda).map(|(a, b)| a * b).sum();
                w * (x - m).powi(2)
            })
            .sum()
    }
}

struct Simplex {
    best: [f64; 4],
    value: f64,
    iterations: usize,
    converged: bool,
}

/// Nelder–Mead on `x ≥ 0` (reflected at the bounds), stopping once the
/// spread of simplex values is below `1e-8` relative.
fn nelder_mead(f: &dyn Fn(&[f64; 4]) -> f64, start: [f64; 4], step: f64, max_iter: usize) -> Simplex {
    const N: usize = 4;
    let fold = |x: [f64; N]| x.map(f64::abs);
    let mut pts: Vec<[f64; N]> = vec![fold(start)];
    for i in 0..N {
        let mut p = pts[0];
        p[i] += if p[i].abs() > 1e-3 { step * p[i].abs() } else { step };
        pts.push(fold(p));
    }
    let mut vals: Vec<f64> = pts.iter().map(f).collect();
    let mut iterations = 0;
    let mut converged = false;
    let floor = 1e-14 * vals.iter().cloned().fold(0.0, f64::max).max(1e-300);
    while iterations < max_iter {
        let mut order: Vec<usize> = (0..=N).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i]).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        if vals[N] - vals[0] <= 1e-8 * vals[0].abs() + floor {
            converged = true;
            break;
        }
        iterations += 1;
        let mut centroid = [0.0; N];
        for p in &pts[..N] {
            for j in 0..N {
                centroid[j] += p[j] / N as f64;
            }
        }
        let along = |t: f64| {
            let mut x = [0.0; N];
            for j in 0..N {
                x[j] = centroid[j] + t * (pts[N][j] - centroid[j]);
            }
            fold(x)
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                pts[N] = xe;
                vals[N] = fe;
            } else {
                pts[N] = xr;
                vals[N] = fr;
            }
            continue;
        }
        if fr < vals[N - 1] {
            pts[N] = xr;
            vals[N] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[N] {
            let x = along(-0.5);
            (x, f(&x))
        } else {
            let x = along(0.5);
            (x, f(&x))
        };
        if fc < vals[N].min(fr) {
            pts[N] = xc;
            vals[N] = fc;
            continue;
        }
        let best = pts[0];
        for i in 1..=N {
            for (p, b) in pts[i].iter_mut().zip(best) {
                *p = b + 0.5 * (*p - b);
            }
            pts[i] = fold(pts[i]);
            vals[i] = f(&pts[i]);
        }
    }
    let (ib, _) = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("simplex is non-empty");
    Simplex {
        best: pts[ib],
        value: vals[ib],
        iterations,
        converged,
    }
}

/// Fits the spectrum by simplex search from `initial` plus seeded random
/// starts, then restarts from the best vertex until it stops improving.
pub fn fit_spectrum(
    dataset: &SpectroscopyDataset,
    initial: [f64; 4],
    options: &SpecFitOptions,
) -> Result<SpectrumFitResult> {
    if initial.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::Argument(format!(
            "initial coefficients must be finite and non-negative, got {initial:?}"
        )));
    }
    let model = CostModel::new(dataset, options)?;
    fit_with_model(&model, initial, options)
}

/// As [`fit_spectrum`] on a prepared [`CostModel`].
pub fn fit_with_model(
    model: &CostModel,
    initial: [f64; 4],
    options: &SpecFitOptions,
) -> Result<SpectrumFitResult> {
    // Scale each coordinate by the coefficient that alone explains the mean χ.
    let mean_chi = model.chi_exp.iter().sum::<f64>() / model.chi_exp.len() as f64;
    let mut scale = [1.0; 4];
    for (i, s) in scale.iter_mut().enumerate() {
        let k = model.kernels.iter().map(|k| k[i]).sum::<f64>() / model.kernels.len() as f64;
        if k > 0.0 && mean_chi > 0.0 {
            *s = mean_chi / k;
        }
    }
    let to_lambda = |x: &[f64; 4]| -> [f64; 4] {
        let mut l = [0.0; 4];
        for i in 0..4 {
            l[i] = x[i].abs() * scale[i];
        }
        l
    };
    let objective = |x: &[f64; 4]| model.cost(&to_lambda(x));

    let mut starts = vec![{
        let mut x = [0.0; 4];
        for i in 0..4 {
            x[i] = initial[i] / scale[i];
        }
        x
    }];
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    for _ in 1..options.starts.max(1) {
        starts.push([0; 4].map(|_| rng.random::<f64>() * 0.5));
    }
    let runs: Vec<Simplex> = starts
        .par_iter()
        .map(|&x| nelder_mead(&objective, x, 0.25, options.max_iterations))
        .collect();
    let mut iterations: usize = runs.iter().map(|r| r.iterations).sum();
    let mut best = runs
        .into_iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one start");
    for _ in 0..20 {
        let run = nelder_mead(&objective, best.best, 0.05, options.max_iterations);
        iterations += run.iterations;
        let improved = run.value < best.value * (1.0 - 1e-8);
        if run.value <= best.value {
            best = run;
        }
        if !improved {
            break;
        }
    }
    let lambda = to_lambda(&best.best);
    let initial_cost = model.cost(&initial);
    let message = if best.converged {
        "simplex spread below tolerance".to_string()
    } else {
        format!("iteration limit {} reached", options.max_iterations)
    };
    Ok(SpectrumFitResult {
        spectrum: options.spectrum(lambda)?,
        cost: best.value,
        initial_cost,
        iterations,
        converged: best.converged,
        convention_note: options.convention.note().to_string(),
        residuals: model.residuals(&lambda),
        message,
    })
}
