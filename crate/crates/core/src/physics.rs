//! Single-formula calculators: clock-transition field sensitivity, trap-RF
//! power-shift discrimination and off-resonant Raman scattering.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constants;
use crate::error::{ensure_finite, Error, Result};

/// `f(B) = f0 + curvature·(B − b0)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSensitivityFit {
    /// Frequency at the turning point (Hz).
    pub f0: f64,
    /// Turning-point field (G).
    pub b0: f64,
    /// Hz/G².
    pub curvature: f64,
}

impl FieldSensitivityFit {
    pub fn frequency(&self, b: f64) -> f64 {
        self.f0 + self.curvature * (b - self.b0).powi(2)
    }
}

/// Solves a least-squares problem through the SVD, rejecting a design whose
/// condition number exceeds `1e10`.
fn least_squares(design: DMatrix<f64>, rhs: DVector<f64>, what: &str) -> Result<DVector<f64>> {
    // normalise columns so the rank test is scale free
    let norms: Vec<f64> = design.column_iter().map(|c| c.norm()).collect();
    if norms.contains(&0.0) {
        return Err(Error::Degenerate(format!("{what}: a design column is identically zero")));
    }
    let mut scaled = design;
    for (j, n) in norms.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*n);
    }
    let svd = scaled.svd(true, true);
    let (smax, smin) = svd
        .singular_values
        .iter()
        .fold((0.0f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
    if !(smin > 1e-10 * smax) {
        return Err(Error::Degenerate(format!(
            "{what}: design matrix is rank deficient"
        )));
    }
    let sol = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Degenerate(format!("{what}: {e}")))?;
    Ok(DVector::from_iterator(
        sol.len(),
        sol.iter().zip(&norms).map(|(x, n)| x / n),
    ))
}

fn check_points(data: &[(f64, f64)], min: usize, what: &str) -> Result<()> {
    if data.len() < min {
        return Err(Error::Argument(format!(
            "{what} needs at least {min} points, got {}",
            data.len()
        )));
    }
    for &(x, y) in data {
        ensure_finite("abscissa", x)?;
        ensure_finite("ordinate", y)?;
    }
    Ok(())
}

/// Fits a parabola to `(field G, frequency Hz)` pairs.
pub fn fit_field_sensitivity(data: &[(f64, f64)]) -> Result<FieldSensitivityFit> {
    check_points(data, 3, "field-sensitivity fit")?;
    let n = data.len() as f64;
    let bm = data.iter().map(|p| p.0).sum::<f64>() / n;
    let fm = data.iter().map(|p| p.1).sum::<f64>() / n;
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.0), h.max(p.0)));
    let fspread = data.iter().map(|p| (p.1 - fm).abs()).fold(0.0, f64::max);
    if fspread <= 1e-12 * fm.abs() {
        return Err(Error::Degenerate("frequency does not vary with field".into()));
    }
    let design = DMatrix::from_fn(data.len(), 3, |i, j| (data[i].0 - bm).powi(j as i32));
    let rhs = DVector::from_iterator(data.len(), data.iter().map(|p| p.1 - fm));
    let c = least_squares(design, rhs, "field-sensitivity fit")?;
    let (a, b, curv) = (c[0], c[1], c[2]);
    let half = 0.5 * (hi - lo);
    if curv.abs() * half * half <= 1e-9 * fspread.max(fm.abs() * 1e-12) {
        return Err(Error::Degenerate("data show no curvature".into()));
    }
    let x0 = -b / (2.0 * curv);
    let b0 = bm + x0;
    if !(lo..=hi).contains(&b0) {
        return Err(Error::Degenerate(format!(
            "turning point {b0} G lies outside the data range [{lo}, {hi}] G"
        )));
    }
    Ok(FieldSensitivityFit {
        f0: fm + a + b * x0 + curv * x0 * x0,
        b0,
        curvature: curv,
    })
}

/// Which mechanism dominates the RF-power dependence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RfShiftMechanism {
    /// Linear in power.
    AcZeeman,
    /// Square root of power.
    Quadrupole,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfShiftFit {
    pub f0: f64,
    pub c_lin: f64,
    pub c_sqrt: f64,
    /// Share of the fitted variation carried by `c_lin·P`.
    pub linear_fraction: f64,
    pub sqrt_fraction: f64,
    pub dominant: RfShiftMechanism,
}

/// Fits `f = f0 + c_lin·P + c_sqrt·√P` to `(power, shift)` pairs.
pub fn fit_rf_power_shift(data: &[(f64, f64)]) -> Result<RfShiftFit> {
    check_points(data, 4, "RF power-shift fit")?;
    if let Some(&(p, _)) = data.iter().find(|p| p.0 < 0.0) {
        return Err(Error::Domain(format!("RF power must be non-negative, got {p}")));
    }
    let mut powers: Vec<f64> = data.iter().map(|p| p.0).collect();
    powers.sort_by(f64::total_cmp);
    powers.dedup();
    if powers.len() < 3 {
        return Err(Error::Degenerate(
            "RF power-shift fit needs at least 3 distinct powers".into(),
        ));
    }
    let design = DMatrix::from_fn(data.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => data[i].0,
        _ => data[i].0.sqrt(),
    });
    let rhs = DVector::from_iterator(data.len(), data.iter().map(|p| p.1));
    let c = least_squares(design, rhs, "RF power-shift fit")?;
    let spread = |g: &dyn Fn(f64) -> f64| {
        let v: Vec<f64> = data.iter().map(|p| g(p.0)).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
    };
    let v_lin = spread(&|p| c[1] * p);
    let v_sqrt = spread(&|p| c[2] * p.sqrt());
    let total = v_lin + v_sqrt;
    let linear_fraction = if total > 0.0 { v_lin / total } else { 0.5 };
    Ok(RfShiftFit {
        f0: c[0],
        c_lin: c[1],
        c_sqrt: c[2],
        linear_fraction,
        sqrt_fraction: 1.0 - linear_fraction,
        dominant: if v_lin >= v_sqrt {
            RfShiftMechanism::AcZeeman
        } else {
            RfShiftMechanism::Quadrupole
        },
    })
}

/// An off-resonant beam driving D₅/₂ population through P₃/₂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    /// W.
    pub power: f64,
    /// 1/e² intensity diameter (m).
    pub diameter: f64,
    /// m.
    pub wavelength: f64,
    /// Atomic units of `e·a₀`.
    pub dipole_matrix_element: f64,
    /// Decay rate γ of the intermediate manifold (s⁻¹).
    pub p_linewidth: f64,
    /// Resonance wavelength of the coupled transition (m).
    pub transition_wavelength: f64,
    /// `Σ|a|²` over final states.
    #[serde(default = "unit")]
    pub amplitude_sum: f64,
}

fn unit() -> f64 {
    1.0
}

impl BeamConfig {
    /// The 493 nm detection beam of the experiment.
    pub fn detection_beam() -> Self {
        Self {
            power: constants::DETECTION_POWER,
            diameter: constants::DETECTION_DIAMETER,
            wavelength: constants::DETECTION_WAVELENGTH,
            dipole_matrix_element: constants::D52_P32_DIPOLE_AU,
            p_linewidth: constants::P32_LINEWIDTH,
            transition_wavelength: constants::D52_P32_WAVELENGTH,
            amplitude_sum: 1.0,
        }
    }

    /// The 650 nm repump beam of the experiment.
    pub fn repump_beam() -> Self {
        Self {
            power: constants::REPUMP_POWER,
            diameter: constants::REPUMP_DIAMETER,
            wavelength: constants::REPUMP_WAVELENGTH,
            ..Self::detection_beam()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("power", self.power),
            ("diameter", self.diameter),
            ("wavelength", self.wavelength),
            ("dipole_matrix_element", self.dipole_matrix_element),
            ("p_linewidth", self.p_linewidth),
            ("transition_wavelength", self.transition_wavelength),
            ("amplitude_sum", self.amplitude_sum),
        ];
        for (name, v) in fields {
            ensure_finite(name, v)?;
        }
        if self.power < 0.0 || self.amplitude_sum < 0.0 {
            return Err(Error::Domain("power and amplitude_sum must be non-negative".into()));
        }
        for (name, v) in &fields[1..6] {
            if *v <= 0.0 {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Peak intensity `2P/(πw²)` (W/m²).
    pub fn peak_intensity(&self) -> f64 {
        let w = 0.5 * self.diameter;
        2.0 * self.power / (PI * w * w)
    }

    /// Peak field amplitude `√(2I₀/ε₀c)` (V/m).
    pub fn peak_field(&self) -> f64 {
        (2.0 * self.peak_intensity() / (constants::EPSILON_0 * constants::SPEED_OF_LIGHT)).sqrt()
    }

    /// Coupling `g = E₀μ/2ħ` (rad/s).
    pub fn coupling(&self) -> f64 {
        self.peak_field() * self.dipole_matrix_element * constants::ATOMIC_DIPOLE
            / (2.0 * constants::HBAR)
    }

    /// Angular detuning `2πc(1/λ − 1/λ_t)` (rad/s).
    pub fn detuning(&self) -> f64 {
        2.0 * PI
            * constants::SPEED_OF_LIGHT
            * (1.0 / self.wavelength - 1.0 / self.transition_wavelength)
    }
}

/// Kramers–Heisenberg far-detuned rate `Γ = g²γ Σ|a|² / Δ²` (s⁻¹).
pub fn raman_scattering_rate(beam: &BeamConfig) -> Result<f64> {
    beam.validate()?;
    let delta = beam.detuning();
    if delta == 0.0 {
        return Err(Error::Domain(
            "beam is resonant with the transition; detuning is zero".into(),
        ));
    }
    let g = beam.coupling();
    Ok(g * g * beam.p_linewidth * beam.amplitude_sum / (delta * delta))
}

/// Part of a scattering rate that returns the ion to the qubit manifold and
/// so escapes erasure detection.
pub fn undetectable_rate(total_rate: f64, branching: f64) -> Result<f64> {
    ensure_finite("total_rate", total_rate)?;
    if !(0.0..=1.0).contains(&branching) {
        return Err(Error::Domain(format!(
            "branching ratio must lie in [0, 1], got {branching}"
        )));
    }
    Ok(total_rate * branching)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn parabola(f0: f64, b0: f64, k: f64, fields: &[f64]) -> Vec<(f64, f64)> {
        fields.iter().map(|&b| (b, f0 + k * (b - b0).powi(2))).collect()
    }

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn field_fit_exact() {
        let data = parabola(62.7e6, 3.34, 385.0, &grid(2.8, 3.9, 11));
        let fit = fit_field_sensitivity(&data).unwrap();
        assert!((fit.curvature - 385.0).abs() < 1e-6);
        assert!((fit.b0 - 3.34).abs() < 1e-9);
        assert!((fit.f0 - 62.7e6).abs() < 1e-5);
    }

    #[test]
    fn field_fit_noisy() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let data: Vec<_> = parabola(62.7e6, 3.34, 385.0, &grid(2.8, 3.9, 11))
            .into_iter()
            .map(|(b, f)| (b, f + noise.sample(&mut rng)))
            .collect();
        let fit = fit_field_sensitivity(&data).unwrap();
        assert!((fit.curvature / 385.0 - 1.0).abs() < 0.05);
        assert!((fit.b0 - 3.34).abs() < 0.05);
    }

    #[test]
    fn field_fit_degenerate() {
        let flat: Vec<_> = grid(2.8, 3.9, 5).into_iter().map(|b| (b, 62.7e6)).collect();
        assert!(matches!(fit_field_sensitivity(&flat), Err(Error::Degenerate(_))));
        let line: Vec<_> = grid(2.8, 3.9, 5).into_iter().map(|b| (b, 62.7e6 + 10.0 * b)).collect();
        assert!(matches!(fit_field_sensitivity(&line), Err(Error::Degenerate(_))));
        let off = parabola(1e3, 5.0, 2.0, &grid(2.8, 3.9, 6));
        assert!(matches!(fit_field_sensitivity(&off), Err(Error::Degenerate(_))));
        assert!(fit_field_sensitivity(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
    }

    #[test]
    fn rf_pure_models() {
        let powers = grid(0.5, 10.0, 8);
        let lin: Vec<_> = powers.iter().map(|&p| (p, 3.0 + 2.5 * p)).collect();
        let fit = fit_rf_power_shift(&lin).unwrap();
        assert_eq!(fit.dominant, RfShiftMechanism::AcZeeman);
        assert!((fit.c_lin / 2.5 - 1.0).abs() < 1e-6 && fit.c_sqrt.abs() < 1e-6);

        let sq: Vec<_> = powers.iter().map(|&p| (p, -1.0 + 4.0 * p.sqrt())).collect();
        let fit = fit_rf_power_shift(&sq).unwrap();
        assert_eq!(fit.dominant, RfShiftMechanism::Quadrupole);
        assert!((fit.c_sqrt / 4.0 - 1.0).abs() < 1e-6 && fit.c_lin.abs() < 1e-6);
    }

    #[test]
    fn rf_mixed_fractions() {
        let powers = grid(0.0, 9.0, 10);
        let var = |g: &dyn Fn(f64) -> f64| {
            let v: Vec<f64> = powers.iter().map(|&p| g(p)).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        };
        // choose c_sqrt so the √P term carries 10% of the variance
        let c_lin = 1.0;
        let ratio = var(&|p| c_lin * p) / var(&|p| p.sqrt());
        let c_sqrt = (ratio / 9.0).sqrt();
        let data: Vec<_> = powers.iter().map(|&p| (p, c_lin * p + c_sqrt * p.sqrt())).collect();
        let fit = fit_rf_power_shift(&data).unwrap();
        assert_eq!(fit.dominant, RfShiftMechanism::AcZeeman);
        assert!((fit.linear_fraction - 0.9).abs() < 0.05);
        assert!((fit.sqrt_fraction - 0.1).abs() < 0.05);
    }

    #[test]
    fn rf_degenerate() {
        let same: Vec<_> = (0..5).map(|_| (2.0, 1.0)).collect();
        assert!(matches!(fit_rf_power_shift(&same), Err(Error::Degenerate(_))));
        assert!(fit_rf_power_shift(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]).is_err());
    }

    #[test]
    fn raman_scalings() {
        let beam = BeamConfig::detection_beam();
        let base = raman_scattering_rate(&beam).unwrap();
        let dbl = |b: BeamConfig| raman_scattering_rate(&b).unwrap() / base;
        assert!((dbl(BeamConfig { power: 2.0 * beam.power, ..beam }) - 2.0).abs() < 1e-12);
        assert!((dbl(BeamConfig { dipole_matrix_element: 2.0 * beam.dipole_matrix_element, ..beam }) - 4.0).abs() < 1e-12);
        assert!((dbl(BeamConfig { p_linewidth: 2.0 * beam.p_linewidth, ..beam }) - 2.0).abs() < 1e-12);
        assert_eq!(raman_scattering_rate(&BeamConfig { power: 0.0, ..beam }).unwrap(), 0.0);
        let res = BeamConfig { wavelength: beam.transition_wavelength, ..beam };
        assert!(matches!(raman_scattering_rate(&res), Err(Error::Domain(_))));
    }

    #[test]
    fn raman_by_hand() {
        let beam = BeamConfig::detection_beam();
        let i0 = 2.0 * 150e-6 / (PI * 1e-10);
        let e0 = (2.0 * i0 / (8.854_187_812_8e-12 * 299_792_458.0)).sqrt();
        let g = e0 * 5.0 * 1.602_176_634e-19 * 5.291_772_109_03e-11 / (2.0 * 1.054_571_817e-34);
        let delta = 2.0 * PI * 299_792_458.0 * (1.0 / 493.41e-9 - 1.0 / 614.17e-9);
        let expect = g * g / 6.3e-9 / (delta * delta);
        let got = raman_scattering_rate(&beam).unwrap();
        assert!((got / expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn undetectable() {
        assert!((undetectable_rate(2e-3, 0.23).unwrap() - 4.6e-4).abs() < 1e-15);
        assert_eq!(undetectable_rate(0.7, 0.0).unwrap(), 0.0);
        assert_eq!(undetectable_rate(0.7, 1.0).unwrap(), 0.7);
        assert!(matches!(undetectable_rate(1.0, 1.5), Err(Error::Domain(_))));
        assert!(matches!(undetectable_rate(1.0, -0.1), Err(Error::Domain(_))));
    }
}
