//! Experimental parameters of the barium-137 metastable memory qubit and the
//! physical constants used by the calculators.

/// Metastable D₅/₂ lifetime (s).
pub const D52_LIFETIME: f64 = 30.14;
/// Interval between erasure (fluorescence) checks (s).
pub const CHECK_INTERVAL: f64 = 4.05e-3;
/// Pure-dephasing time inferred for the memory qubit (s).
pub const T_PHI: f64 = 136.0;
/// Measured total coherence time without erasure detection (s).
pub const T2_MEASURED: f64 = 22.0;
/// CPMG pulse spacing of the long-memory sequence (s).
pub const MEMORY_TAU: f64 = 0.1;

/// Qubit splitting at the field-insensitive point (Hz).
pub const QUBIT_FREQUENCY: f64 = 62.7e6;
/// Field of first-order insensitivity (G).
pub const INSENSITIVE_FIELD: f64 = 3.34;
/// Second-order field sensitivity (Hz/G²).
pub const FIELD_CURVATURE: f64 = 385.0;

/// Spectrum coefficients `(λ₀, λ₁, λ₂, λ₃)` reconstructed from CPMG data.
pub const MEASURED_LAMBDA: [f64; 4] = [0.0085, 0.0138, 0.0, 1.6631];

/// S₁/₂–P₁/₂ detection/cooling beam (m).
pub const DETECTION_WAVELENGTH: f64 = 493.41e-9;
/// D₅/₂–P₃/₂ resonance (m).
pub const D52_P32_WAVELENGTH: f64 = 614.17e-9;
/// D₃/₂–P₁/₂ repump (m).
pub const REPUMP_WAVELENGTH: f64 = 649.69e-9;
/// Detection beam power (W) and 1/e² diameter (m).
pub const DETECTION_POWER: f64 = 150e-6;
pub const DETECTION_DIAMETER: f64 = 20e-6;
/// Repump beam power (W) and 1/e² diameter (m).
pub const REPUMP_POWER: f64 = 20e-6;
pub const REPUMP_DIAMETER: f64 = 30e-6;
/// D₅/₂–P₃/₂ dipole matrix element (atomic units).
pub const D52_P32_DIPOLE_AU: f64 = 5.0;
/// Fraction of P₃/₂ decays that land back in D₅/₂.
pub const P32_TO_D52_BRANCHING: f64 = 0.23;

/// Ba⁺ 6P₃/₂ radiative lifetime (s). External literature value
/// (≈ 6.3 ns, laser-induced fluorescence measurements); not from the
/// experiment.
pub const P32_LIFETIME: f64 = 6.3e-9;
/// P₃/₂ decay rate γ = 1/τ (s⁻¹).
pub const P32_LINEWIDTH: f64 = 1.0 / P32_LIFETIME;

/// Elementary charge (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Bohr radius (m).
pub const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;
/// Atomic unit of electric dipole moment `e·a₀` (C·m).
pub const ATOMIC_DIPOLE: f64 = ELEMENTARY_CHARGE * BOHR_RADIUS;
/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Vacuum permittivity (F/m).
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// Speed of light (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
