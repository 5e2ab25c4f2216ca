//! Decoherence modelling for a dynamically decoupled metastable trapped-ion
//! memory qubit.
//!
//! * [`spectrum`] – power-law dephasing spectrum and Gaussian noise synthesis
//! * [`sequences`] – Ramsey/CPMG modulation and filter functions
//! * [`coherence`] – filter-function coherence, flat-filter data reduction,
//!   rate composition and exponential decay fits
//! * [`specfit`] – maximum-likelihood reconstruction of the spectrum from
//!   coherence measurements
//! * [`montecarlo`] – trial-level simulation with decay and erasure checks
//! * [`physics`] – field sensitivity, RF power-shift and Raman scattering
//!   calculators

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coherence;
pub mod constants;
pub mod error;
pub mod montecarlo;
pub mod physics;
pub mod quad;
pub mod sequences;
pub mod specfit;
pub mod spectrum;

pub use coherence::{
    chi, chi_flat, chi_ramsey, compose_rates, extract_noise_point, fit_exponential,
    CoherenceMeasurement, DecayFit, NoisePoint, PredictionMethod,
};
pub use error::{Error, Result};
pub use montecarlo::{run_trial, simulate, SimConfig, SimResult, TrialOutcome};
pub use sequences::PulseSequence;
pub use specfit::{fit_spectrum, SpectroscopyDataset, SpectrumFitResult};
pub use spectrum::{synthesize, Convention, HarmonicNoise, NoiseSpectrum};
