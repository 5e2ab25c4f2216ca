#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use memqubit::coherence::{
    compose_rates, extract_noise_point, fit_exponential_with, one_over_e_time, predict_chi,
    CoherenceMeasurement, DecayFit, DecayPoint, FitOptions, PredictionMethod, UncertaintyMethod,
};
use memqubit::constants::{D52_LIFETIME, P32_TO_D52_BRANCHING};
use memqubit::montecarlo::{fit_curve, linear_grid, simulate_curve, SimConfig};
use memqubit::physics::{
    fit_field_sensitivity, fit_rf_power_shift, raman_scattering_rate, undetectable_rate, BeamConfig,
};
use memqubit::specfit::{fit_spectrum, SpecFitOptions, SpectroscopyDataset};
use memqubit::spectrum::{spectrum_from_json, Convention, NoiseSpectrum};
use memqubit::PulseSequence;
use serde::Serialize;

use crate::io::{read_json, read_text, CliResult, Failure, Sink, Table};

#[derive(Parser)]
#[command(name = "memqubit", version, about = "Filter functions, noise spectroscopy and decay simulation for a metastable ion qubit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate |ỹ(ω)|² of a pulse sequence.
    Filter(FilterArgs),
    /// Predict contrast versus total delay from a noise spectrum.
    Predict(PredictArgs),
    /// Fit spectrum coefficients to coherence measurements.
    FitSpectrum(FitSpectrumArgs),
    /// Fit A·exp(−t/T₂) to a contrast series.
    FitDecay(FitDecayArgs),
    /// Monte Carlo contrast curve with decay and erasure detection.
    Simulate(SimulateArgs),
    /// Flat-filter noise points S(ω_c) from coherence measurements.
    ExtractNoise(ExtractNoiseArgs),
    /// Off-resonant Raman scattering rate of a beam.
    Scattering(ScatteringArgs),
    /// Quadratic fit of transition frequency against field.
    FieldFit(PairFitArgs),
    /// Linear plus square-root fit of frequency shift against RF power.
    RfFit(PairFitArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Units {
    Rad,
    Hz,
}

impl From<Units> for Convention {
    fn from(u: Units) -> Self {
        match u {
            Units::Rad => Convention::Rad,
            Units::Hz => Convention::Hz,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Full,
    Flat,
}

impl From<Method> for PredictionMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Full => PredictionMethod::Full,
            Method::Flat => PredictionMethod::Flat,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Uncertainty {
    Covariance,
    Bootstrap,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Detection,
    Repump,
}

#[derive(Args)]
struct FilterArgs {
    /// Number of π pulses; 0 gives Ramsey.
    #[arg(long)]
    n: u32,
    /// Pulse spacing (s); the total delay when --n is 0.
    #[arg(long)]
    tau: f64,
    #[arg(long, default_value_t = 0.0)]
    omega_min: f64,
    #[arg(long)]
    omega_max: f64,
    #[arg(long, default_value_t = 1000)]
    points: usize,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Spectrum JSON.
    #[arg(long)]
    spectrum: PathBuf,
    /// Required when the spectrum file does not declare its convention.
    #[arg(long, value_enum)]
    convention: Option<Units>,
    #[arg(long, value_enum, default_value = "full")]
    method: Method,
    /// CPMG pulse spacing (s); Ramsey when omitted.
    #[arg(long)]
    tau: Option<f64>,
    /// Largest total delay (s).
    #[arg(long)]
    t_max: f64,
    /// Smallest total delay (s); defaults to one pulse spacing or t-max/points.
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long, default_value_t = 30)]
    points: usize,
    /// Metastable lifetime T_D (s); `inf` disables decay.
    #[arg(long, default_value_t = D52_LIFETIME)]
    t_decay: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary with 1/e times and the convention used.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct FitSpectrumArgs {
    /// CSV with columns n_pulses, tau_s, total_delay_s, contrast, sigma.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    convention: Units,
    /// Starting coefficients λ₀,λ₁,λ₂,λ₃.
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [0.01, 0.01, 0.01, 1.0])]
    initial: Vec<f64>,
    #[arg(long)]
    omega_min: Option<f64>,
    #[arg(long)]
    omega_max: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fitted spectrum JSON.
    #[arg(long)]
    out: PathBuf,
    /// Fit report JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct FitDecayArgs {
    /// CSV with a time column (t_s or T_s) and a contrast column.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "contrast")]
    column: String,
    #[arg(long, default_value = "sigma")]
    sigma_column: String,
    /// Uncertainty used when the sigma column is absent.
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    #[arg(long, value_enum, default_value = "bootstrap")]
    uncertainty: Uncertainty,
    #[arg(long, default_value_t = 200)]
    resamples: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// SimConfig JSON.
    #[arg(long)]
    config: PathBuf,
    /// Curve CSV.
    #[arg(long)]
    out: PathBuf,
    /// Summary JSON with fitted decay times.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Overrides the master seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Largest total delay (s); defaults to the configured sequence length.
    #[arg(long)]
    t_max: Option<f64>,
    /// Smallest total delay (s); defaults to t-max/points.
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long, default_value_t = 10)]
    points: usize,
}

#[derive(Args)]
struct ExtractNoiseArgs {
    /// CSV with columns n_pulses, tau_s, total_delay_s, contrast, sigma.
    #[arg(long)]
    data: PathBuf,
    /// Units of the emitted points.
    #[arg(long, value_enum)]
    convention: Units,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "source")]
struct BeamSource {
    /// BeamConfig JSON.
    #[arg(long)]
    beam: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

#[derive(Args)]
struct ScatteringArgs {
    #[command(flatten)]
    source: BeamSource,
    /// Fraction of scattering events that end outside the qubit manifold undetected.
    #[arg(long, default_value_t = P32_TO_D52_BRANCHING)]
    branching: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PairFitArgs {
    /// Two-column CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Filter(a) => filter(a),
        Command::Predict(a) => predict(a),
        Command::FitSpectrum(a) => fit_spectrum_cmd(a),
        Command::FitDecay(a) => fit_decay(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::ExtractNoise(a) => extract_noise(a),
        Command::Scattering(a) => scattering(a),
        Command::FieldFit(a) => pair_fit(a, |d| Ok(serde_json::to_value(fit_field_sensitivity(d)?).unwrap())),
        Command::RfFit(a) => pair_fit(a, |d| Ok(serde_json::to_value(fit_rf_power_shift(d)?).unwrap())),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code)
        }
    }
}

fn sequence(n: u32, tau: f64) -> CliResult<PulseSequence> {
    Ok(if n == 0 { PulseSequence::ramsey(tau)? } else { PulseSequence::cpmg(n, tau)? })
}

fn load_spectrum(path: &Path, flag: Option<Units>) -> CliResult<NoiseSpectrum> {
    let (spec, declared) = spectrum_from_json(&read_text(path)?)
        .map_err(|e| Failure::new("parse", format!("{}: {e}", path.display())))?;
    match (declared, flag.map(Convention::from)) {
        (None, None) => Err(Failure::usage(format!(
            "{} does not declare a unit convention; pass --convention rad or --convention hz",
            path.display()
        ))),
        (Some(d), Some(f)) if d != f => Err(Failure::usage(format!(
            "{} declares convention '{d}' but --convention {f} was given",
            path.display()
        ))),
        (Some(_), _) => Ok(spec),
        (None, Some(f)) => Ok(spec.with_convention(f)),
    }
}

fn measurements(path: &Path) -> CliResult<Vec<CoherenceMeasurement>> {
    let table = Table::read(path)?;
    let cols = ["n_pulses", "tau_s", "total_delay_s", "contrast", "sigma"]
        .map(|name| table.column(name))
        .into_iter()
        .collect::<CliResult<Vec<usize>>>()?;
    table
        .rows
        .iter()
        .map(|r| {
            let n = r[cols[0]];
            if !(n >= 0.0 && n.fract() == 0.0 && n <= f64::from(u32::MAX)) {
                return Err(Failure::new("parse", format!("{}: n_pulses must be a whole number, got {n}", path.display())));
            }
            Ok(CoherenceMeasurement::new(n as u32, r[cols[1]], r[cols[2]], r[cols[3]], r[cols[4]].powi(2))?)
        })
        .collect()
}

fn filter(a: FilterArgs) -> CliResult<()> {
    let sink = Sink::open(a.out.as_deref())?;
    let seq = sequence(a.n, a.tau)?;
    if a.points < 2 || !(a.omega_max > a.omega_min) {
        return Err(Failure::new("argument", "need --points >= 2 and --omega-max > --omega-min"));
    }
    let rows = linear_grid(a.omega_min, a.omega_max, a.points)
        .into_iter()
        .map(|w| vec![w, seq.filter_magnitude_sq(w)]);
    sink.csv(&["omega_rad_per_s", "filter_mag_sq"], rows)
}

#[derive(Serialize)]
struct PredictSummary {
    convention: Convention,
    convention_note: &'static str,
    method: PredictionMethod,
    tau: Option<f64>,
    t_decay: Option<f64>,
    /// 1/e time of e^{−χ} alone.
    t_phi: Option<f64>,
    /// 1/e time including the lifetime.
    t2_without_ld: Option<f64>,
    spectrum: NoiseSpectrum,
}

fn predict(a: PredictArgs) -> CliResult<()> {
    let sink = Sink::open(a.out.as_deref())?;
    let summary = a.summary.as_deref().map(Sink::create).transpose()?;
    let spec = load_spectrum(&a.spectrum, a.convention)?;
    let method = PredictionMethod::from(a.method);
    if a.points == 0 || !(a.t_max > 0.0) {
        return Err(Failure::new("argument", "need --points >= 1 and --t-max > 0"));
    }
    let t_min = a.t_min.unwrap_or_else(|| a.tau.unwrap_or(a.t_max / a.points as f64));
    let mut rows = Vec::new();
    for t in linear_grid(t_min, a.t_max, a.points) {
        let seq = match a.tau {
            Some(tau) => PulseSequence::cpmg((t / tau).round().max(1.0) as u32, tau)?,
            None => PulseSequence::ramsey(t)?,
        };
        let c = predict_chi(&seq, &spec, method)?;
        let t = seq.total_delay();
        rows.push(vec![t, (-c - t / a.t_decay).exp(), (-c).exp()]);
    }
    sink.csv(&["T_s", "contrast_no_leakage_detection", "contrast_with_leakage_detection"], rows)?;
    if let Some(s) = summary {
        let t_phi = a.tau.map(|tau| one_over_e_time(tau, &spec, method)).transpose()?;
        let t2 = match t_phi {
            Some(tp) if a.t_decay.is_finite() => Some(compose_rates(a.t_decay, tp)?),
            other => other,
        };
        s.json(&PredictSummary {
            convention: spec.convention(),
            convention_note: spec.convention().note(),
            method,
            tau: a.tau,
            t_decay: a.t_decay.is_finite().then_some(a.t_decay),
            t_phi,
            t2_without_ld: t2,
            spectrum: spec,
        })?;
    }
    Ok(())
}

fn fit_spectrum_cmd(a: FitSpectrumArgs) -> CliResult<()> {
    let out = Sink::create(&a.out)?;
    let report = a.report.as_deref().map(Sink::create).transpose()?;
    let dataset = SpectroscopyDataset::new(measurements(&a.data)?)?;
    let mut options = SpecFitOptions::new(a.convention.into());
    if let Some(w) = a.omega_min {
        options.omega_min = w;
    }
    if let Some(w) = a.omega_max {
        options.omega_max = w;
    }
    if let Some(s) = a.seed {
        options.seed = s;
    }
    let initial = [a.initial[0], a.initial[1], a.initial[2], a.initial[3]];
    let fit = fit_spectrum(&dataset, initial, &options)?;
    out.json(&fit.spectrum)?;
    if let Some(r) = report {
        r.json(&fit)?;
    }
    Ok(())
}

fn fit_decay(a: FitDecayArgs) -> CliResult<()> {
    let sink = Sink::open(a.out.as_deref())?;
    let table = Table::read(&a.data)?;
    let t_col = match table.find("t_s") {
        Some(c) => c,
        None => table.column("T_s")?,
    };
    let c_col = table.column(&a.column)?;
    let s_col = table.find(&a.sigma_column);
    let points: Vec<DecayPoint> = table
        .rows
        .iter()
        .map(|r| {
            let sigma = s_col.map_or(a.sigma, |c| r[c]);
            DecayPoint::new(r[t_col], r[c_col], sigma * sigma)
        })
        .collect();
    let mut options = FitOptions {
        method: match a.uncertainty {
            Uncertainty::Covariance => UncertaintyMethod::Covariance,
            Uncertainty::Bootstrap => UncertaintyMethod::Bootstrap,
        },
        resamples: a.resamples,
        ..FitOptions::default()
    };
    if let Some(s) = a.seed {
        options.seed = s;
    }
    sink.json(&fit_exponential_with(&points, options)?)
}

#[derive(Serialize)]
struct SimSummary {
    master_seed: u64,
    trials: usize,
    grid_points: usize,
    t_decay: Option<f64>,
    delays: Vec<f64>,
    t2_with_ld: Option<DecayFit>,
    t2_without_ld: Option<DecayFit>,
    fit_error: Option<String>,
}

fn simulate_cmd(a: SimulateArgs) -> CliResult<()> {
    let out = Sink::create(&a.out)?;
    let summary = a.summary.as_deref().map(Sink::create).transpose()?;
    let mut config: SimConfig = read_json(&a.config)?;
    if let Some(s) = a.seed {
        config.master_seed = s;
    }
    if let Some(n) = a.trials {
        config.trials = n;
    }
    if a.points == 0 {
        return Err(Failure::new("argument", "--points must be at least 1"));
    }
    let t_max = a.t_max.unwrap_or(config.sequence.total_delay());
    let t_min = a.t_min.unwrap_or(t_max / a.points as f64);
    let points = simulate_curve(&config, &linear_grid(t_min, t_max, a.points))?;
    out.csv(
        &["T_s", "contrast_with_ld", "se_with_ld", "contrast_without_ld", "se_without_ld", "survival_fraction"],
        points.iter().map(|p| {
            let r = &p.result;
            vec![
                p.total_delay,
                r.contrast_with_ld.value,
                r.contrast_with_ld.std_error,
                r.contrast_without_ld.value,
                r.contrast_without_ld.std_error,
                r.survival_fraction,
            ]
        }),
    )?;
    if let Some(s) = summary {
        let (with, without, fit_error) = match fit_curve(&points) {
            Ok(f) => (Some(f.with_ld), Some(f.without_ld), None),
            Err(e) => (None, None, Some(e.to_string())),
        };
        s.json(&SimSummary {
            master_seed: config.master_seed,
            trials: config.trials,
            grid_points: config.grid_points,
            t_decay: config.t_decay.is_finite().then_some(config.t_decay),
            delays: points.iter().map(|p| p.total_delay).collect(),
            t2_with_ld: with,
            t2_without_ld: without,
            fit_error,
        })?;
    }
    Ok(())
}

fn extract_noise(a: ExtractNoiseArgs) -> CliResult<()> {
    let sink = Sink::open(a.out.as_deref())?;
    let convention = Convention::from(a.convention);
    let rows = measurements(&a.data)?
        .iter()
        .map(|m| {
            let (x, s) = extract_noise_point(m)?.in_convention(convention);
            Ok(vec![x, s])
        })
        .collect::<CliResult<Vec<_>>>()?;
    let header = match convention {
        Convention::Rad => ["omega_c_rad_per_s", "s_per_rad_per_s"],
        Convention::Hz => ["f_c_hz", "s_per_hz"],
    };
    sink.csv(&header, rows)
}

#[derive(Serialize)]
struct ScatteringReport {
    beam: BeamConfig,
    peak_intensity: f64,
    coupling: f64,
    detuning: f64,
    rate: f64,
    branching: f64,
    undetectable_rate: f64,
}

fn scattering(a: ScatteringArgs) -> CliResult<()> {
    let sink = Sink::open(a.out.as_deref())?;
    let beam = match (a.source.beam, a.source.preset) {
        (Some(path), _) => read_json::<BeamConfig>(&path)?,
        (None, Some(Preset::Detection)) => BeamConfig::detection_beam(),
        (None, Some(Preset::Repump)) => BeamConfig::repump_beam(),
        (None, None) => unreachable!("clap enforces one source"),
    };
    let rate = raman_scattering_rate(&beam)?;
    sink.json(&ScatteringReport {
        beam,
        peak_intensity: beam.peak_intensity(),
        coupling: beam.coupling(),
        detuning: beam.detuning(),
        rate,
        branching: a.branching,
        undetectable_rate: undetectable_rate(rate, a.branching)?,
    })
}

fn pair_fit(
    a: PairFitArgs,
    fit: impl FnOnce(&[(f64, f64)]) -> memqubit::Result<serde_json::Value>,
) -> CliResult<()> {
    let sink = Sink::open(a.out.as_deref())?;
    let data = Table::read(&a.data)?.pairs()?;
    sink.json(&fit(&data)?)
}
