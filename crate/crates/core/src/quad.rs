//! Globally adaptive Gauss-Kronrod quadrature and closed-form pieces used to
//! close off oscillatory power-law tails.
//!
//! The integrators in [`crate::coherence`] and [`crate::spectrum`] split every
//! integral into a "head", where the integrand is resolved by adaptive
//! quadrature over caller-supplied breakpoints, and a "tail", where the
//! integrand is a power law times a finite cosine series and is integrated by
//! asymptotic integration by parts.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    /// Maximum number of bisections on top of the initial partition.
    pub max_bisections: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 0.0,
            rel: 1e-10,
            max_bisections: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub subintervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.lo.total_cmp(&self.lo))
    }
}

/// 21-point Kronrod rule with the embedded 10-point Gauss rule; error
/// estimate follows the QUADPACK heuristic.
/// Returns `(value, error, roundoff floor of the error)`.
fn gk21<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> (f64, f64, f64) {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut res_g = 0.0;
    let mut res_k = fc * WGK[10];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let result = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON * res_abs;
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(floor);
    }
    (result, err, floor)
}

/// Integrates `f` over `[breaks[0], breaks[last]]`, starting from the
/// partition given by `breaks` (strictly increasing) and bisecting the
/// subinterval with the largest error estimate until the total error meets
/// the tolerance.
///
/// The initial partition is evaluated in parallel; the result does not
/// depend on the number of worker threads.
pub fn integrate<F>(f: F, breaks: &[f64], tol: Tolerance) -> Result<Estimate>
where
    F: Fn(f64) -> f64 + Sync,
{
    if breaks.len() < 2 {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            subintervals: 0,
        });
    }
    if breaks.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Argument(
            "quadrature breakpoints must be strictly increasing".into(),
        ));
    }

    let initial: Vec<Segment> = breaks
        .par_windows(2)
        .map(|w| {
            let (value, error, _) = gk21(&f, w[0], w[1]);
            Segment {
                lo: w[0],
                hi: w[1],
                value,
                error,
            }
        })
        .collect();

    let mut total: f64 = initial.iter().map(|s| s.value).sum();
    let mut total_err: f64 = initial.iter().map(|s| s.error).sum();
    let mut heap: BinaryHeap<Segment> = initial.into_iter().collect();
    let mut finished: Vec<Segment> = Vec::new();
    let mut bisections = 0;

    while total_err > tol.abs.max(tol.rel * total.abs()) {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.lo + worst.hi);
        let too_small = !(mid > worst.lo && mid < worst.hi)
            || (worst.hi - worst.lo) <= 1e-13 * worst.hi.abs().max(worst.lo.abs());
        if bisections >= tol.max_bisections || too_small {
            return Err(Error::Quadrature {
                estimate: total,
                error: total_err,
                subdivisions: heap.len() + finished.len() + 1,
                worst_lo: worst.lo,
                worst_hi: worst.hi,
                worst_error: worst.error,
            });
        }
        bisections += 1;
        let (lv, le, lf) = gk21(&f, worst.lo, mid);
        let (rv, re, rf) = gk21(&f, mid, worst.hi);
        total += lv + rv - worst.value;
        total_err += le + re - worst.error;
        for (seg, floor) in [
            (
                Segment {
                    lo: worst.lo,
                    hi: mid,
                    value: lv,
                    error: le,
                },
                lf,
            ),
            (
                Segment {
                    lo: mid,
                    hi: worst.hi,
                    value: rv,
                    error: re,
                },
                rf,
            ),
        ] {
            // Segments already at roundoff level cannot improve further.
            if seg.error <= floor || seg.error <= 50.0 * f64::EPSILON * seg.value.abs() {
                finished.push(seg);
            } else {
                heap.push(seg);
            }
        }
    }

    // Re-sum in positional order so the value is independent of heap history.
    let mut all: Vec<Segment> = heap.into_vec();
    all.extend(finished);
    all.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let value = all.iter().map(|s| s.value).sum();
    let error = all.iter().map(|s| s.error).sum();
    Ok(Estimate {
        value,
        error,
        subintervals: all.len(),
    })
}

/// `∫_a^b x^p dx` for `0 < a <= b`.
pub fn power_integral(p: i32, a: f64, b: f64) -> f64 {
    if p == -1 {
        (b / a).ln()
    } else {
        let q = f64::from(p + 1);
        (b.powf(q) - a.powf(q)) / q
    }
}

/// `∫_a^b x^p cos(d x) dx` by repeated integration by parts.
///
/// Exact for `p >= 0`. For negative `p` the series is asymptotic and needs
/// `d·a` well above `|p|`; callers keep `d·a > 100`.
pub fn power_cos_integral(p: i32, d: f64, a: f64, b: f64) -> f64 {
    debug_assert!(d > 0.0 && a > 0.0 && b >= a);
    antiderivative(p, d, b) - antiderivative(p, d, a)
}

fn antiderivative(p: i32, d: f64, x: f64) -> f64 {
    let id = Complex64::new(0.0, d);
    let mut term = Complex64::new(x.powi(p), 0.0) / id;
    let mut sum = term;
    let mut k = 0;
    loop {
        let factor = -f64::from(p - k);
        if factor == 0.0 {
            break;
        }
        let next = term * factor / (id * x);
        if next.norm() >= term.norm() || k > 60 {
            break;
        }
        sum += next;
        term = next;
        k += 1;
        if term.norm() <= 1e-18 * sum.norm() {
            break;
        }
    }
    let phase = d * x;
    (Complex64::new(phase.cos(), phase.sin()) * sum).re
}
