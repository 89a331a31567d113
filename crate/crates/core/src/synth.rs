//! Seeded generators of series with known fractal structure.
//!
//! All randomness comes from [`ChaCha8Rng`] seeded with `seed_from_u64`,
//! and Gaussian deviates from `rand_distr::StandardNormal`, so a
//! `(generator, seed)` pair yields the same bits on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{HaeRecord, Labels, Payload};
use crate::series::TimeSeries;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// i.i.d. standard normal draws.
pub fn gen_white_noise(n: usize, seed: u64) -> Result<TimeSeries> {
    if n == 0 {
        return Err(Error::invalid("white noise length must be at least 1"));
    }
    let mut rng = seeded_rng(seed);
    TimeSeries::new((0..n).map(|_| rng.sample(StandardNormal)).collect())
}

/// Autocovariance of unit-variance fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(k: usize, hurst: f64) -> f64 {
    let k = k as f64;
    let e = 2.0 * hurst;
    0.5 * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
}

/// Fractional Gaussian noise by circulant embedding of the exact
/// autocovariance (Davies-Harte).
pub fn gen_fgn(n: usize, hurst: f64, seed: u64) -> Result<TimeSeries> {
    if n < 64 || !n.is_power_of_two() {
        return Err(Error::invalid(format!(
            "fGn length must be a power of two >= 64, got {n}"
        )));
    }
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::invalid(format!(
            "Hurst exponent must lie in (0, 1), got {hurst}"
        )));
    }
    let m = 2 * n;
    // First row of the 2n circulant: g(0..=n) then g(n-1..=1).
    let mut row: Vec<Complex64> = (0..m)
        .map(|j| {
            let lag = if j <= n { j } else { m - j };
            Complex64::new(fgn_autocovariance(lag, hurst), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut row);

    let mut rng = seeded_rng(seed);
    let mut w = Vec::with_capacity(m);
    for (j, ev) in row.iter().enumerate() {
        let lambda = ev.re;
        if lambda < -1e-9 {
            return Err(Error::NumericalFailure(format!(
                "circulant embedding eigenvalue {lambda} at index {j} is negative"
            )));
        }
        let amp = (lambda.max(0.0) / m as f64).sqrt();
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        w.push(Complex64::new(amp * a, amp * b));
    }
    fft.process(&mut w);
    TimeSeries::new(w[..n].iter().map(|z| z.re).collect())
}

/// Cell masses of the binomial measure after `levels` splits, left share `p`.
pub(crate) fn cascade_masses(levels: u32, p: f64) -> Vec<f64> {
    let mut cells = vec![1.0];
    for _ in 0..levels {
        cells = cells.iter().flat_map(|m| [m * p, m * (1.0 - p)]).collect();
    }
    cells
}

/// Deterministic binomial multiplicative cascade of length `2^levels`.
pub fn gen_binomial_cascade(levels: u32, p: f64) -> Result<TimeSeries> {
    if !(4..=20).contains(&levels) {
        return Err(Error::invalid(format!(
            "cascade levels must be in 4..=20, got {levels}"
        )));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!(
            "cascade share must lie in (0, 1), got {p}"
        )));
    }
    TimeSeries::new(cascade_masses(levels, p))
}

fn cascade_hurst_formula(p: f64, q: f64) -> f64 {
    (1.0 - (p.powf(q) + (1.0 - p).powf(q)).log2()) / q
}

/// Generalised Hurst exponent of the binomial measure:
/// `H(q) = 1/q - log2(p^q + (1-p)^q) / q`.
///
/// At `q = 0` the formula is 0/0; the value there is the central average of
/// the formula at `q = +-1e-5`.
pub fn analytic_cascade_hurst(p: f64, q: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!(
            "cascade share must lie in (0, 1), got {p}"
        )));
    }
    if !q.is_finite() {
        return Err(Error::invalid("q must be finite"));
    }
    if q == 0.0 {
        const H: f64 = 1e-5;
        return Ok(0.5 * (cascade_hurst_formula(p, H) + cascade_hurst_formula(p, -H)));
    }
    Ok(cascade_hurst_formula(p, q))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    WhiteNoise { n: usize },
    Fgn { n: usize, hurst: f64 },
    BinomialCascade { levels: u32, p: f64 },
}

impl GeneratorSpec {
    pub fn generate(&self, seed: u64) -> Result<TimeSeries> {
        match *self {
            GeneratorSpec::WhiteNoise { n } => gen_white_noise(n, seed),
            GeneratorSpec::Fgn { n, hurst } => gen_fgn(n, hurst, seed),
            GeneratorSpec::BinomialCascade { levels, p } => gen_binomial_cascade(levels, p),
        }
    }
}

/// One class of a synthetic labelled dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub generator: GeneratorSpec,
    pub labels: Labels,
}

/// Emits `counts[c]` records per class, with ids `rec-000000..` in class
/// order. Each record gets its own seed drawn from a master generator.
pub fn gen_labeled_dataset(
    classes: &[ClassSpec],
    counts: &[usize],
    seed: u64,
) -> Result<Vec<HaeRecord>> {
    if classes.len() < 2 {
        return Err(Error::invalid(
            "a labelled dataset needs at least 2 classes",
        ));
    }
    gen_records(classes, counts, seed)
}

/// [`gen_labeled_dataset`] without the two-class minimum, for single-class
/// corpora such as a batch of white noise.
pub fn gen_records(classes: &[ClassSpec], counts: &[usize], seed: u64) -> Result<Vec<HaeRecord>> {
    if classes.is_empty() || classes.len() != counts.len() {
        return Err(Error::invalid("one count per class is required"));
    }
    if counts.contains(&0) {
        return Err(Error::invalid("every class needs at least one record"));
    }
    for (i, a) in classes.iter().enumerate() {
        a.labels.validate()?;
        if classes[..i].iter().any(|b| b.labels == a.labels) {
            return Err(Error::invalid(format!(
                "duplicate class labels {:?}",
                a.labels
            )));
        }
    }
    let mut master = seeded_rng(seed);
    let jobs: Vec<(usize, &ClassSpec, u64)> = classes
        .iter()
        .zip(counts)
        .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
        .enumerate()
        .map(|(i, c)| (i, c, master.random::<u64>()))
        .collect();
    jobs.into_par_iter()
        .map(|(i, class, record_seed)| {
            Ok(HaeRecord {
                id: format!("rec-{i:06}"),
                labels: class.labels,
                payload: Payload::Hts(class.generator.generate(record_seed)?),
            })
        })
        .collect()
}
