//! Multifractal detrended fluctuation analysis.
//!
//! The pipeline is profile, bidirectional windowing, per-window polynomial
//! detrending, local variances, q-order fluctuation functions and a
//! log-log power-law fit per `q`. Two detrending variants are provided:
//!
//! * [`Variant::Standard`]: residual `phi - psi`.
//! * [`Variant::Hmf`]: the difference is taken after projecting both profile
//!   and trend through `sigmoid(alpha * x)`, re-centred on `1/2`, and mapped
//!   back through the inverse sigmoid. As `alpha -> 0` it reduces to the
//!   standard residual.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{grid_for_len, profile, LocalTrend, PolyFitter, TimeSeries};

/// Lower/upper clamp applied on the sigmoid plane before inverting.
pub const HMF_CLAMP_EPS: f64 = 1e-12;

pub const DEFAULT_ALPHA: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Standard,
    Hmf,
}

/// Window lengths to analyse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleGrid {
    /// `count` geometrically spaced integers from `min` to `len / 4`,
    /// resolved against each series.
    Geometric {
        count: usize,
        min: usize,
    },
    Explicit(Vec<usize>),
}

impl Default for ScaleGrid {
    fn default() -> Self {
        ScaleGrid::Geometric { count: 16, min: 16 }
    }
}

impl ScaleGrid {
    pub fn resolve(&self, len: usize) -> Result<Vec<usize>> {
        match self {
            ScaleGrid::Explicit(scales) => Ok(scales.clone()),
            ScaleGrid::Geometric { count, min } => {
                let max = len / 4;
                if *count < 3 {
                    return Err(Error::InsufficientScales(*count));
                }
                if max < *min {
                    return Err(Error::SeriesTooShort {
                        len,
                        needed: 4 * min,
                    });
                }
                let ratio = max as f64 / *min as f64;
                let mut scales: Vec<usize> = (0..*count)
                    .map(|i| {
                        let t = i as f64 / (*count - 1) as f64;
                        (*min as f64 * ratio.powf(t)).round() as usize
                    })
                    .collect();
                scales.dedup();
                Ok(scales)
            }
        }
    }
}

/// `q` values `-5, -4.75, ..., 5`.
pub fn default_q_grid() -> Vec<f64> {
    (0..=40).map(|i| -5.0 + 0.25 * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfaConfig {
    pub q_grid: Vec<f64>,
    pub s_grid: ScaleGrid,
    /// Polynomial order of the local trends.
    pub order: usize,
    /// Sigmoid scaling index, only used by [`Variant::Hmf`].
    pub alpha: f64,
    pub variant: Variant,
}

impl Default for DfaConfig {
    fn default() -> Self {
        Self {
            q_grid: default_q_grid(),
            s_grid: ScaleGrid::default(),
            order: 2,
            alpha: DEFAULT_ALPHA,
            variant: Variant::Standard,
        }
    }
}

impl DfaConfig {
    pub fn standard() -> Self {
        Self::default()
    }

    pub fn hmf(alpha: f64) -> Self {
        Self {
            alpha,
            variant: Variant::Hmf,
            ..Self::default()
        }
    }

    /// Checks the configuration against a series of length `len` and returns
    /// the concrete window lengths.
    pub fn scales_for(&self, len: usize) -> Result<Vec<usize>> {
        if self.q_grid.is_empty() {
            return Err(Error::invalid("q grid is empty"));
        }
        if self.q_grid.iter().any(|q| !q.is_finite()) {
            return Err(Error::invalid("q grid contains a non-finite value"));
        }
        if self.order == 0 {
            return Err(Error::invalid("polynomial order must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        let scales = self.s_grid.resolve(len)?;
        if scales.len() < 3 {
            return Err(Error::InsufficientScales(scales.len()));
        }
        if scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("window lengths must be strictly increasing"));
        }
        if scales[0] < self.order + 2 {
            return Err(Error::invalid(format!(
                "window length {} is below order + 2 = {}",
                scales[0],
                self.order + 2
            )));
        }
        let needed = 4 * scales[scales.len() - 1];
        if len < needed {
            return Err(Error::SeriesTooShort { len, needed });
        }
        Ok(scales)
    }
}

pub fn detrend_standard(window: &[f64], trend: &LocalTrend) -> Result<Vec<f64>> {
    check_lengths(window, trend)?;
    Ok(window
        .iter()
        .zip(&trend.fitted)
        .map(|(p, t)| p - t)
        .collect())
}

/// `1 / (1 + exp(-alpha * x))`.
pub fn sigmoid_project(alpha: f64, x: f64) -> f64 {
    1.0 / (1.0 + (-alpha * x).exp())
}

/// Inverse of [`sigmoid_project`]: `ln(y / (1 - y)) / alpha`.
///
/// In `f64`, `sigmoid_project` saturates to exactly `1.0` once `alpha * x`
/// exceeds roughly 37, so the round trip is only recoverable below that.
pub fn sigmoid_unproject(alpha: f64, y: f64) -> Result<f64> {
    if !(y > 0.0 && y < 1.0) {
        return Err(Error::Domain(y));
    }
    Ok((y.ln() - (-y).ln_1p()) / alpha)
}

/// Residuals computed on the sigmoid plane.
#[derive(Debug, Clone, PartialEq)]
pub struct HmfResiduals {
    pub values: Vec<f64>,
    /// Points whose re-centred sigmoid difference hit the clamp.
    pub clamped: usize,
}

/// `sigmoid(a) - sigmoid(b)` without cancellation.
fn sigmoid_difference(a: f64, b: f64) -> f64 {
    if a.abs() < 700.0 && b.abs() < 700.0 {
        ((a - b) * 0.5).sinh() / (2.0 * (a * 0.5).cosh() * (b * 0.5).cosh())
    } else {
        sigmoid_project(1.0, a) - sigmoid_project(1.0, b)
    }
}

/// Sigmoid-plane residual for one point, plus whether it was clamped.
///
/// Evaluates `unproject(clamp(sigmoid(phi) - sigmoid(psi) + 1/2))` in the
/// algebraically equivalent form `(2 / alpha) * atanh(2 * d)`, which keeps
/// full relative precision as `alpha -> 0`.
fn hmf_point(alpha: f64, phi: f64, psi: f64) -> (f64, bool) {
    let d = sigmoid_difference(alpha * phi, alpha * psi);
    let limit = 0.5 - HMF_CLAMP_EPS;
    let clamped = d.abs() > limit;
    let d = d.clamp(-limit, limit);
    (2.0 * (2.0 * d).atanh() / alpha, clamped)
}

pub fn detrend_hmf(alpha: f64, window: &[f64], trend: &LocalTrend) -> Result<HmfResiduals> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    check_lengths(window, trend)?;
    let mut clamped = 0;
    let values = window
        .iter()
        .zip(&trend.fitted)
        .map(|(&phi, &psi)| {
            let (v, hit) = hmf_point(alpha, phi, psi);
            clamped += hit as usize;
            v
        })
        .collect();
    Ok(HmfResiduals { values, clamped })
}

fn check_lengths(window: &[f64], trend: &LocalTrend) -> Result<()> {
    if window.len() != trend.fitted.len() {
        return Err(Error::invalid(format!(
            "window has {} points but the trend has {}",
            window.len(),
            trend.fitted.len()
        )));
    }
    Ok(())
}

/// Mean squared residual of one window.
pub fn local_variance(detrended: &[f64]) -> Result<f64> {
    if detrended.is_empty() {
        return Err(Error::invalid(
            "cannot take the variance of an empty window",
        ));
    }
    Ok(detrended.iter().map(|d| d * d).sum::<f64>() / detrended.len() as f64)
}

/// q-order fluctuation function over the local variances of one scale.
///
/// `q != 0`: `(mean(var^(q/2)))^(1/q)`. `q == 0`: `exp(mean(ln var) / 2)`.
/// Evaluated in log space so large `|q|` does not overflow.
pub fn fluctuation(variances: &[f64], q: f64) -> Result<f64> {
    if variances.is_empty() {
        return Err(Error::invalid("no variances"));
    }
    if let Some(v) = variances.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::invalid(format!("invalid variance {v}")));
    }
    let n = variances.len() as f64;
    if q <= 0.0 {
        if variances.contains(&0.0) {
            return Err(Error::DegenerateVariance { q });
        }
    } else if variances.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateVariance { q });
    }
    if q == 0.0 {
        let mean_log = variances.iter().map(|v| v.ln()).sum::<f64>() / n;
        return Ok((0.5 * mean_log).exp());
    }
    // ln(sum v^(q/2)) via log-sum-exp over the non-zero terms.
    let terms: Vec<f64> = variances
        .iter()
        .filter(|v| **v > 0.0)
        .map(|v| 0.5 * q * v.ln())
        .collect();
    let peak = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = peak + terms.iter().map(|t| (t - peak).exp()).sum::<f64>().ln();
    Ok(((log_sum - n.ln()) / q).exp())
}

/// Result of fitting `F(s) ~ s^H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurstFit {
    pub h: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Estimator of the power-law exponent from fluctuation values per scale.
pub trait HurstEstimator: Sync {
    fn fit(&self, scales: &[usize], fluctuations: &[f64]) -> Result<HurstFit>;
}

/// Ordinary least squares of `ln F` against `ln s`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogLogOls;

impl HurstEstimator for LogLogOls {
    fn fit(&self, scales: &[usize], fluctuations: &[f64]) -> Result<HurstFit> {
        if scales.len() != fluctuations.len() {
            return Err(Error::invalid(
                "scales and fluctuation values differ in length",
            ));
        }
        if scales.len() < 3 {
            return Err(Error::InsufficientScales(scales.len()));
        }
        if let Some(f) = fluctuations.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
            return Err(Error::invalid(format!(
                "fluctuation value {f} is not positive"
            )));
        }
        let xs: Vec<f64> = scales.iter().map(|&s| (s as f64).ln()).collect();
        let ys: Vec<f64> = fluctuations.iter().map(|f| f.ln()).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        if sxx == 0.0 {
            return Err(Error::invalid("all scales are identical"));
        }
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let h = sxy / sxx;
        let intercept = my - h * mx;
        let ss_res: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - intercept - h * x).powi(2))
            .sum();
        let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        let r2 = if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else {
            1.0
        };
        Ok(HurstFit { h, intercept, r2 })
    }
}

pub fn hurst_fit(scales: &[usize], fluctuations: &[f64]) -> Result<HurstFit> {
    LogLogOls.fit(scales, fluctuations)
}

/// `F_q(s)` for every `(q, s)` pair, indexed `[q][s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationSurface {
    pub q_grid: Vec<f64>,
    pub scales: Vec<usize>,
    pub values: Vec<Vec<f64>>,
    /// Sigmoid-plane clamp activations across all windows.
    pub clamped: usize,
}

/// Generalised Hurst exponents `H(q)` over a q-grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractalSeries {
    pub q_grid: Vec<f64>,
    pub h: Vec<f64>,
    pub fit_r2: Vec<f64>,
    #[serde(default)]
    pub clamped: usize,
}

impl FractalSeries {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// `H(q)` at an exact grid point.
    pub fn h_at(&self, q: f64) -> Option<f64> {
        self.q_grid.iter().position(|x| *x == q).map(|i| self.h[i])
    }

    /// Spread `max H - min H` across the grid.
    pub fn width(&self) -> f64 {
        let max = self.h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.h.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }

    /// `q,h,r2` CSV block with 17 significant digits and LF endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("q,h,r2\n");
        for ((q, h), r2) in self.q_grid.iter().zip(&self.h).zip(&self.fit_r2) {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_f64(*q),
                fmt_f64(*h),
                fmt_f64(*r2)
            ));
        }
        out
    }
}

/// Decimal float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn compute_fluctuations(series: &TimeSeries, config: &DfaConfig) -> Result<FluctuationSurface> {
    let scales = config.scales_for(series.len())?;
    let prof = profile(series);
    let per_scale: Vec<Result<(Vec<f64>, usize)>> = scales
        .par_iter()
        .map(|&s| scale_variances(prof.values(), s, config))
        .collect();
    let mut variances = Vec::with_capacity(scales.len());
    let mut clamped = 0;
    for r in per_scale {
        let (v, c) = r?;
        variances.push(v);
        clamped += c;
    }
    let values = config
        .q_grid
        .iter()
        .map(|&q| variances.iter().map(|v| fluctuation(v, q)).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(FluctuationSurface {
        q_grid: config.q_grid.clone(),
        scales,
        values,
        clamped,
    })
}

fn scale_variances(prof: &[f64], s: usize, config: &DfaConfig) -> Result<(Vec<f64>, usize)> {
    let grid = grid_for_len(prof.len(), s)?;
    let fitter = PolyFitter::new(s, config.order)?;
    let mut clamped = 0;
    let mut out = Vec::with_capacity(grid.windows().len());
    for w in grid.windows() {
        let window = &prof[w.clone()];
        let trend = fitter.fit(window)?;
        let var = match config.variant {
            Variant::Standard => local_variance(&detrend_standard(window, &trend)?)?,
            Variant::Hmf => {
                let r = detrend_hmf(config.alpha, window, &trend)?;
                clamped += r.clamped;
                local_variance(&r.values)?
            }
        };
        out.push(var);
    }
    Ok((out, clamped))
}

/// Full pipeline with the default log-log OLS estimator.
pub fn compute_hfs(series: &TimeSeries, config: &DfaConfig) -> Result<FractalSeries> {
    compute_hfs_with(series, config, &LogLogOls)
}

pub fn compute_hfs_with(
    series: &TimeSeries,
    config: &DfaConfig,
    estimator: &dyn HurstEstimator,
) -> Result<FractalSeries> {
    let surface = compute_fluctuations(series, config)?;
    let mut h = Vec::with_capacity(surface.q_grid.len());
    let mut fit_r2 = Vec::with_capacity(surface.q_grid.len());
    for row in &surface.values {
        let fit = estimator.fit(&surface.scales, row)?;
        h.push(fit.h);
        fit_r2.push(fit.r2);
    }
    Ok(FractalSeries {
        q_grid: surface.q_grid,
        h,
        fit_r2,
        clamped: surface.clamped,
    })
}
