//! Series primitives: validated time series, the cumulative profile, the
//! two-directional window tiling and per-window polynomial trends.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite, non-empty, real-valued series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeSeries {
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("time series is empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "time series value at index {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Multiplies every value by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }
}

impl TryFrom<Vec<f64>> for TimeSeries {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<TimeSeries> for Vec<f64> {
    fn from(series: TimeSeries) -> Self {
        series.values
    }
}

/// Cumulative sum of the mean-centred series. Its last element is zero up to
/// rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSeries {
    values: Vec<f64>,
}

impl ProfileSeries {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn profile(series: &TimeSeries) -> ProfileSeries {
    let mean = series.mean();
    let values = series
        .values()
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r - mean;
            Some(*acc)
        })
        .collect();
    ProfileSeries { values }
}

/// Number of non-overlapping windows of length `s` that fit into `len` points.
pub fn window_count(len: usize, s: usize) -> Result<usize> {
    if s < 2 || len < s {
        return Err(Error::InvalidWindowSize { s, len });
    }
    Ok(len / s)
}

/// Windows of one scale tiled once from the start and once from the end of
/// the series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowGrid {
    s: usize,
    per_direction: usize,
    windows: Vec<Range<usize>>,
}

impl WindowGrid {
    pub fn window_len(&self) -> usize {
        self.s
    }

    /// Windows per direction.
    pub fn per_direction(&self) -> usize {
        self.per_direction
    }

    /// All `2 * per_direction` windows: forward windows first, then backward
    /// window `n` covering `[len - n*s, len - (n-1)*s)` for `n = 1..`.
    pub fn windows(&self) -> &[Range<usize>] {
        &self.windows
    }

    pub fn forward(&self) -> &[Range<usize>] {
        &self.windows[..self.per_direction]
    }

    pub fn backward(&self) -> &[Range<usize>] {
        &self.windows[self.per_direction..]
    }
}

pub fn segment_bidirectional(profile: &ProfileSeries, s: usize) -> Result<WindowGrid> {
    grid_for_len(profile.len(), s)
}

pub(crate) fn grid_for_len(len: usize, s: usize) -> Result<WindowGrid> {
    let per_direction = window_count(len, s)?;
    let forward = (0..per_direction).map(|n| n * s..(n + 1) * s);
    let backward = (1..=per_direction).map(|n| len - n * s..len - (n - 1) * s);
    Ok(WindowGrid {
        s,
        per_direction,
        windows: forward.chain(backward).collect(),
    })
}

/// Least-squares polynomial fitted to one window against abscissae `1..=s`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTrend {
    /// Highest degree first.
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
}

/// Precomputed least-squares solver for windows of a fixed length and order.
///
/// The monomial design matrix is column-equilibrated and pseudo-inverted
/// through an SVD once, so fitting a window is a pair of small mat-vec
/// products. Numerically rank-deficient systems fall back to the
/// minimum-norm solution (in the equilibrated basis).
#[derive(Debug, Clone)]
pub struct PolyFitter {
    order: usize,
    design: DMatrix<f64>,
    pinv: DMatrix<f64>,
    column_scale: Vec<f64>,
}

impl PolyFitter {
    pub fn new(s: usize, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("polynomial order must be at least 1"));
        }
        if s <= order {
            return Err(Error::UnderdeterminedFit { points: s, order });
        }
        let cols = order + 1;
        // Column j holds k^(order - j), so coefficients come out highest degree first.
        let design = DMatrix::from_fn(s, cols, |i, j| ((i + 1) as f64).powi((order - j) as i32));
        let column_scale: Vec<f64> = design.column_iter().map(|c| c.norm()).collect();
        let mut scaled = design.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col /= column_scale[j];
        }
        let svd = scaled.svd(true, true);
        let tol = svd.singular_values.max() * (s.max(cols) as f64) * f64::EPSILON;
        let pinv = svd
            .pseudo_inverse(tol)
            .map_err(|e| Error::NumericalFailure(e.to_string()))?;
        Ok(Self {
            order,
            design,
            pinv,
            column_scale,
        })
    }

    pub fn window_len(&self) -> usize {
        self.design.nrows()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn fit(&self, window: &[f64]) -> Result<LocalTrend> {
        if window.len() != self.window_len() {
            return Err(Error::invalid(format!(
                "window has {} points, fitter expects {}",
                window.len(),
                self.window_len()
            )));
        }
        let y = DVector::from_column_slice(window);
        let mut coef = &self.pinv * y;
        for (c, scale) in coef.iter_mut().zip(&self.column_scale) {
            *c /= scale;
        }
        let fitted = &self.design * &coef;
        Ok(LocalTrend {
            coefficients: coef.iter().copied().collect(),
            fitted: fitted.iter().copied().collect(),
        })
    }
}

/// Fits an order-`order` polynomial to `window` over `k = 1..=s`.
pub fn local_trend(window: &[f64], order: usize) -> Result<LocalTrend> {
    PolyFitter::new(window.len(), order)?.fit(window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(v: &[f64]) -> TimeSeries {
        TimeSeries::new(v.to_vec()).unwrap()
    }

    #[test]
    fn profile_examples() {
        assert_eq!(profile(&ts(&[1.0, 1.0, 1.0])).values(), &[0.0, 0.0, 0.0]);
        assert_eq!(profile(&ts(&[1.0, 2.0, 3.0])).values(), &[-1.0, -1.0, 0.0]);
        assert_eq!(profile(&ts(&[5.0])).values(), &[0.0]);
    }

    #[test]
    fn series_rejects_empty_and_non_finite() {
        assert!(matches!(
            TimeSeries::new(vec![]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            TimeSeries::new(vec![1.0, f64::NAN]),
            Err(Error::InvalidInput(_))
        ));
        assert!(TimeSeries::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn window_count_examples() {
        assert_eq!(window_count(100, 30).unwrap(), 3);
        assert_eq!(window_count(100, 25).unwrap(), 4);
        assert_eq!(window_count(64, 16).unwrap(), 4);
        assert!(matches!(
            window_count(10, 1),
            Err(Error::InvalidWindowSize { .. })
        ));
        assert!(matches!(
            window_count(3, 4),
            Err(Error::InvalidWindowSize { .. })
        ));
    }

    #[test]
    fn bidirectional_grid_examples() {
        let p = profile(&ts(&[0.0; 10]));
        let g = segment_bidirectional(&p, 3).unwrap();
        assert_eq!(g.windows().len(), 6);
        let fwd: Vec<usize> = g.forward().iter().map(|r| r.start).collect();
        let mut bwd: Vec<usize> = g.backward().iter().map(|r| r.start).collect();
        bwd.sort();
        assert_eq!(fwd, vec![0, 3, 6]);
        assert_eq!(bwd, vec![1, 4, 7]);

        let g = segment_bidirectional(&profile(&ts(&[0.0; 9])), 3).unwrap();
        let mut f: Vec<_> = g.forward().to_vec();
        let mut b: Vec<_> = g.backward().to_vec();
        f.sort_by_key(|r| r.start);
        b.sort_by_key(|r| r.start);
        assert_eq!(f, b);

        assert_eq!(
            segment_bidirectional(&profile(&ts(&[0.0; 4])), 2)
                .unwrap()
                .windows()
                .len(),
            4
        );
        assert!(segment_bidirectional(&profile(&ts(&[0.0; 4])), 5).is_err());
    }

    #[test]
    fn exact_linear_and_quadratic_fits() {
        let line: Vec<f64> = (1..=12).map(|k| 2.0 * k as f64 + 1.0).collect();
        let t = local_trend(&line, 1).unwrap();
        for (y, f) in line.iter().zip(&t.fitted) {
            assert!((y - f).abs() < 1e-9);
        }
        assert!((t.coefficients[0] - 2.0).abs() < 1e-9);
        assert!((t.coefficients[1] - 1.0).abs() < 1e-9);

        let quad: Vec<f64> = (1..=20).map(|k| (k * k) as f64).collect();
        let t = local_trend(&quad, 2).unwrap();
        for (y, f) in quad.iter().zip(&t.fitted) {
            assert!((y - f).abs() < 1e-8);
        }
    }

    #[test]
    fn underdetermined_fit_is_rejected() {
        assert!(matches!(
            local_trend(&[1.0, 2.0], 2),
            Err(Error::UnderdeterminedFit {
                points: 2,
                order: 2
            })
        ));
        assert!(local_trend(&[1.0, 2.0, 3.0], 0).is_err());
    }

    fn residual_orthogonality(values: &[f64], order: usize) -> f64 {
        let t = local_trend(values, order).unwrap();
        let scale = values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-300);
        let mut worst = 0.0f64;
        for p in 0..=order {
            let dot: f64 = values
                .iter()
                .zip(&t.fitted)
                .enumerate()
                .map(|(i, (y, f))| (y - f) * ((i + 1) as f64).powi(p as i32))
                .sum();
            // Normalise by the basis column norm so each column is compared on the same footing.
            let norm: f64 = (1..=values.len())
                .map(|k| (k as f64).powi(2 * p as i32))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(dot.abs() / norm / scale);
        }
        worst
    }

    #[test]
    fn wide_window_stays_well_conditioned() {
        let values: Vec<f64> = (0..1024).map(|i| ((i as f64) * 0.37).sin() * 5.0).collect();
        assert!(residual_orthogonality(&values, 2) < 1e-6 * 1024.0);
    }

    proptest! {
        #[test]
        fn profile_is_shift_invariant(
            v in prop::collection::vec(-100.0f64..100.0, 1..200),
            c in -1e3f64..1e3,
        ) {
            let a = profile(&ts(&v));
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let b = profile(&ts(&shifted));
            let scale = v.iter().chain(shifted.iter()).fold(1.0f64, |m, x| m.max(x.abs())) * v.len() as f64;
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() <= 1e-9 * scale);
            }
        }

        #[test]
        fn profile_ends_at_zero(v in prop::collection::vec(-1e4f64..1e4, 1..500)) {
            let p = profile(&ts(&v));
            let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            prop_assert!(p.values().last().unwrap().abs() <= 1e-9 * v.len() as f64 * max.max(1e-300));
        }

        #[test]
        fn window_coverage(len in 2usize..2000, s in 2usize..200) {
            prop_assume!(s <= len);
            let g = grid_for_len(len, s).unwrap();
            let w = len / s;
            prop_assert_eq!(g.windows().len(), 2 * w);
            prop_assert!(g.windows().iter().all(|r| r.len() == s));
            let fwd: usize = g.forward().iter().map(|r| r.len()).sum();
            let bwd: usize = g.backward().iter().map(|r| r.len()).sum();
            prop_assert_eq!(fwd, s * w);
            prop_assert_eq!(bwd, s * w);
            prop_assert_eq!(g.forward().last().unwrap().end, s * w);
            prop_assert_eq!(g.backward().last().unwrap().start, len - s * w);
        }

        #[test]
        fn residuals_orthogonal_to_basis(
            v in prop::collection::vec(-10.0f64..10.0, 3..300),
            order in 1usize..3,
        ) {
            prop_assume!(v.len() > order);
            prop_assert!(residual_orthogonality(&v, order) < 1e-6 * v.len() as f64);
        }

        #[test]
        fn full_order_fit_interpolates(v in prop::collection::vec(-10.0f64..10.0, 2..8)) {
            let t = local_trend(&v, v.len() - 1).unwrap();
            let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            for (y, f) in v.iter().zip(&t.fitted) {
                prop_assert!((y - f).abs() <= 1e-6 * scale);
            }
        }
    }
}
