//! Seasonal-trend decomposition by loess.
//!
//! The loop follows Cleveland et al. (1990): inner passes alternate
//! cycle-subseries smoothing, a low-pass of the seasonal estimate and trend
//! smoothing; outer passes recompute bisquare robustness weights. After the
//! final pass each full period of the seasonal component is centred and the
//! removed level moved into the trend, so `trend + seasonal` is unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StlConfig {
    pub period_samples: usize,
    pub seasonal_window: usize,
    pub trend_window: usize,
    pub inner_iters: usize,
    pub robust_iters: usize,
}

/// Smallest odd integer `>= x`.
fn next_odd(x: f64) -> usize {
    let n = x.ceil() as usize;
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

impl StlConfig {
    pub fn new(period_samples: usize) -> Self {
        Self {
            period_samples,
            seasonal_window: 7,
            trend_window: next_odd(1.5 * period_samples as f64).max(3),
            inner_iters: 2,
            robust_iters: 1,
        }
    }

    /// Period in samples for a breathing rate, `round(fs / rate)`.
    pub fn for_rate(sampling_hz: f64, breath_rate_hz: f64) -> Result<Self> {
        if !(sampling_hz > 0.0 && breath_rate_hz > 0.0) {
            return Err(Error::invalid("breath_rate_hz", "rates must be > 0"));
        }
        let cfg = Self::new((sampling_hz / breath_rate_hz).round() as usize);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn low_pass_window(&self) -> usize {
        next_odd(self.period_samples as f64).max(3)
    }

    pub fn validate(&self) -> Result<()> {
        if self.period_samples < 2 {
            return Err(Error::invalid("period_samples", format!("{} must be >= 2", self.period_samples)));
        }
        for (name, w) in [("seasonal_window", self.seasonal_window), ("trend_window", self.trend_window)] {
            if w < 3 || w % 2 == 0 {
                return Err(Error::invalid(name, format!("{w} must be odd and >= 3")));
            }
        }
        if self.inner_iters == 0 {
            return Err(Error::invalid("inner_iters", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub residual: Vec<f64>,
    pub period_samples: usize,
}

impl Decomposition {
    pub fn len(&self) -> usize {
        self.trend.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trend.is_empty()
    }

    pub fn reconstruct(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.trend[i] + self.seasonal[i] + self.residual[i]).collect()
    }
}

/// One local fit at abscissa `x0` over points at positions `0..y.len()`.
/// Windows wider than the series widen the bandwidth by half the excess.
fn loess_point(y: &[f64], rw: Option<&[f64]>, q: usize, degree: u8, x0: f64) -> Option<f64> {
    let n = y.len();
    let (lo, hi, mut h) = if q >= n {
        let h = (x0 - 0.0).max((n - 1) as f64 - x0);
        (0, n - 1, h + ((q - n) / 2) as f64)
    } else {
        let mut l = (x0.round() as i64 - (q as i64 - 1) / 2).clamp(0, (n - q) as i64) as usize;
        while l + q < n && x0 - l as f64 > (l + q) as f64 - x0 {
            l += 1;
        }
        while l > 0 && (l + q - 1) as f64 - x0 > x0 - (l - 1) as f64 {
            l -= 1;
        }
        let h = (x0 - l as f64).max((l + q - 1) as f64 - x0);
        (l, l + q - 1, h)
    };
    if h <= 0.0 {
        h = 0.5;
    }

    let mut w = vec![0.0; hi - lo + 1];
    let mut total = 0.0;
    for (k, j) in (lo..=hi).enumerate() {
        let r = (j as f64 - x0).abs();
        let base = if r <= 0.001 * h {
            1.0
        } else if r <= 0.999 * h {
            (1.0 - (r / h).powi(3)).powi(3)
        } else {
            0.0
        };
        w[k] = base * rw.map_or(1.0, |rw| rw[j]);
        total += w[k];
    }
    if total <= 0.0 {
        return None;
    }
    w.iter_mut().for_each(|v| *v /= total);

    if degree >= 1 {
        let a: f64 = (lo..=hi).zip(&w).map(|(j, wk)| wk * j as f64).sum();
        let c: f64 = (lo..=hi).zip(&w).map(|(j, wk)| wk * (j as f64 - a).powi(2)).sum();
        if c.sqrt() > 0.001 * (n - 1) as f64 {
            let b = (x0 - a) / c;
            for (k, j) in (lo..=hi).enumerate() {
                w[k] *= b * (j as f64 - a) + 1.0;
            }
        }
    }
    Some((lo..=hi).zip(&w).map(|(j, wk)| wk * y[j]).sum())
}

/// Evaluates the smoother at each position in `xs`; where every weight
/// vanishes the point falls back to its observed value.
fn loess_at(y: &[f64], rw: Option<&[f64]>, q: usize, degree: u8, xs: impl Iterator<Item = f64>) -> Vec<f64> {
    xs.map(|x0| {
        loess_point(y, rw, q, degree, x0).unwrap_or_else(|| {
            let i = (x0.round().max(0.0) as usize).min(y.len() - 1);
            y[i]
        })
    })
    .collect()
}

/// Locally weighted regression with tricube weights over the `window`
/// nearest samples (asymmetric at the edges).
pub fn loess_smooth(series: &[f64], window: usize, degree: u8) -> Result<Vec<f64>> {
    if degree > 1 {
        return Err(Error::invalid("degree", format!("{degree} not in {{0, 1}}")));
    }
    if window % 2 == 0 || window > series.len() {
        return Err(Error::invalid(
            "window",
            format!("{window} must be odd and at most the series length {}", series.len()),
        ));
    }
    Ok(loess_at(series, None, window, degree, (0..series.len()).map(|i| i as f64)))
}

fn moving_average(x: &[f64], len: usize) -> Vec<f64> {
    x.windows(len).map(|w| w.iter().sum::<f64>() / len as f64).collect()
}

const DEGREE: u8 = 1;

fn inner_pass(y: &[f64], cfg: &StlConfig, rw: Option<&[f64]>, trend: &mut [f64], seasonal: &mut [f64]) {
    let n = y.len();
    let p = cfg.period_samples;
    let detrended: Vec<f64> = y.iter().zip(trend.iter()).map(|(a, b)| a - b).collect();

    // Cycle-subseries smoothing, extended one cycle at each end.
    let mut c = vec![0.0; n + 2 * p];
    for j in 0..p {
        let idx: Vec<usize> = (j..n).step_by(p).collect();
        let sub: Vec<f64> = idx.iter().map(|&i| detrended[i]).collect();
        let sub_rw: Option<Vec<f64>> = rw.map(|rw| idx.iter().map(|&i| rw[i]).collect());
        let m = sub.len();
        let fitted = loess_at(&sub, sub_rw.as_deref(), cfg.seasonal_window, DEGREE, (-1..=m as i64).map(|k| k as f64));
        for (k, v) in fitted.into_iter().enumerate() {
            c[j + p * k] = v;
        }
    }

    let low = moving_average(&moving_average(&moving_average(&c, p), p), 3);
    let low = loess_at(&low, None, cfg.low_pass_window(), DEGREE, (0..n).map(|i| i as f64));
    for i in 0..n {
        seasonal[i] = c[p + i] - low[i];
    }

    let deseasonal: Vec<f64> = y.iter().zip(seasonal.iter()).map(|(a, b)| a - b).collect();
    let t = loess_at(&deseasonal, rw, cfg.trend_window, DEGREE, (0..n).map(|i| i as f64));
    trend.copy_from_slice(&t);
}

fn robustness_weights(residual: &[f64]) -> Vec<f64> {
    let mut abs: Vec<f64> = residual.iter().map(|r| r.abs()).collect();
    abs.sort_by(|a, b| a.total_cmp(b));
    let n = abs.len();
    let median = if n % 2 == 1 { abs[n / 2] } else { 0.5 * (abs[n / 2 - 1] + abs[n / 2]) };
    let h = 6.0 * median;
    residual
        .iter()
        .map(|r| {
            let r = r.abs();
            if r <= 0.001 * h {
                1.0
            } else if r <= 0.999 * h {
                (1.0 - (r / h).powi(2)).powi(2)
            } else {
                0.0
            }
        })
        .collect()
}

/// Moves the mean of each full period of `seasonal` into `trend`. Trailing
/// samples past the last full period take the last period's shift.
fn center_periods(trend: &mut [f64], seasonal: &mut [f64], p: usize) {
    let n = seasonal.len();
    let mut shift = 0.0;
    for start in (0..n).step_by(p) {
        let end = (start + p).min(n);
        if end - start == p {
            shift = seasonal[start..end].iter().sum::<f64>() / p as f64;
        }
        for i in start..end {
            seasonal[i] -= shift;
            trend[i] += shift;
        }
    }
}

pub fn stl_decompose(series: &[f64], cfg: &StlConfig) -> Result<Decomposition> {
    cfg.validate()?;
    let n = series.len();
    let p = cfg.period_samples;
    if n < 2 * p {
        return Err(Error::InsufficientData(format!(
            "STL needs at least {} samples (two periods of {p}), got {n}",
            2 * p
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("STL input contains non-finite values".into()));
    }

    let mut trend = vec![0.0; n];
    let mut seasonal = vec![0.0; n];
    let mut rw: Option<Vec<f64>> = None;
    for outer in 0..=cfg.robust_iters {
        for _ in 0..cfg.inner_iters {
            inner_pass(series, cfg, rw.as_deref(), &mut trend, &mut seasonal);
        }
        if outer < cfg.robust_iters {
            let residual: Vec<f64> = (0..n).map(|i| series[i] - trend[i] - seasonal[i]).collect();
            rw = Some(robustness_weights(&residual));
        }
    }
    center_periods(&mut trend, &mut seasonal, p);
    let residual = (0..n).map(|i| series[i] - trend[i] - seasonal[i]).collect();
    Ok(Decomposition { trend, seasonal, residual, period_samples: p })
}
