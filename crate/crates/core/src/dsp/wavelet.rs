use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width of the sampled wavelet support, in units of sigma.
pub const SUPPORT_SIGMAS: f64 = 4.0;

/// First derivative of a Gaussian, `-(t / sigma^2) exp(-t^2 / (2 sigma^2))`.
pub fn gauss_deriv_wavelet(t: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma", format!("{sigma} must be > 0")));
    }
    Ok(-(t / (sigma * sigma)) * (-(t * t) / (2.0 * sigma * sigma)).exp())
}

/// Frequency of maximum spectral response of the wavelet with width `sigma`:
/// `f_c = 1 / (2 pi sigma)`.
pub fn center_frequency(sigma: f64) -> f64 {
    1.0 / (2.0 * std::f64::consts::PI * sigma)
}

pub fn scale_for_frequency(f_c: f64) -> f64 {
    1.0 / (2.0 * std::f64::consts::PI * f_c)
}

/// Support half-width in samples for scale `a` (seconds).
pub fn support_half_width(scale: f64, sampling_hz: f64) -> usize {
    (SUPPORT_SIGMAS * scale * sampling_hz).ceil() as usize
}

/// Correlates the signal with the wavelet at scale `scale` (seconds) and
/// every integer translation. The kernel is `a^{-1/2} psi((t - b) / a)` with
/// the unit-width mother wavelet, integrated with step `1/sampling_hz`.
/// Edges are zero-padded, so output length equals input length.
pub fn wavelet_transform(signal: &[f64], scale: f64, sampling_hz: f64) -> Result<Vec<f64>> {
    if !(scale > 0.0) {
        return Err(Error::invalid("scale", format!("{scale} must be > 0")));
    }
    let fc = center_frequency(scale);
    if fc >= sampling_hz / 2.0 {
        return Err(Error::invalid(
            "scale",
            format!("center frequency {fc:.4} Hz not below Nyquist {} Hz", sampling_hz / 2.0),
        ));
    }
    let h = support_half_width(scale, sampling_hz);
    if signal.len() < 2 * h + 1 {
        return Err(Error::InsufficientData(format!(
            "signal of {} samples shorter than wavelet support of {} samples",
            signal.len(),
            2 * h + 1
        )));
    }
    let dt = 1.0 / sampling_hz;
    let norm = dt / scale.sqrt();
    let kernel: Vec<f64> = (-(h as i64)..=h as i64)
        .map(|j| norm * gauss_deriv_wavelet(j as f64 * dt / scale, 1.0).expect("unit sigma"))
        .collect();
    let n = signal.len() as i64;
    Ok((0..n)
        .map(|b| {
            kernel
                .iter()
                .enumerate()
                .filter_map(|(k, w)| {
                    let idx = b + k as i64 - h as i64;
                    (0..n).contains(&idx).then(|| signal[idx as usize] * w)
                })
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveletBankConfig {
    pub n_scales: usize,
    pub f_low: f64,
    pub f_high: f64,
    pub sampling_hz: f64,
}

impl WaveletBankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_scales == 0 {
            return Err(Error::invalid("n_scales", "must be >= 1"));
        }
        if !(0.0 < self.f_low && self.f_low < self.f_high && self.f_high < self.sampling_hz / 2.0) {
            return Err(Error::invalid(
                "wavelet band",
                format!(
                    "require 0 < f_low ({}) < f_high ({}) < Nyquist ({})",
                    self.f_low,
                    self.f_high,
                    self.sampling_hz / 2.0
                ),
            ));
        }
        Ok(())
    }

    /// Centre frequencies, linearly spaced over [f_low, f_high].
    pub fn center_frequencies(&self) -> Vec<f64> {
        if self.n_scales == 1 {
            return vec![self.f_low];
        }
        let step = (self.f_high - self.f_low) / (self.n_scales - 1) as f64;
        (0..self.n_scales).map(|i| self.f_low + step * i as f64).collect()
    }

    pub fn scales(&self) -> Vec<f64> {
        self.center_frequencies().into_iter().map(scale_for_frequency).collect()
    }

    /// Widest support half-width over the bank, in samples.
    pub fn max_support(&self) -> usize {
        support_half_width(scale_for_frequency(self.f_low), self.sampling_hz)
    }
}

/// Sum of the wavelet transforms over the bank's scales. Scales run in
/// parallel but are summed in scale order.
pub fn wavelet_bank_response(signal: &[f64], cfg: &WaveletBankConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let per_scale: Vec<Vec<f64>> = cfg
        .scales()
        .par_iter()
        .map(|&a| wavelet_transform(signal, a, cfg.sampling_hz))
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; signal.len()];
    for response in &per_scale {
        for (o, r) in out.iter_mut().zip(response) {
            *o += r;
        }
    }
    Ok(out)
}
