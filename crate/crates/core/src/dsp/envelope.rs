use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::filter::low_pass;
use crate::error::{Error, Result};

/// Shortest signal accepted by [`envelope`].
pub const MIN_ENVELOPE_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeConfig {
    pub max_breath_rate_hz: f64,
    pub cutoff_multiplier: f64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self { max_breath_rate_hz: 0.5, cutoff_multiplier: 1.5 }
    }
}

impl EnvelopeConfig {
    pub fn cutoff_hz(&self) -> f64 {
        self.max_breath_rate_hz * self.cutoff_multiplier
    }

    pub fn validate(&self, sampling_hz: f64) -> Result<()> {
        let c = self.cutoff_hz();
        if !(c > 0.0 && c < sampling_hz / 2.0) {
            return Err(Error::invalid(
                "envelope cutoff",
                format!(
                    "{} Hz x {} = {c} Hz must lie in (0, {}) Hz",
                    self.max_breath_rate_hz,
                    self.cutoff_multiplier,
                    sampling_hz / 2.0
                ),
            ));
        }
        Ok(())
    }
}

/// Analytic signal `x + i H{x}` via the one-sided FFT spectrum.
pub fn analytic_signal(signal: &[f64]) -> Vec<Complex<f64>> {
    let n = signal.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    for (k, c) in buf.iter_mut().enumerate() {
        let h = if k == 0 || (n % 2 == 0 && k == half) {
            1.0
        } else if k <= (n - 1) / 2 {
            2.0
        } else {
            0.0
        };
        *c *= h / n as f64;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf
}

/// Hilbert magnitude, low-passed at the configured cutoff and clamped at zero.
pub fn envelope(signal: &[f64], sampling_hz: f64, cfg: &EnvelopeConfig) -> Result<Vec<f64>> {
    cfg.validate(sampling_hz)?;
    if signal.len() < MIN_ENVELOPE_LEN {
        return Err(Error::InsufficientData(format!(
            "envelope needs at least {MIN_ENVELOPE_LEN} samples, got {}",
            signal.len()
        )));
    }
    let magnitude: Vec<f64> = analytic_signal(signal).iter().map(|c| c.norm()).collect();
    Ok(low_pass(&magnitude, cfg.cutoff_hz(), sampling_hz)?
        .into_iter()
        .map(|v| v.max(0.0))
        .collect())
}
