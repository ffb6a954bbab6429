//! Breath-band signal chain: zero-phase low-pass, Gaussian-derivative
//! wavelet bank and Hilbert envelope.

mod envelope;
mod filter;
mod wavelet;

use serde::{Deserialize, Serialize};

pub use self::envelope::{analytic_signal, envelope, EnvelopeConfig, MIN_ENVELOPE_LEN};
pub use self::filter::{low_pass, LOW_PASS_ORDER};
pub use self::wavelet::{
    center_frequency, gauss_deriv_wavelet, scale_for_frequency, support_half_width, wavelet_bank_response,
    wavelet_transform, WaveletBankConfig, SUPPORT_SIGMAS,
};

use crate::error::Result;

/// Configuration of the full chain for one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub prefilter_cutoff_hz: f64,
    pub bank: WaveletBankConfig,
    pub envelope: EnvelopeConfig,
}

impl ChainConfig {
    /// Breathing-band defaults scaled to the sampling rate. At 1 Hz this is a
    /// 0.45 Hz prefilter, ten scales over 0.1..0.45 Hz and a 0.45 Hz envelope
    /// cutoff; above 1.67 Hz the envelope uses 0.5 Hz x 1.5.
    pub fn for_sampling(sampling_hz: f64) -> Self {
        let ceiling = 0.45 * sampling_hz;
        let env_cutoff = ceiling.min(0.75);
        Self {
            prefilter_cutoff_hz: ceiling,
            bank: WaveletBankConfig { n_scales: 10, f_low: 0.1, f_high: ceiling.min(2.0), sampling_hz },
            envelope: EnvelopeConfig { max_breath_rate_hz: env_cutoff / 1.5, cutoff_multiplier: 1.5 },
        }
    }

    pub fn sampling_hz(&self) -> f64 {
        self.bank.sampling_hz
    }

    pub fn validate(&self) -> Result<()> {
        let fs = self.sampling_hz();
        if !(self.prefilter_cutoff_hz > 0.0 && self.prefilter_cutoff_hz < fs / 2.0) {
            return Err(crate::Error::invalid("prefilter_cutoff_hz", "must lie in (0, Nyquist)"));
        }
        self.bank.validate()?;
        self.envelope.validate(fs)
    }
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self::for_sampling(1.0)
    }
}

/// Intermediate outputs of [`run_chain`], all the length of the input.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub prefiltered: Vec<f64>,
    pub wavelet: Vec<f64>,
    pub envelope: Vec<f64>,
}

pub fn run_chain(signal: &[f64], cfg: &ChainConfig) -> Result<ChainOutput> {
    cfg.validate()?;
    let prefiltered = low_pass(signal, cfg.prefilter_cutoff_hz, cfg.sampling_hz())?;
    // The bank zero-pads; centring keeps the padding step down to the local
    // deviation instead of the absolute level. Interior values are unchanged
    // because the wavelet has zero mean.
    let mean = prefiltered.iter().sum::<f64>() / prefiltered.len().max(1) as f64;
    let centred: Vec<f64> = prefiltered.iter().map(|v| v - mean).collect();
    let wavelet = wavelet_bank_response(&centred, &cfg.bank)?;
    let envelope = envelope(&wavelet, cfg.sampling_hz(), &cfg.envelope)?;
    Ok(ChainOutput { prefiltered, wavelet, envelope })
}
