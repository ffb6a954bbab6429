use crate::error::{Error, Result};

/// Butterworth order of the zero-phase low-pass.
pub const LOW_PASS_ORDER: usize = 4;

/// Transposed direct-form II biquad with unit DC gain.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn low_pass(cutoff_hz: f64, sampling_hz: f64, q: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * cutoff_hz / sampling_hz;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        let a0 = 1.0 + alpha;
        let b0 = (1.0 - cos) / 2.0 / a0;
        Self {
            b: [b0, 2.0 * b0, b0],
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
        }
    }

    /// Runs the section in place, starting from the steady state for `x[0]`.
    fn run(&self, x: &mut [f64]) {
        let Some(&x0) = x.first() else { return };
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let mut s2 = (b2 - a2) * x0;
        let mut s1 = (b1 - a1) * x0 + s2;
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + s1;
            s1 = b1 * input - a1 * y + s2;
            s2 = b2 * input - a2 * y;
            *v = y;
        }
    }
}

fn butterworth_sections(cutoff_hz: f64, sampling_hz: f64) -> Vec<Biquad> {
    // Pole-pair quality factors of an even-order Butterworth prototype.
    (0..LOW_PASS_ORDER / 2)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + 1) as f64 / (2 * LOW_PASS_ORDER) as f64;
            Biquad::low_pass(cutoff_hz, sampling_hz, 1.0 / (2.0 * theta.cos()))
        })
        .collect()
}

/// Zero-phase (forward-backward) Butterworth low-pass with odd-extension
/// padding at both ends.
pub fn low_pass(signal: &[f64], cutoff_hz: f64, sampling_hz: f64) -> Result<Vec<f64>> {
    if !(sampling_hz > 0.0 && sampling_hz.is_finite()) {
        return Err(Error::invalid("sampling_hz", "must be > 0"));
    }
    if !(cutoff_hz > 0.0 && cutoff_hz < sampling_hz / 2.0) {
        return Err(Error::invalid(
            "cutoff_hz",
            format!("{cutoff_hz} Hz must lie in (0, {}) Hz", sampling_hz / 2.0),
        ));
    }
    let n = signal.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let sections = butterworth_sections(cutoff_hz, sampling_hz);
    let pad = ((3.0 * sampling_hz / cutoff_hz).ceil() as usize).max(3 * (2 * LOW_PASS_ORDER + 1)).min(n - 1);

    let mut ext = Vec::with_capacity(n + 2 * pad);
    let (first, last) = (signal[0], signal[n - 1]);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - signal[i]));
    ext.extend_from_slice(signal);
    ext.extend((1..=pad).map(|i| 2.0 * last - signal[n - 1 - i]));

    for s in &sections {
        s.run(&mut ext);
    }
    ext.reverse();
    for s in &sections {
        s.run(&mut ext);
    }
    ext.reverse();
    Ok(ext[pad..pad + n].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn amplitude_at(x: &[f64], freq: f64, fs: f64) -> f64 {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        let k = (freq * x.len() as f64 / fs).round() as usize;
        2.0 * buf[k].norm() / x.len() as f64
    }

    #[test]
    fn dc_passes_unchanged() {
        let x = vec![3.25; 200];
        for (i, y) in low_pass(&x, 0.1, 1.0).unwrap().iter().enumerate() {
            assert!((y - 3.25).abs() < 1e-9, "sample {i}: {y}");
        }
    }

    #[test]
    fn stopband_tone_is_suppressed() {
        let fs = 1.0;
        let x: Vec<f64> = (0..1000)
            .map(|i| {
                let t = i as f64 / fs;
                (2.0 * std::f64::consts::PI * 0.05 * t).sin() + (2.0 * std::f64::consts::PI * 0.45 * t).sin()
            })
            .collect();
        let y = low_pass(&x, 0.1, fs).unwrap();
        let before = amplitude_at(&x, 0.45, fs);
        let after = amplitude_at(&y, 0.45, fs);
        assert!(before / after >= 10.0, "ratio {}", before / after);
        let pass = amplitude_at(&y, 0.05, fs) / amplitude_at(&x, 0.05, fs);
        assert!(pass > 0.9, "passband gain {pass}");
    }

    #[test]
    fn attenuation_at_twice_cutoff_exceeds_20_db() {
        let fs = 10.0;
        let fc = 0.5;
        let x: Vec<f64> = (0..2000).map(|i| (2.0 * std::f64::consts::PI * 2.0 * fc * i as f64 / fs).sin()).collect();
        let y = low_pass(&x, fc, fs).unwrap();
        let gain = amplitude_at(&y, 2.0 * fc, fs) / amplitude_at(&x, 2.0 * fc, fs);
        assert!(20.0 * gain.log10() <= -20.0, "{} dB", 20.0 * gain.log10());
    }

    #[test]
    fn impulse_response_is_symmetric() {
        let mut x = vec![0.0; 401];
        x[200] = 1.0;
        let y = low_pass(&x, 0.1, 1.0).unwrap();
        for k in 1..150 {
            assert!((y[200 - k] - y[200 + k]).abs() < 1e-9, "lag {k}");
        }
    }

    #[test]
    fn rejects_cutoff_at_or_above_nyquist() {
        assert!(low_pass(&[1.0; 10], 0.5, 1.0).is_err());
        assert!(low_pass(&[1.0; 10], 0.0, 1.0).is_err());
        assert!(low_pass(&[], 0.2, 1.0).unwrap().is_empty());
    }
}
