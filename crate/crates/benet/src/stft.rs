//! Short-time Fourier analysis/synthesis with the two parameter sets used
//! by the pipeline: a 400/160/512 beamformer preset and a 1024/256/1024
//! interaural preset.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{BenetError, Result};
use crate::signal::TimeSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub fft_len: usize,
}

impl StftConfig {
    /// 400-sample Hamming frames, 160 hop, 512-point FFT.
    pub const BEAMFORMER: StftConfig = StftConfig {
        frame_len: 400,
        hop: 160,
        fft_len: 512,
    };

    /// 1024-sample Hamming frames, 256 hop, 1024-point FFT.
    pub const INTERAURAL: StftConfig = StftConfig {
        frame_len: 1024,
        hop: 256,
        fft_len: 1024,
    };

    /// Number of retained one-sided bins.
    pub fn bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    pub fn num_frames(&self, num_samples: usize) -> usize {
        if num_samples < self.frame_len {
            0
        } else {
            (num_samples - self.frame_len) / self.hop + 1
        }
    }

    /// Center frequency in Hz of one-sided bin `f`.
    pub fn bin_hz(&self, f: usize, sample_rate: u32) -> f64 {
        f as f64 * sample_rate as f64 / self.fft_len as f64
    }
}

/// One-sided complex STFT, stored bin-major: `bins[f][t]`.
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram {
    pub bins: ndarray::Array2<Complex64>,
    pub config: StftConfig,
    pub sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn num_bins(&self) -> usize {
        self.bins.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.bins.ncols()
    }

    pub fn same_shape(&self, other: &ComplexSpectrogram) -> bool {
        self.bins.dim() == other.bins.dim() && self.config == other.config
    }
}

/// `w(n) = 0.54 - 0.46 cos(2*pi*n / (L-1))`, symmetric.
pub fn hamming_window(length: usize) -> Result<Vec<f64>> {
    if length < 2 {
        return Err(BenetError::Config(format!(
            "window length {length} < 2"
        )));
    }
    let n_max = (length - 1) as f64;
    Ok((0..length)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / n_max).cos())
        .collect())
}

/// Forward STFT. Frame `t` covers samples `[t*hop, t*hop + L)`; frames are
/// Hamming-windowed, zero-padded to `fft_len` and transformed; one-sided
/// bins are kept. No centering padding: the first frame starts at sample 0.
pub fn stft(signal: &TimeSignal, config: StftConfig) -> Result<ComplexSpectrogram> {
    let num_frames = config.num_frames(signal.len());
    if num_frames == 0 {
        return Err(BenetError::DegenerateSignal(format!(
            "signal of {} samples is shorter than one {}-sample frame",
            signal.len(),
            config.frame_len
        )));
    }
    let window = hamming_window(config.frame_len)?;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(config.fft_len);
    let n_bins = config.bins();
    let mut bins = ndarray::Array2::default((n_bins, num_frames));
    let mut buf = vec![Complex64::default(); config.fft_len];
    for t in 0..num_frames {
        let start = t * config.hop;
        for (n, b) in buf.iter_mut().enumerate() {
            *b = if n < config.frame_len {
                Complex64::new(signal.samples[start + n] * window[n], 0.0)
            } else {
                Complex64::default()
            };
        }
        fft.process(&mut buf);
        for f in 0..n_bins {
            bins[[f, t]] = buf[f];
        }
    }
    Ok(ComplexSpectrogram {
        bins,
        config,
        sample_rate: signal.sample_rate,
    })
}

/// Weighted overlap-add inverse STFT. Each inverse frame is re-windowed
/// with the analysis window, accumulated, and divided by the summed
/// squared window; interior samples of an unmodified forward transform
/// reconstruct the input.
pub fn istft(spec: &ComplexSpectrogram) -> Result<TimeSignal> {
    let config = spec.config;
    if spec.num_bins() != config.bins() {
        return Err(BenetError::ShapeMismatch(format!(
            "{} bins vs {} expected for fft_len {}",
            spec.num_bins(),
            config.bins(),
            config.fft_len
        )));
    }
    let num_frames = spec.num_frames();
    let out_len = (num_frames.saturating_sub(1)) * config.hop + config.frame_len;
    let window = hamming_window(config.frame_len)?;
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(config.fft_len);
    let mut acc = vec![0.0f64; out_len];
    let mut norm = vec![0.0f64; out_len];
    let mut buf = vec![Complex64::default(); config.fft_len];
    let n_bins = config.bins();
    for t in 0..num_frames {
        for f in 0..n_bins {
            buf[f] = spec.bins[[f, t]];
        }
        // Conjugate symmetry restores the two-sided spectrum.
        for f in n_bins..config.fft_len {
            buf[f] = spec.bins[[config.fft_len - f, t]].conj();
        }
        ifft.process(&mut buf);
        let scale = 1.0 / config.fft_len as f64;
        let start = t * config.hop;
        for n in 0..config.frame_len {
            acc[start + n] += buf[n].re * scale * window[n];
            norm[start + n] += window[n] * window[n];
        }
    }
    for (a, w) in acc.iter_mut().zip(norm.iter()) {
        if *w > 1e-12 {
            *a /= *w;
        }
    }
    Ok(TimeSignal::new(acc, spec.sample_rate))
}

/// Elementwise real-valued mask application.
pub fn apply_mask(
    spec: &ComplexSpectrogram,
    mask: &ndarray::Array2<f64>,
) -> Result<ComplexSpectrogram> {
    if spec.bins.dim() != mask.dim() {
        return Err(BenetError::ShapeMismatch(format!(
            "spectrogram {:?} vs mask {:?}",
            spec.bins.dim(),
            mask.dim()
        )));
    }
    let mut out = spec.clone();
    ndarray::Zip::from(&mut out.bins).and(mask).for_each(|b, &m| *b *= m);
    Ok(out)
}
