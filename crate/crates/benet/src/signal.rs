//! Waveform i/o, convolution with impulse responses and seeded noise
//! injection.

use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use crate::error::{BenetError, Result};

/// A sampled waveform. Samples are dimensionless amplitudes, nominally in
/// [-1, 1]; everything in this crate runs at 16 kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl TimeSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        TimeSignal {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean squared amplitude.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum::<f64>()
    }

    /// Truncates or zero-pads to exactly `n` samples.
    pub fn fit_len(&self, n: usize) -> TimeSignal {
        let mut samples = self.samples.clone();
        samples.resize(n, 0.0);
        TimeSignal::new(samples, self.sample_rate)
    }
}

/// A room impulse response.
#[derive(Debug, Clone)]
pub struct Rir {
    pub taps: Vec<f64>,
    pub sample_rate: u32,
}

impl Rir {
    pub fn new(taps: Vec<f64>, sample_rate: u32) -> Self {
        Rir { taps, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

/// Reads a PCM wav file (16-bit int or 32-bit float, 1-2 channels).
/// Returns one `TimeSignal` per channel; samples are scaled to [-1, 1].
pub fn read_wav(path: &Path) -> Result<Vec<TimeSignal>> {
    if !path.exists() {
        return Err(BenetError::FileNotFound(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(source) => BenetError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => BenetError::UnsupportedWav {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    })?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(BenetError::UnsupportedWav {
            path: path.to_path_buf(),
            detail: format!("{} channels", spec.channels),
        });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| BenetError::UnsupportedWav {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| BenetError::UnsupportedWav {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?,
        (fmt, bits) => {
            return Err(BenetError::UnsupportedWav {
                path: path.to_path_buf(),
                detail: format!("{:?} {} bit", fmt, bits),
            })
        }
    };
    if interleaved.is_empty() {
        return Err(BenetError::EmptyAudio(path.to_path_buf()));
    }
    let nch = spec.channels as usize;
    let mut channels = vec![Vec::with_capacity(interleaved.len() / nch); nch];
    for (i, s) in interleaved.into_iter().enumerate() {
        channels[i % nch].push(s);
    }
    Ok(channels
        .into_iter()
        .map(|c| TimeSignal::new(c, spec.sample_rate))
        .collect())
}

/// Reads a wav file that must be mono.
pub fn read_wav_mono(path: &Path) -> Result<TimeSignal> {
    let mut channels = read_wav(path)?;
    if channels.len() != 1 {
        return Err(BenetError::UnsupportedWav {
            path: path.to_path_buf(),
            detail: format!("expected mono, got {} channels", channels.len()),
        });
    }
    Ok(channels.remove(0))
}

fn quantize16(x: f64) -> i16 {
    // Clip, don't wrap: 1.0 maps to the max positive code.
    let v = (x * 32768.0).round();
    v.clamp(-32768.0, 32767.0) as i16
}

/// Writes a 16-bit PCM wav file; samples are clipped to [-1, 1 - 2^-15]
/// before quantization.
pub fn write_wav(path: &Path, signal: &TimeSignal) -> Result<()> {
    write_wav_multi(path, std::slice::from_ref(signal))
}

/// Writes an interleaved multi-channel 16-bit PCM wav file.
pub fn write_wav_multi(path: &Path, channels: &[TimeSignal]) -> Result<()> {
    assert!(!channels.is_empty());
    let sample_rate = channels[0].sample_rate;
    let n = channels.iter().map(|c| c.len()).max().unwrap();
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let io_err = |e: hound::Error| match e {
        hound::Error::IoError(source) => BenetError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => BenetError::UnsupportedWav {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(io_err)?;
    for i in 0..n {
        for ch in channels {
            let s = ch.samples.get(i).copied().unwrap_or(0.0);
            writer.write_sample(quantize16(s)).map_err(io_err)?;
        }
    }
    writer.finalize().map_err(io_err)?;
    Ok(())
}

/// Full linear convolution; output length is `len(signal) + len(rir) - 1`.
/// The reverberant tail is kept in full.
pub fn convolve(signal: &TimeSignal, rir: &Rir) -> Result<TimeSignal> {
    if signal.sample_rate != rir.sample_rate {
        return Err(BenetError::SampleRateMismatch(
            signal.sample_rate,
            rir.sample_rate,
        ));
    }
    let out = fft_convolve(&signal.samples, &rir.taps);
    Ok(TimeSignal::new(out, signal.sample_rate))
}

/// FFT-based full linear convolution of two real sequences.
pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let fft_len = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(fft_len);
    let ifft = planner.plan_fft_inverse(fft_len);

    let mut fa: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fa.resize(fft_len, Complex64::new(0.0, 0.0));
    let mut fb: Vec<Complex64> = b.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fb.resize(fft_len, Complex64::new(0.0, 0.0));
    fft.process(&mut fa);
    fft.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(fb.iter()) {
        *x *= y;
    }
    ifft.process(&mut fa);
    let scale = 1.0 / fft_len as f64;
    fa.iter().take(out_len).map(|c| c.re * scale).collect()
}

/// Adds white Gaussian noise at the requested global SNR. The generated
/// noise is normalized to exact unit power before scaling, so the measured
/// SNR over the file equals `snr_db`. `f64::INFINITY` disables the noise.
pub fn add_noise(signal: &TimeSignal, snr_db: f64, seed: u64) -> Result<TimeSignal> {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return Ok(signal.clone());
    }
    let p_sig = signal.power();
    if p_sig <= 0.0 {
        return Err(BenetError::DegenerateSignal(
            "zero-energy signal: SNR undefined".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise: Vec<f64> = (0..signal.len())
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let p_noise = noise.iter().map(|x| x * x).sum::<f64>() / noise.len() as f64;
    let target = p_sig / 10f64.powf(snr_db / 10.0);
    let gain = (target / p_noise).sqrt();
    for n in noise.iter_mut() {
        *n *= gain;
    }
    let samples = signal
        .samples
        .iter()
        .zip(noise.iter())
        .map(|(s, n)| s + n)
        .collect();
    Ok(TimeSignal::new(samples, signal.sample_rate))
}
