//! Reference-free speech-to-reverberation modulation energy ratio: a
//! 23-channel gammatone filterbank (125 Hz to half the 8 kHz ceiling of
//! speech) yields per-channel temporal envelopes; their modulation
//! spectra are pooled into 8 log-spaced bands between 4 and 128 Hz and
//! the score is the dB ratio of the low four bands to the high four.
//! Reverberation smears energy into high modulation rates, lowering it.

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::hamming;
use crate::error::{BenetError, Result};
use crate::signal::TimeSignal;

const N_CHANNELS: usize = 23;
const F_LO: f64 = 125.0;
const F_HI: f64 = 8_000.0;
const N_MOD_BANDS: usize = 8;
const MOD_LO: f64 = 4.0;
const MOD_HI: f64 = 128.0;
/// Envelope analysis window and hop in seconds.
const MOD_WIN_SECONDS: f64 = 0.256;
const MOD_HOP_SECONDS: f64 = 0.064;

fn erb(fc: f64) -> f64 {
    24.7 * (4.37 * fc / 1000.0 + 1.0)
}

/// ERB-spaced gammatone center frequencies from `F_LO` to `F_HI`.
fn center_frequencies(fs: f64) -> Vec<f64> {
    let hi = F_HI.min(0.45 * fs);
    let scale = |f: f64| (f / 228.8455 + 1.0).ln();
    let unscale = |e: f64| 228.8455 * (e.exp() - 1.0);
    let (lo_e, hi_e) = (scale(F_LO), scale(hi));
    (0..N_CHANNELS)
        .map(|i| unscale(lo_e + (hi_e - lo_e) * i as f64 / (N_CHANNELS - 1) as f64))
        .collect()
}

/// Fourth-order gammatone magnitude response at frequency `f`.
fn gammatone_gain(f: f64, fc: f64) -> f64 {
    let b = 1.019 * erb(fc);
    (1.0 + ((f - fc) / b).powi(2)).powi(-2)
}

/// Speech-to-reverberation modulation energy ratio in dB.
pub fn srmr(signal: &TimeSignal) -> Result<f64> {
    let fs = signal.sample_rate as f64;
    if signal.duration() < 1.0 {
        return Err(BenetError::DegenerateSignal(format!(
            "need at least 1 s of signal, got {:.3} s",
            signal.duration()
        )));
    }
    let n = signal.len();
    let fft_len = n.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(fft_len);
    let ifft = planner.plan_fft_inverse(fft_len);

    let mut base = vec![Complex64::default(); fft_len];
    for (b, &s) in base.iter_mut().zip(&signal.samples) {
        *b = Complex64::new(s, 0.0);
    }
    fft.process(&mut base);

    let win_len = (MOD_WIN_SECONDS * fs).round() as usize;
    let hop = (MOD_HOP_SECONDS * fs).round() as usize;
    let window = hamming(win_len);
    let mod_fft_len = win_len.next_power_of_two();
    let mod_fft = planner.plan_fft_forward(mod_fft_len);
    let edges = band_edges();
    let hz_per_mod_bin = fs / mod_fft_len as f64;

    let mut band_energy = [0.0f64; N_MOD_BANDS];
    for &fc in &center_frequencies(fs) {
        // Analytic band signal: gammatone-weighted positive frequencies,
        // doubled; its magnitude is the channel envelope.
        let mut buf = vec![Complex64::default(); fft_len];
        for (k, b) in buf.iter_mut().enumerate() {
            let f = k as f64 * fs / fft_len as f64;
            if f > fs / 2.0 {
                break;
            }
            let scale = if k == 0 { 1.0 } else { 2.0 };
            *b = base[k] * (scale * gammatone_gain(f, fc));
        }
        ifft.process(&mut buf);
        let envelope: Vec<f64> = buf[..n].iter().map(|c| c.norm() / fft_len as f64).collect();

        let n_frames = if envelope.len() < win_len {
            0
        } else {
            (envelope.len() - win_len) / hop + 1
        };
        for j in 0..n_frames {
            let seg = &envelope[j * hop..j * hop + win_len];
            let mean = seg.iter().sum::<f64>() / win_len as f64;
            let mut mbuf = vec![Complex64::default(); mod_fft_len];
            for (i, (s, w)) in seg.iter().zip(&window).enumerate() {
                mbuf[i] = Complex64::new((s - mean) * w, 0.0);
            }
            mod_fft.process(&mut mbuf);
            for (k, c) in mbuf[..mod_fft_len / 2 + 1].iter().enumerate() {
                let f = k as f64 * hz_per_mod_bin;
                if let Some(b) = band_of(f, &edges) {
                    band_energy[b] += c.norm_sqr();
                }
            }
        }
    }
    let low: f64 = band_energy[..N_MOD_BANDS / 2].iter().sum();
    let high: f64 = band_energy[N_MOD_BANDS / 2..].iter().sum();
    if low <= 0.0 && high <= 0.0 {
        // No modulation content at all (e.g. silence): neutral ratio.
        return Ok(0.0);
    }
    Ok(10.0 * (low.max(1e-300) / high.max(1e-300)).log10())
}

/// Geometric band edges: N_MOD_BANDS log-spaced bands whose centers run
/// from MOD_LO to MOD_HI.
fn band_edges() -> [f64; N_MOD_BANDS + 1] {
    let ratio = (MOD_HI / MOD_LO).powf(1.0 / (N_MOD_BANDS - 1) as f64);
    let half = ratio.sqrt();
    let mut edges = [0.0; N_MOD_BANDS + 1];
    for (i, e) in edges.iter_mut().enumerate() {
        *e = MOD_LO * ratio.powi(i as i32 - 1) * half;
    }
    edges
}

fn band_of(f: f64, edges: &[f64; N_MOD_BANDS + 1]) -> Option<usize> {
    if f < edges[0] || f >= edges[N_MOD_BANDS] {
        return None;
    }
    Some(edges[1..].iter().position(|&e| f < e).unwrap_or(N_MOD_BANDS - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn modulated_noise(seed: u64, rate_hz: f64, seconds: f64) -> TimeSignal {
        let fs = 16_000u32;
        let n = (seconds * fs as f64) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..n)
            .map(|i| {
                let env = 0.55 + 0.45 * (2.0 * std::f64::consts::PI * rate_hz * i as f64 / fs as f64).sin();
                env * rng.gen_range(-0.5..0.5)
            })
            .collect();
        TimeSignal::new(samples, fs)
    }

    /// Unit impulse plus an exponentially decaying diffuse tail.
    fn synthetic_reverb(signal: &TimeSignal, rt60: f64, seed: u64) -> TimeSignal {
        let fs = signal.sample_rate as f64;
        let taps_n = (rt60 * fs) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut taps = vec![0.0; taps_n];
        taps[0] = 1.0;
        for (i, t) in taps.iter_mut().enumerate().skip(40) {
            let decay = (-6.9078 * i as f64 / (rt60 * fs)).exp();
            *t = 0.25 * decay * rng.gen_range(-1.0..1.0f64);
        }
        let rir = crate::signal::Rir::new(taps, signal.sample_rate);
        let mut out = crate::signal::convolve(signal, &rir).unwrap();
        out.samples.truncate(signal.len());
        out
    }

    #[test]
    fn slow_modulation_scores_higher_than_fast() {
        let slow = srmr(&modulated_noise(1, 5.0, 1.5)).unwrap();
        let fast = srmr(&modulated_noise(1, 90.0, 1.5)).unwrap();
        assert!(slow > fast, "slow {slow} !> fast {fast}");
    }

    #[test]
    fn reverberation_lowers_the_score() {
        let clean = modulated_noise(2, 4.0, 1.5);
        let wet = synthetic_reverb(&clean, 0.9, 3);
        let sc = srmr(&clean).unwrap();
        let sw = srmr(&wet).unwrap();
        assert!(sw < sc, "wet {sw} !< clean {sc}");
    }

    #[test]
    fn score_is_gain_invariant() {
        let x = modulated_noise(4, 6.0, 1.2);
        let doubled = TimeSignal::new(x.samples.iter().map(|v| v * 2.0).collect(), x.sample_rate);
        let a = srmr(&x).unwrap();
        let b = srmr(&doubled).unwrap();
        assert!((a - b).abs() < 0.01, "{a} vs {b}");
    }

    #[test]
    fn short_signal_is_an_error() {
        let x = modulated_noise(5, 6.0, 0.5);
        assert!(srmr(&x).is_err());
    }

    #[test]
    fn near_silence_is_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dither: Vec<f64> = (0..16_000).map(|_| rng.gen_range(-1e-9..1e-9)).collect();
        let s = srmr(&TimeSignal::new(dither, 16_000)).unwrap();
        assert!(s.is_finite());
    }

    #[test]
    fn modulation_bands_partition_the_range() {
        let edges = band_edges();
        assert!(edges.windows(2).all(|w| w[0] < w[1]));
        assert!(band_of(4.0, &edges) == Some(0));
        assert!(band_of(128.0, &edges).is_none() || band_of(127.9, &edges) == Some(7));
        assert!(band_of(1.0, &edges).is_none());
        assert!(band_of(500.0, &edges).is_none());
        // center frequencies land in their own bands
        let ratio = (MOD_HI / MOD_LO).powf(1.0 / (N_MOD_BANDS - 1) as f64);
        for i in 0..N_MOD_BANDS {
            let fc = MOD_LO * ratio.powi(i as i32);
            assert_eq!(band_of(fc * 0.999, &edges), Some(i), "center {fc}");
        }
    }

    #[test]
    fn gammatone_centers_span_the_speech_range() {
        let fc = center_frequencies(16_000.0);
        assert_eq!(fc.len(), 23);
        assert!((fc[0] - 125.0).abs() < 1.0);
        assert!(fc.windows(2).all(|w| w[0] < w[1]));
        assert!(*fc.last().unwrap() <= 8000.0);
    }
}
