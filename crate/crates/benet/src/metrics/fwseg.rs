//! Frequency-weighted segmental SNR: per 25 ms frame, band SNRs over 25
//! mel-spaced bands are weighted by the reference band magnitude raised
//! to gamma = 0.2, the frame score is clamped to [-10, 35] dB and scores
//! are averaged over the reference's active frames.

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{active_frames, aligned_pair, hamming};
use crate::error::{BenetError, Result};
use crate::signal::TimeSignal;

const N_BANDS: usize = 25;
const GAMMA: f64 = 0.2;
const FRAME_MIN_DB: f64 = -10.0;
const FRAME_MAX_DB: f64 = 35.0;

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank over `n_bins` positive-frequency bins.
fn mel_filterbank(fs: f64, fft_len: usize, n_bins: usize) -> Vec<Vec<(usize, f64)>> {
    let lo = hz_to_mel(50.0);
    let hi = hz_to_mel(fs / 2.0);
    let centers: Vec<f64> = (0..N_BANDS + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (N_BANDS + 1) as f64))
        .collect();
    let hz_per_bin = fs / fft_len as f64;
    (0..N_BANDS)
        .map(|b| {
            let (l, c, r) = (centers[b], centers[b + 1], centers[b + 2]);
            let mut taps = Vec::new();
            for k in 0..n_bins {
                let f = k as f64 * hz_per_bin;
                let w = if f <= l || f >= r {
                    0.0
                } else if f <= c {
                    (f - l) / (c - l)
                } else {
                    (r - f) / (r - c)
                };
                if w > 0.0 {
                    taps.push((k, w));
                }
            }
            taps
        })
        .collect()
}

/// Frequency-weighted segmental SNR of `degraded` against `reference`,
/// in dB; bounded in [-10, 35] by per-frame clamping. A silent degraded
/// frame scores the lower clamp regardless of the error spectrum.
pub fn fwseg_snr(reference: &TimeSignal, degraded: &TimeSignal) -> Result<f64> {
    let (r, d, frame, hop) = aligned_pair(reference, degraded)?;
    let frames = active_frames(r, frame, hop);
    if frames.is_empty() {
        return Err(BenetError::DegenerateSignal(
            "no active frames in reference".into(),
        ));
    }
    let fft_len = frame.next_power_of_two();
    let n_bins = fft_len / 2 + 1;
    let window = hamming(frame);
    let bank = mel_filterbank(reference.sample_rate as f64, fft_len, n_bins);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(fft_len);

    let spectrum = |x: &[f64]| -> Vec<f64> {
        let mut buf = vec![Complex64::default(); fft_len];
        for (i, (s, w)) in x.iter().zip(&window).enumerate() {
            buf[i] = Complex64::new(s * w, 0.0);
        }
        fft.process(&mut buf);
        buf[..n_bins].iter().map(|c| c.norm()).collect()
    };

    let mut total = 0.0;
    for &j in &frames {
        let start = j * hop;
        let rf = &r[start..start + frame];
        let df = &d[start..start + frame];
        let deg_energy: f64 = df.iter().map(|x| x * x).sum();
        let score = if deg_energy <= 0.0 {
            FRAME_MIN_DB
        } else {
            let sr = spectrum(rf);
            let sd = spectrum(df);
            let mut num = 0.0;
            let mut den = 0.0;
            for taps in &bank {
                let mut br = 0.0;
                let mut be = 0.0;
                for &(k, w) in taps {
                    br += w * sr[k] * sr[k];
                    be += w * (sr[k] - sd[k]).powi(2);
                }
                if br <= 0.0 {
                    continue;
                }
                let weight = br.sqrt().powf(GAMMA);
                let snr = 10.0 * (br / be.max(1e-300)).log10();
                num += weight * snr.clamp(FRAME_MIN_DB, FRAME_MAX_DB);
                den += weight;
            }
            if den > 0.0 {
                num / den
            } else {
                FRAME_MIN_DB
            }
        };
        total += score.clamp(FRAME_MIN_DB, FRAME_MAX_DB);
    }
    Ok(total / frames.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise_signal(seed: u64, seconds: f64) -> TimeSignal {
        let fs = 16_000u32;
        let n = (seconds * fs as f64) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TimeSignal::new((0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(), fs)
    }

    #[test]
    fn identical_signals_hit_the_upper_clamp() {
        let x = noise_signal(1, 0.5);
        let s = fwseg_snr(&x, &x).unwrap();
        assert!((s - 35.0).abs() < 1e-9, "self score {s}");
    }

    #[test]
    fn silent_degraded_hits_the_lower_clamp() {
        let x = noise_signal(2, 0.5);
        let zero = TimeSignal::new(vec![0.0; x.len()], x.sample_rate);
        let s = fwseg_snr(&x, &zero).unwrap();
        assert!((s + 10.0).abs() < 1e-9, "zero score {s}");
    }

    #[test]
    fn added_noise_strictly_lowers_the_score() {
        let x = noise_signal(3, 0.5);
        let noisy = crate::signal::add_noise(&x, 20.0, 99).unwrap();
        let clean = fwseg_snr(&x, &x).unwrap();
        let dirty = fwseg_snr(&x, &noisy).unwrap();
        assert!(dirty < clean, "{dirty} !< {clean}");
        assert!((-10.0..=35.0).contains(&dirty));
    }

    #[test]
    fn score_decreases_as_noise_grows() {
        let x = noise_signal(4, 0.5);
        let hi = fwseg_snr(&x, &crate::signal::add_noise(&x, 30.0, 1).unwrap()).unwrap();
        let mid = fwseg_snr(&x, &crate::signal::add_noise(&x, 15.0, 1).unwrap()).unwrap();
        let lo = fwseg_snr(&x, &crate::signal::add_noise(&x, 0.0, 1).unwrap()).unwrap();
        assert!(hi > mid && mid > lo, "{hi} {mid} {lo}");
    }

    #[test]
    fn silent_reference_is_an_error() {
        let silent = TimeSignal::new(vec![0.0; 8000], 16_000);
        assert!(fwseg_snr(&silent, &noise_signal(5, 0.5)).is_err());
    }

    #[test]
    fn mel_filterbank_covers_every_band() {
        let bank = mel_filterbank(16_000.0, 512, 257);
        assert_eq!(bank.len(), 25);
        for (i, taps) in bank.iter().enumerate() {
            assert!(!taps.is_empty(), "band {i} has no bins");
            for &(_, w) in taps {
                assert!(w > 0.0 && w <= 1.0);
            }
        }
    }
}
